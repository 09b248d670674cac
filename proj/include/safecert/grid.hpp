#pragma once

// Occupancy grids over the analysis box. The set represented by a grid is the
// union of its closed occupied cells.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "safecert/errors.hpp"
#include "safecert/predicate.hpp"
#include "safecert/state.hpp"

namespace safecert {

/// Cell layout of a box: resolution per axis, linear index with axis 0
/// varying fastest.
class GridGeometry {
public:
    GridGeometry(Box box, std::vector<std::size_t> resolution) : box_(std::move(box)), res_(std::move(resolution)) {
        if (res_.size() != box_.dim()) throw Error("grid resolution must have one entry per axis");
        strides_.resize(res_.size());
        total_ = 1;
        for (std::size_t k = 0; k < res_.size(); ++k) {
            if (res_[k] < 2) throw Error("grid resolution must be at least 2 per axis");
            strides_[k] = total_;
            total_ *= res_[k];
            width_.push_back(box_[k].width() / static_cast<double>(res_[k]));
        }
        double d2 = 0.0;
        for (double w : width_) d2 += w * w;
        half_diagonal_ = 0.5 * std::sqrt(d2);
    }

    std::size_t dim() const noexcept { return res_.size(); }
    const Box& box() const noexcept { return box_; }
    const std::vector<std::size_t>& resolution() const noexcept { return res_; }
    std::size_t size() const noexcept { return total_; }
    double cell_width(std::size_t axis) const noexcept { return width_[axis]; }
    double min_cell_width() const noexcept { return *std::min_element(width_.begin(), width_.end()); }
    double half_diagonal() const noexcept { return half_diagonal_; }
    std::size_t stride(std::size_t axis) const noexcept { return strides_[axis]; }

    std::size_t coord(std::size_t index, std::size_t axis) const noexcept { return (index / strides_[axis]) % res_[axis]; }

    std::size_t index_of(std::span<const std::size_t> coords) const noexcept {
        std::size_t idx = 0;
        for (std::size_t k = 0; k < coords.size(); ++k) idx += coords[k] * strides_[k];
        return idx;
    }

    State cell_center(std::size_t index) const {
        State c(dim());
        for (std::size_t k = 0; k < dim(); ++k) c[k] = box_[k].lo + (static_cast<double>(coord(index, k)) + 0.5) * width_[k];
        return c;
    }

    State cell_lo(std::size_t index) const {
        State c(dim());
        for (std::size_t k = 0; k < dim(); ++k) c[k] = box_[k].lo + static_cast<double>(coord(index, k)) * width_[k];
        return c;
    }

    /// Cell along one axis containing coordinate v (clamped to the grid).
    long axis_cell(std::size_t axis, double v) const noexcept {
        const double r = (v - box_[axis].lo) / width_[axis];
        return static_cast<long>(std::floor(r));
    }

    /// Cell containing x (half-open cells; the upper face belongs to the last cell).
    std::optional<std::size_t> locate(const State& x) const noexcept {
        std::size_t idx = 0;
        for (std::size_t k = 0; k < dim(); ++k) {
            if (!(x[k] >= box_[k].lo && x[k] <= box_[k].hi)) return std::nullopt;
            long c = axis_cell(k, x[k]);
            c = std::clamp<long>(c, 0, static_cast<long>(res_[k]) - 1);
            idx += static_cast<std::size_t>(c) * strides_[k];
        }
        return idx;
    }

    /// Squared distance from x to the closed cell `index`.
    double distance2_to_cell(const State& x, std::size_t index) const noexcept {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim(); ++k) {
            const double lo = box_[k].lo + static_cast<double>(coord(index, k)) * width_[k];
            const double hi = lo + width_[k];
            const double d = x[k] < lo ? lo - x[k] : (x[k] > hi ? x[k] - hi : 0.0);
            d2 += d * d;
        }
        return d2;
    }

    /// Calls fn(index) for every cell in the inclusive per-axis coordinate
    /// ranges [lo[k], hi[k]] (already clipped to the grid).
    template <class Fn>
    void for_each_in_range(const std::vector<long>& lo, const std::vector<long>& hi, Fn&& fn) const {
        const std::size_t n = dim();
        for (std::size_t k = 0; k < n; ++k)
            if (lo[k] > hi[k]) return;
        std::vector<long> c = lo;
        for (;;) {
            std::size_t idx = 0;
            for (std::size_t k = 0; k < n; ++k) idx += static_cast<std::size_t>(c[k]) * strides_[k];
            fn(idx);
            std::size_t k = 0;
            while (k < n) {
                if (++c[k] <= hi[k]) break;
                c[k] = lo[k];
                ++k;
            }
            if (k == n) return;
        }
    }

    /// Calls fn(neighbor) for every cell within Chebyshev distance `radius`
    /// of `index`, excluding the cell itself.
    template <class Fn>
    void for_each_neighbor(std::size_t index, long radius, Fn&& fn) const {
        std::vector<long> lo(dim()), hi(dim());
        for (std::size_t k = 0; k < dim(); ++k) {
            const long c = static_cast<long>(coord(index, k));
            lo[k] = std::max(0L, c - radius);
            hi[k] = std::min(static_cast<long>(res_[k]) - 1, c + radius);
        }
        for_each_in_range(lo, hi, [&](std::size_t j) {
            if (j != index) fn(j);
        });
    }

    /// Calls fn(neighbor) for the 2n face neighbors present in the grid.
    template <class Fn>
    void for_each_face_neighbor(std::size_t index, Fn&& fn) const {
        for (std::size_t k = 0; k < dim(); ++k) {
            const std::size_t c = coord(index, k);
            if (c > 0) fn(index - strides_[k]);
            if (c + 1 < res_[k]) fn(index + strides_[k]);
        }
    }

    /// Whether `index` touches the outer face of the grid.
    bool on_outer_layer(std::size_t index) const noexcept {
        for (std::size_t k = 0; k < dim(); ++k) {
            const std::size_t c = coord(index, k);
            if (c == 0 || c + 1 == res_[k]) return true;
        }
        return false;
    }

    friend bool operator==(const GridGeometry& a, const GridGeometry& b) noexcept {
        return a.box_ == b.box_ && a.res_ == b.res_;
    }

private:
    Box box_;
    std::vector<std::size_t> res_;
    std::vector<std::size_t> strides_;
    std::vector<double> width_;
    std::size_t total_ = 0;
    double half_diagonal_ = 0.0;
};

class OccupancyGrid {
public:
    explicit OccupancyGrid(std::shared_ptr<const GridGeometry> geometry, bool fill = false)
        : geo_(std::move(geometry)), cells_(geo_->size(), fill ? 1 : 0) {}

    explicit OccupancyGrid(const GridGeometry& geometry, bool fill = false)
        : OccupancyGrid(std::make_shared<const GridGeometry>(geometry), fill) {}

    const GridGeometry& geometry() const noexcept { return *geo_; }
    const std::shared_ptr<const GridGeometry>& geometry_ptr() const noexcept { return geo_; }
    std::size_t size() const noexcept { return cells_.size(); }

    bool operator[](std::size_t i) const noexcept { return cells_[i] != 0; }
    void set(std::size_t i, bool v = true) noexcept { cells_[i] = v ? 1 : 0; }

    /// Some propagated image left the domain box while building this grid.
    bool escaped() const noexcept { return escaped_; }
    void set_escaped(bool v = true) noexcept { escaped_ = v; }

    std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), 1)); }
    bool empty() const noexcept { return std::find(cells_.begin(), cells_.end(), 1) == cells_.end(); }
    double occupied_fraction() const noexcept { return static_cast<double>(count()) / static_cast<double>(size()); }

    std::vector<std::size_t> occupied() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i]) out.push_back(i);
        return out;
    }

    /// Membership of x in the union of closed occupied cells.
    bool contains_point(const State& x) const {
        const auto& g = *geo_;
        std::vector<long> lo(g.dim()), hi(g.dim());
        for (std::size_t k = 0; k < g.dim(); ++k) {
            if (x[k] < g.box()[k].lo || x[k] > g.box()[k].hi) return false;
            const double r = (x[k] - g.box()[k].lo) / g.cell_width(k);
            const long c = static_cast<long>(std::floor(r));
            lo[k] = std::max(0L, (r == std::floor(r)) ? c - 1 : c);
            hi[k] = std::min(static_cast<long>(g.resolution()[k]) - 1, c);
        }
        bool hit = false;
        g.for_each_in_range(lo, hi, [&](std::size_t j) { hit = hit || cells_[j]; });
        return hit;
    }

    /// Marks every cell meeting the closed ball B(center, r); returns true when
    /// the ball is not contained in the domain box.
    bool mark_ball(const State& center, double r) {
        const auto& g = *geo_;
        bool leaves = false;
        std::vector<long> lo(g.dim()), hi(g.dim());
        for (std::size_t k = 0; k < g.dim(); ++k) {
            const auto& iv = g.box()[k];
            if (center[k] - r < iv.lo || center[k] + r > iv.hi) leaves = true;
            lo[k] = std::max(0L, g.axis_cell(k, center[k] - r));
            hi[k] = std::min(static_cast<long>(g.resolution()[k]) - 1, g.axis_cell(k, center[k] + r));
        }
        const double r2 = r * r;
        g.for_each_in_range(lo, hi, [&](std::size_t j) {
            if (g.distance2_to_cell(center, j) <= r2) cells_[j] = 1;
        });
        return leaves;
    }

    friend bool same_shape(const OccupancyGrid& a, const OccupancyGrid& b) noexcept {
        return a.geo_ == b.geo_ || *a.geo_ == *b.geo_;
    }

    friend bool operator==(const OccupancyGrid& a, const OccupancyGrid& b) noexcept {
        return same_shape(a, b) && a.cells_ == b.cells_;
    }

    const std::vector<std::uint8_t>& raw() const noexcept { return cells_; }

private:
    std::shared_ptr<const GridGeometry> geo_;
    std::vector<std::uint8_t> cells_;
    bool escaped_ = false;
};

namespace detail {
inline void require_same_shape(const OccupancyGrid& a, const OccupancyGrid& b, const char* op) {
    if (!same_shape(a, b)) throw Error(std::string(op) + ": grid shape mismatch");
}
}  // namespace detail

/// True iff every occupied cell of a is occupied in b.
inline bool grid_subset(const OccupancyGrid& a, const OccupancyGrid& b) {
    detail::require_same_shape(a, b, "grid_subset");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && !b[i]) return false;
    return true;
}

inline OccupancyGrid set_union(const OccupancyGrid& a, const OccupancyGrid& b) {
    detail::require_same_shape(a, b, "set_union");
    OccupancyGrid r = a;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (b[i]) r.set(i);
    r.set_escaped(a.escaped() || b.escaped());
    return r;
}

inline OccupancyGrid set_intersection(const OccupancyGrid& a, const OccupancyGrid& b) {
    detail::require_same_shape(a, b, "set_intersection");
    OccupancyGrid r(a.geometry_ptr());
    for (std::size_t i = 0; i < a.size(); ++i) r.set(i, a[i] && b[i]);
    return r;
}

inline OccupancyGrid complement(const OccupancyGrid& a) {
    OccupancyGrid r(a.geometry_ptr());
    for (std::size_t i = 0; i < a.size(); ++i) r.set(i, !a[i]);
    return r;
}

inline bool disjoint(const OccupancyGrid& a, const OccupancyGrid& b) {
    detail::require_same_shape(a, b, "disjoint");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && b[i]) return false;
    return true;
}

enum class SetOp { union_, intersection, disjointness };

/// Cellwise set algebra; disjointness yields a grid-free boolean.
struct SetAlgebraResult {
    std::optional<OccupancyGrid> grid;
    bool disjoint = false;
};

inline SetAlgebraResult set_algebra(SetOp op, const OccupancyGrid& a, const OccupancyGrid& b) {
    switch (op) {
        case SetOp::union_: return {set_union(a, b), false};
        case SetOp::intersection: return {set_intersection(a, b), false};
        case SetOp::disjointness: return {std::nullopt, disjoint(a, b)};
    }
    return {};
}

/// Grows the occupied region by `cells` layers (Chebyshev neighborhood).
inline OccupancyGrid dilate(const OccupancyGrid& a, std::size_t cells) {
    if (cells == 0) return a;
    OccupancyGrid r = a;
    const auto& g = a.geometry();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i]) g.for_each_neighbor(i, static_cast<long>(cells), [&](std::size_t j) { r.set(j); });
    return r;
}

/// Sampling rasterization: a cell is occupied iff the predicate holds at one
/// of its 2^n corners or at its center. This is not a guaranteed cover of the
/// predicate set; `dilation` adds that many cell layers on top.
inline OccupancyGrid rasterize_set(const SetPredicate& pred, std::shared_ptr<const GridGeometry> geometry, std::size_t dilation = 0) {
    OccupancyGrid r(geometry);
    const auto& g = *geometry;
    const std::size_t n = g.dim();
    const std::size_t corners = std::size_t{1} << n;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (pred(g.cell_center(i))) {
            r.set(i);
            continue;
        }
        const State lo = g.cell_lo(i);
        for (std::size_t c = 0; c < corners; ++c) {
            State x = lo;
            for (std::size_t k = 0; k < n; ++k)
                if (c & (std::size_t{1} << k)) x[k] += g.cell_width(k);
            if (pred(x)) {
                r.set(i);
                break;
            }
        }
    }
    return dilate(r, dilation);
}

inline OccupancyGrid rasterize_set(const SetPredicate& pred, const GridGeometry& geometry, std::size_t dilation = 0) {
    return rasterize_set(pred, std::make_shared<const GridGeometry>(geometry), dilation);
}

/// Grid dump: metadata lines, a column header, then one row per cell in
/// linear index order.
inline void write_grid_csv(std::ostream& os, const OccupancyGrid& grid) {
    const auto& g = grid.geometry();
    os.precision(17);
    os << "# domain ";
    for (std::size_t k = 0; k < g.dim(); ++k) os << (k ? ";" : "") << g.box()[k].lo << "," << g.box()[k].hi;
    os << "\n# resolution ";
    for (std::size_t k = 0; k < g.dim(); ++k) os << (k ? "," : "") << g.resolution()[k];
    os << "\n";
    for (std::size_t k = 0; k < g.dim(); ++k) os << "cell_index_" << k + 1 << ",";
    os << "occupied\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t k = 0; k < g.dim(); ++k) os << g.coord(i, k) << ",";
        os << (grid[i] ? 1 : 0) << "\n";
    }
}

/// Reads a grid written by write_grid_csv.
inline OccupancyGrid read_grid_csv(std::istream& is) {
    std::string line;
    std::vector<Interval> axes;
    std::vector<std::size_t> res;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) { return ParseError("grid csv: " + what, lineno, 1); };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.rfind("# domain ", 0) == 0) {
            std::stringstream ss(line.substr(9));
            std::string part;
            while (std::getline(ss, part, ';')) {
                Interval iv;
                char comma = 0;
                std::stringstream ps(part);
                if (!(ps >> iv.lo >> comma >> iv.hi) || comma != ',') throw fail("bad domain");
                axes.push_back(iv);
            }
        } else if (line.rfind("# resolution ", 0) == 0) {
            std::stringstream ss(line.substr(13));
            std::string part;
            while (std::getline(ss, part, ',')) res.push_back(static_cast<std::size_t>(std::stoul(part)));
        } else if (!line.empty() && line[0] != '#') {
            break;  // column header
        }
    }
    if (axes.empty() || axes.size() != res.size()) throw fail("missing or inconsistent metadata");
    OccupancyGrid grid(std::make_shared<const GridGeometry>(Box(axes), res));
    const auto& g = grid.geometry();
    std::vector<std::size_t> coords(g.dim());
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        for (std::size_t k = 0; k < g.dim(); ++k) {
            if (!std::getline(ss, field, ',')) throw fail("short row");
            coords[k] = static_cast<std::size_t>(std::stoul(field));
            if (coords[k] >= g.resolution()[k]) throw fail("cell index out of range");
        }
        if (!std::getline(ss, field, ',')) throw fail("missing occupancy");
        grid.set(g.index_of(coords), field == "1");
    }
    return grid;
}

}  // namespace safecert
