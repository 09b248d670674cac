#pragma once

// Exit-time function of a certificate grid V. For x inside V the backward
// flow leaves V at some t < 0; for x outside the forward flow enters V at
// some t > 0. nu(x) = -t in both cases, so nu > 0 inside and nu < 0 outside,
// and nu(phi(x, s)) = nu(x) + s along trajectories.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "safecert/flow.hpp"
#include "safecert/grid.hpp"
#include "safecert/parallel.hpp"

namespace safecert {

struct CrossingOptions {
    double t_search = 2.0;
    double tol = 1e-6;
    std::size_t scan_steps = 256;
    /// Crossings closer than this to the primary one are attributed to the
    /// staircase shape of the cell boundary and not reported as extra.
    double window = 0.0;
    IntegratorConfig integrator{};
};

struct CrossingResult {
    std::optional<double> time;  // phi(x, time) lies on the boundary of V
    std::vector<double> extra;   // further crossings found by the scan
    int left_domain = 0;         // -1 / +1: the primary scan left the box first

    std::optional<double> nu() const {
        if (!time) return std::nullopt;
        return -*time;
    }
};

namespace detail {

// Uniform cubic B-spline weights (and optionally derivatives) at fraction t.
inline void bspline_weights(double t, double* w, double* dw) noexcept {
    const double s = 1.0 - t;
    w[0] = s * s * s / 6.0;
    w[1] = (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0;
    w[2] = (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0;
    w[3] = t * t * t / 6.0;
    if (!dw) return;
    dw[0] = -0.5 * s * s;
    dw[1] = 1.5 * t * t - 2.0 * t;
    dw[2] = -1.5 * t * t + t + 0.5;
    dw[3] = 0.5 * t * t;
}

}  // namespace detail

/// Inside/outside test for V. With smoothing r > 0 the cell indicator is
/// convolved with a bump of radius r cells, interpolated by cubic B-splines
/// between cell centers and thresholded at 1/2. That replaces the staircase boundary by
/// a curve the flow crosses once; with r = 0 membership is the occupied cells.
class Membership {
public:
    explicit Membership(OccupancyGrid v, double smoothing_cells = 0.0) : v_(std::move(v)), r_(smoothing_cells) {
        if (r_ < 0.0) throw Error("membership smoothing must be non-negative");
        if (r_ == 0.0) return;
        const auto& g = v_.geometry();
        level_.assign(v_.size(), 0.0);
        const long reach = static_cast<long>(std::ceil(r_));
        parallel_for(v_.size(), [&](std::size_t c) {
            double num = 0.0, den = 0.0;
            auto add = [&](std::size_t j) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < g.dim(); ++k) {
                    const double d = static_cast<double>(g.coord(j, k)) - static_cast<double>(g.coord(c, k));
                    d2 += d * d;
                }
                const double q = d2 / (r_ * r_);
                if (q >= 1.0) return;
                const double w = std::exp(-1.0 / (1.0 - q));
                num += w * (v_[j] ? 1.0 : 0.0);
                den += w;
            };
            add(c);
            g.for_each_neighbor(c, reach, add);
            level_[c] = num / den;
        });
    }

    const OccupancyGrid& grid() const noexcept { return v_; }
    double smoothing() const noexcept { return r_; }

    bool operator()(const State& x) const {
        const auto& g = v_.geometry();
        if (r_ == 0.0) {
            const auto c = g.locate(x);
            return c && v_[*c];
        }
        if (!g.box().contains(x)) return false;
        const std::size_t n = g.dim();
        std::array<long, kMaxDim> base{};
        std::array<std::array<double, 4>, kMaxDim> w{};
        for (std::size_t k = 0; k < n; ++k) {
            const double u = (x[k] - g.box()[k].lo) / g.cell_width(k) - 0.5;
            base[k] = static_cast<long>(std::floor(u));
            detail::bspline_weights(u - static_cast<double>(base[k]), w[k].data(), nullptr);
        }
        double acc = 0.0;
        const std::size_t total = std::size_t{1} << (2 * n);
        for (std::size_t code = 0; code < total; ++code) {
            std::size_t idx = 0;
            double wt = 1.0;
            std::size_t c = code;
            for (std::size_t k = 0; k < n; ++k, c >>= 2) {
                const long last = static_cast<long>(g.resolution()[k]) - 1;
                const long j = std::clamp(base[k] - 1 + static_cast<long>(c & 3U), 0L, last);
                idx += static_cast<std::size_t>(j) * g.stride(k);
                wt *= w[k][c & 3U];
            }
            acc += wt * level_[idx];
        }
        return acc >= 0.5;
    }

private:
    OccupancyGrid v_;
    double r_;
    std::vector<double> level_;
};

namespace detail {

// Scans one direction and appends every membership change, refined by
// bisection. Returns true when the scan left the box.
inline bool scan_crossings(const SafetyProblem& p, const Membership& v, const State& x, double dir,
                           const CrossingOptions& opt, std::vector<double>& out) {
    const double dt = opt.t_search / static_cast<double>(opt.scan_steps);
    State y = x;
    bool member = v(x);
    for (std::size_t j = 0; j < opt.scan_steps; ++j) {
        const auto step = propagate(p, y, dir * dt, opt.integrator);
        if (!step.ok()) return true;
        const bool m = v(step.state);
        if (m != member) {
            double lo = 0.0, hi = dt;
            while (hi - lo > opt.tol) {
                const double mid = 0.5 * (lo + hi);
                const auto z = propagate(p, y, dir * mid, opt.integrator);
                if (z.ok() && v(z.state) == member)
                    lo = mid;
                else
                    hi = mid;
            }
            out.push_back(dir * (static_cast<double>(j) * dt + 0.5 * (lo + hi)));
            member = m;
        }
        y = step.state;
    }
    return false;
}

}  // namespace detail

/// Signed time T at which the flow through x enters V for the last time
/// within [-t_search, t_search]: phi(x, t) lies in V for every t in
/// (T, t_search]. Taking the last entry (rather than the nearest crossing)
/// makes T(phi(x, s)) = T(x) - s hold exactly when a trajectory crosses the
/// staircase cell boundary several times. Other crossings are reported in
/// `extra` unless they lie within `window` of T.
inline CrossingResult crossing_time(const SafetyProblem& p, const Membership& v, const State& x,
                                    const CrossingOptions& opt = {}) {
    if (!p.domain().contains(x)) throw Error("crossing_time: point outside the domain box");
    if (!(opt.t_search > 0.0) || opt.scan_steps == 0 || !(opt.tol > 0.0))
        throw Error("crossing_time: invalid scan parameters");
    std::vector<double> forward, backward;
    const bool left_fwd = detail::scan_crossings(p, v, x, 1.0, opt, forward);
    const bool left_bwd = detail::scan_crossings(p, v, x, -1.0, opt, backward);

    CrossingResult res;
    const bool inside = v(x);
    // Membership at the end of the forward scan.
    const bool ends_inside = (forward.size() % 2 == 0) == inside;
    std::vector<double> all(backward.rbegin(), backward.rend());
    all.insert(all.end(), forward.begin(), forward.end());
    if (!ends_inside || left_fwd || all.empty()) {
        res.left_domain = left_fwd ? 1 : (left_bwd && inside ? -1 : 0);
        res.extra = std::move(all);
        return res;
    }
    res.time = all.back();
    for (std::size_t i = 0; i + 1 < all.size(); ++i)
        if (std::abs(all[i] - *res.time) > opt.window) res.extra.push_back(all[i]);
    return res;
}

inline CrossingResult crossing_time(const SafetyProblem& p, const OccupancyGrid& v, const State& x,
                                    const CrossingOptions& opt = {}) {
    return crossing_time(p, Membership(v), x, opt);
}

/// Occupied cells of V with an unoccupied face neighbor.
inline std::vector<std::size_t> boundary_cells(const OccupancyGrid& v) {
    const auto& g = v.geometry();
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < v.size(); ++c) {
        if (!v[c]) continue;
        bool edge = false;
        g.for_each_face_neighbor(c, [&](std::size_t j) { edge = edge || !v[j]; });
        if (edge) out.push_back(c);
    }
    return out;
}

struct BoundaryBand {
    std::vector<std::size_t> boundary;
    std::vector<std::size_t> cells;  // sorted; within Chebyshev distance k of the boundary
    std::size_t width = 0;
    double t_search = 0.0;
};

inline BoundaryBand make_band(const OccupancyGrid& v, std::size_t k, double t_search) {
    if (k < 1) throw Error("band width must be at least one cell");
    BoundaryBand band;
    band.boundary = boundary_cells(v);
    band.width = k;
    band.t_search = t_search;
    std::vector<std::uint8_t> mark(v.size(), 0);
    for (std::size_t c : band.boundary) {
        mark[c] = 1;
        v.geometry().for_each_neighbor(c, static_cast<long>(k), [&](std::size_t j) { mark[j] = 1; });
    }
    for (std::size_t i = 0; i < mark.size(); ++i)
        if (mark[i]) band.cells.push_back(i);
    return band;
}

struct BandOptions {
    std::size_t width = 8;          // collar around the boundary cells
    double grow_below = 0.0;        // extend the band around cells with |nu| below this
    std::size_t pad = 4;            // rings added per extension round
    double smoothing = 0.0;         // membership smoothing radius in cells
    double max_undefined = 0.01;    // tolerated fraction of cells without a crossing
};

struct ExitTimeDiagnostics {
    std::size_t band_cells = 0;
    std::size_t undefined = 0;
    std::size_t sign_violations = 0;
    std::size_t extra_crossings = 0;   // cells with a second crossing
    double min_speed = 0.0;            // min |f| over band cell centers
    double max_adjacent_jump = 0.0;    // max |nu(c) - nu(c')| over defined face neighbors
    double jump_bound = 0.0;
    bool continuity_suspect = false;
    std::vector<State> extra_crossing_points;  // first few, for the report
};

/// Exit times tabulated at band cell centers.
class ExitTimeField {
public:
    ExitTimeField(const SafetyProblem& p, Membership v, BoundaryBand band, CrossingOptions opt)
        : p_(&p), v_(std::move(v)), band_(std::move(band)), opt_(opt),
          nu_(v_.grid().size(), std::numeric_limits<double>::quiet_NaN()), in_band_(v_.grid().size(), 0) {
        for (std::size_t c : band_.cells) in_band_[c] = 1;
    }

    const OccupancyGrid& certificate() const noexcept { return v_.grid(); }
    const Membership& membership() const noexcept { return v_; }
    const GridGeometry& geometry() const noexcept { return v_.grid().geometry(); }
    const BoundaryBand& band() const noexcept { return band_; }
    const CrossingOptions& options() const noexcept { return opt_; }
    const ExitTimeDiagnostics& diagnostics() const noexcept { return diag_; }

    bool in_band(std::size_t cell) const noexcept { return in_band_[cell] != 0; }
    bool defined(std::size_t cell) const noexcept { return !std::isnan(nu_[cell]); }
    /// NaN when the cell is outside the band or undefined.
    double at(std::size_t cell) const noexcept { return nu_[cell]; }

    /// Multilinear interpolation over the defined cell centers around x;
    /// nullopt when any of them is missing.
    std::optional<double> interpolate(const State& x) const {
        const auto& g = geometry();
        const std::size_t n = g.dim();
        std::array<long, kMaxDim> base{};
        std::array<double, kMaxDim> frac{};
        for (std::size_t k = 0; k < n; ++k) {
            const double u = (x[k] - g.box()[k].lo) / g.cell_width(k) - 0.5;
            const long i = static_cast<long>(std::floor(u));
            if (i < 0 || i + 1 >= static_cast<long>(g.resolution()[k])) return std::nullopt;
            base[k] = i;
            frac[k] = u - static_cast<double>(i);
        }
        double acc = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            std::size_t idx = 0;
            double w = 1.0;
            for (std::size_t k = 0; k < n; ++k) {
                const bool up = (corner >> k) & 1U;
                idx += static_cast<std::size_t>(base[k] + (up ? 1 : 0)) * g.stride(k);
                w *= up ? frac[k] : 1.0 - frac[k];
            }
            if (!defined(idx)) return std::nullopt;
            acc += w * nu_[idx];
        }
        return acc;
    }

    /// nu(x) from the tabulated values when possible, otherwise by a direct
    /// crossing search.
    std::optional<double> nu(const State& x) const {
        if (auto v = interpolate(x)) return v;
        return crossing_time(*p_, v_, x, opt_).nu();
    }

    /// nu(x) always by a direct crossing search.
    std::optional<double> nu_exact(const State& x) const { return crossing_time(*p_, v_, x, opt_).nu(); }

private:
    friend ExitTimeField build_band_field(const SafetyProblem&, const OccupancyGrid&, const BandOptions&, CrossingOptions);

    const SafetyProblem* p_;
    Membership v_;
    BoundaryBand band_;
    CrossingOptions opt_;
    std::vector<double> nu_;
    std::vector<std::uint8_t> in_band_;
    ExitTimeDiagnostics diag_;
};

/// Evaluates nu at every band cell center of V. With grow_below > 0 the band
/// keeps growing until every cell with |nu| < grow_below is at least `pad`
/// cells inside it. Fails when f may vanish in a band cell or when too much of
/// the band has no crossing.
inline ExitTimeField build_band_field(const SafetyProblem& p, const OccupancyGrid& v, const BandOptions& bopt,
                                      CrossingOptions opt) {
    if (v.empty()) throw ConstructionError("exit-time", "certificate grid is empty");
    if (v.count() == v.size()) throw ConstructionError("exit-time", "certificate grid has empty complement");
    const auto& g = v.geometry();
    ExitTimeField field(p, Membership(v, bopt.smoothing), make_band(v, bopt.width, opt.t_search), opt);
    auto& diag = field.diag_;
    const double lip = lipschitz_estimate(p);
    const double hd = g.half_diagonal();
    double min_speed = std::numeric_limits<double>::infinity();

    auto evaluate = [&](const std::vector<std::size_t>& cells) {
        // |f(y)| >= |f(c)| - L * halfdiag on the cell, so the cell is free of
        // equilibria when this is positive.
        for (std::size_t c : cells) {
            const State x = g.cell_center(c);
            const double sp = norm(p.eval_field(x));
            min_speed = std::min(min_speed, sp);
            if (sp - lip * hd <= 1e-6)
                throw ConstructionError("exit-time non-singularity",
                                        "vector field may vanish in band cell at " + format_point(x));
        }
        if (field.opt_.window == 0.0) field.opt_.window = 4.0 * hd / min_speed;
        std::vector<CrossingResult> results(cells.size());
        parallel_for(cells.size(), [&](std::size_t i) {
            results[i] = crossing_time(p, field.v_, g.cell_center(cells[i]), field.opt_);
        });
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& r = results[i];
            if (!r.time) {
                ++diag.undefined;
                continue;
            }
            const double nu = -*r.time;
            field.nu_[cells[i]] = nu;
            const bool inside = field.v_(g.cell_center(cells[i]));
            if ((inside && nu < 0.0) || (!inside && nu > 0.0)) ++diag.sign_violations;
            if (!r.extra.empty()) {
                ++diag.extra_crossings;
                if (diag.extra_crossing_points.size() < 8) diag.extra_crossing_points.push_back(g.cell_center(cells[i]));
            }
        }
    };

    evaluate(field.band_.cells);
    if (bopt.grow_below > 0.0) {
        std::vector<std::size_t> fresh = field.band_.cells;
        while (!fresh.empty()) {
            std::vector<std::size_t> added;
            for (std::size_t c : fresh) {
                if (!field.defined(c) || std::abs(field.nu_[c]) >= bopt.grow_below) continue;
                g.for_each_neighbor(c, static_cast<long>(bopt.pad), [&](std::size_t j) {
                    if (!field.in_band_[j]) {
                        field.in_band_[j] = 1;
                        added.push_back(j);
                    }
                });
            }
            std::sort(added.begin(), added.end());
            evaluate(added);
            fresh = std::move(added);
        }
        field.band_.cells.clear();
        for (std::size_t i = 0; i < field.in_band_.size(); ++i)
            if (field.in_band_[i]) field.band_.cells.push_back(i);
    }
    const auto& cells = field.band_.cells;
    diag.band_cells = cells.size();
    diag.min_speed = min_speed;
    if (static_cast<double>(diag.undefined) > bopt.max_undefined * static_cast<double>(cells.size()))
        throw ConstructionError("exit-time coverage", std::to_string(diag.undefined) + " of " +
                                                          std::to_string(cells.size()) +
                                                          " band cells have no boundary crossing within t_search");

    for (std::size_t c : cells) {
        if (!field.defined(c)) continue;
        g.for_each_face_neighbor(c, [&](std::size_t j) {
            if (field.defined(j)) diag.max_adjacent_jump = std::max(diag.max_adjacent_jump, std::abs(field.nu_[c] - field.nu_[j]));
        });
    }
    diag.jump_bound = 5.0 * 2.0 * hd / min_speed;
    diag.continuity_suspect = diag.max_adjacent_jump > diag.jump_bound;
    return field;
}

/// Fixed collar of k cells with exact cell membership.
inline ExitTimeField build_band_field(const SafetyProblem& p, const OccupancyGrid& v, std::size_t k, CrossingOptions opt) {
    BandOptions b;
    b.width = k;
    return build_band_field(p, v, b, opt);
}

/// CSV: cell center coordinates, then nu or "undef".
inline void write_band_csv(std::ostream& os, const ExitTimeField& field) {
    const auto& g = field.geometry();
    for (std::size_t k = 0; k < g.dim(); ++k) os << 'x' << (k + 1) << ',';
    os << "nu\n";
    char buf[64];
    for (std::size_t c : field.band().cells) {
        const State x = g.cell_center(c);
        for (std::size_t k = 0; k < g.dim(); ++k) {
            std::snprintf(buf, sizeof buf, "%.10g", x[k]);
            os << buf << ',';
        }
        if (field.defined(c)) {
            std::snprintf(buf, sizeof buf, "%.10g", field.at(c));
            os << buf << '\n';
        } else {
            os << "undef\n";
        }
    }
}

}  // namespace safecert
