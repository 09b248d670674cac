#pragma once

// Barrier functions: smoothing of the exit-time field, assembly of a globally
// defined barrier by smooth saturation, and a sampling validator for the three
// barrier conditions and their eps-robust strengthening.
//
//   (1) beta > 0 on I        (2) grad beta . f > 0 where beta = 0
//   (3) beta < 0 on U and on the faces of the domain box

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "safecert/exit_time.hpp"
#include "safecert/expr.hpp"
#include "safecert/grid.hpp"
#include "safecert/parallel.hpp"
#include "safecert/problem.hpp"

namespace safecert {

// ---------------------------------------------------------------------------
// Saturation

/// Smooth odd saturation: identity on [-d/2, d/2], constant +-d beyond d,
/// with a C2 quintic blend in between whose slope stays positive on (-d, d).
inline double saturate(double s, double d) noexcept {
    const double a = std::abs(s);
    const double h = 0.5 * d;
    double r;
    if (a <= h) {
        r = a;
    } else if (a >= d) {
        r = d;
    } else {
        const double u = (a - h) / h;
        r = h + h * (u + 4.0 * u * u * u - 7.0 * u * u * u * u + 3.0 * u * u * u * u * u);
    }
    return s < 0.0 ? -r : r;
}

inline double saturate_derivative(double s, double d) noexcept {
    const double a = std::abs(s);
    const double h = 0.5 * d;
    if (a <= h) return 1.0;
    if (a >= d) return 0.0;
    const double u = (a - h) / h;
    return (1.0 - u) * (1.0 - u) * (1.0 + 2.0 * u + 15.0 * u * u);
}

// ---------------------------------------------------------------------------
// Barrier interface

class BarrierField {
public:
    virtual ~BarrierField() = default;
    virtual std::size_t dim() const = 0;
    virtual double value(const State& x) const = 0;
    virtual State gradient(const State& x) const = 0;
};

/// grad beta(x) . f(x).
inline double lie_derivative(const BarrierField& beta, const SafetyProblem& p, const State& x) {
    return dot(beta.gradient(x), p.eval_field(x));
}

/// Barrier given as a closed-form expression; the gradient is symbolic.
class AnalyticBarrier final : public BarrierField {
public:
    AnalyticBarrier(Expr e, std::size_t dim) : expr_(std::move(e)), dim_(dim), value_(expr_) {
        if (expr_.arity() > dim) throw Error("barrier expression uses more variables than the problem has");
        for (std::size_t k = 0; k < dim; ++k) grad_.emplace_back(derivative(expr_, k));
    }

    static AnalyticBarrier parse(std::string_view text, std::size_t dim) { return {parse_expression(text, dim), dim}; }

    const Expr& expression() const noexcept { return expr_; }
    std::size_t dim() const override { return dim_; }
    double value(const State& x) const override { return value_(x.span()); }
    State gradient(const State& x) const override {
        State g(dim_);
        for (std::size_t k = 0; k < dim_; ++k) g[k] = grad_[k](x.span());
        return g;
    }

private:
    Expr expr_;
    std::size_t dim_;
    CompiledExpr value_;
    std::vector<CompiledExpr> grad_;
};

// ---------------------------------------------------------------------------
// Smoothed exit time

namespace detail {

inline double bump(double q) noexcept { return q < 1.0 ? std::exp(-1.0 / (1.0 - q)) : 0.0; }

}  // namespace detail

/// Cubic B-spline quasi-interpolant over node values at cell centers. The
/// value at x is a convex combination of the 4^n surrounding nodes, exact for
/// affine data, and C2. x is active when all of those nodes are defined.
class SmoothedField {
public:
    SmoothedField(std::shared_ptr<const GridGeometry> geometry, std::vector<double> nodes)
        : geo_(std::move(geometry)), nodes_(std::move(nodes)) {
        if (nodes_.size() != geo_->size()) throw Error("smoothed field: node count does not match the grid");
        if (geo_->dim() > 3 && std::pow(4.0, static_cast<double>(geo_->dim())) > 4096.0)
            throw Error("smoothed field: dimension too large");
    }

    const GridGeometry& geometry() const noexcept { return *geo_; }
    const std::shared_ptr<const GridGeometry>& geometry_ptr() const noexcept { return geo_; }
    double node(std::size_t cell) const noexcept { return nodes_[cell]; }
    bool node_defined(std::size_t cell) const noexcept { return !std::isnan(nodes_[cell]); }

    /// Index of the dual cell (between node i and i+1 per axis) holding x, and
    /// the fractional position inside it; nullopt outside the node hull.
    struct Locus {
        std::array<long, kMaxDim> base{};
        std::array<double, kMaxDim> frac{};
    };

    std::optional<Locus> locate(const State& x) const noexcept {
        const auto& g = *geo_;
        Locus l;
        for (std::size_t k = 0; k < g.dim(); ++k) {
            const double u = (x[k] - g.box()[k].lo) / g.cell_width(k) - 0.5;
            if (!(u >= 0.0)) return std::nullopt;
            long i = static_cast<long>(std::floor(u));
            const long last = static_cast<long>(g.resolution()[k]) - 1;
            if (i > last) return std::nullopt;
            if (i == last) {
                if (u > static_cast<double>(last)) return std::nullopt;
                i = last - 1;
            }
            l.base[k] = i;
            l.frac[k] = u - static_cast<double>(i);
        }
        return l;
    }

    /// Whether every stencil node of the dual cell `base` is defined.
    bool stencil_defined(const std::array<long, kMaxDim>& base) const noexcept {
        bool ok = true;
        for_each_stencil(base, [&](std::size_t idx, std::size_t) { ok = ok && idx != npos && node_defined(idx); });
        return ok;
    }

    bool active(const State& x) const noexcept {
        const auto l = locate(x);
        return l && stencil_defined(l->base);
    }

    /// Value and gradient at an active point; nullopt otherwise.
    std::optional<double> evaluate(const State& x, State* grad = nullptr) const {
        const auto l = locate(x);
        if (!l) return std::nullopt;
        const auto& g = *geo_;
        const std::size_t n = g.dim();
        std::array<std::array<double, 4>, kMaxDim> w{}, dw{};
        for (std::size_t k = 0; k < n; ++k) detail::bspline_weights(l->frac[k], w[k].data(), dw[k].data());
        double v = 0.0;
        State gr(n);
        bool ok = true;
        for_each_stencil(l->base, [&](std::size_t idx, std::size_t code) {
            if (!ok || idx == npos || !node_defined(idx)) {
                ok = false;
                return;
            }
            const double y = nodes_[idx];
            double prod = 1.0;
            std::size_t c = code;
            for (std::size_t k = 0; k < n; ++k, c >>= 2) prod *= w[k][c & 3U];
            v += prod * y;
            if (!grad) return;
            for (std::size_t k = 0; k < n; ++k) {
                double pk = 1.0;
                c = code;
                for (std::size_t j = 0; j < n; ++j, c >>= 2) pk *= j == k ? dw[j][c & 3U] : w[j][c & 3U];
                gr[k] += pk * y / g.cell_width(k);
            }
        });
        if (!ok) return std::nullopt;
        if (grad) *grad = gr;
        return v;
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    /// fn(node index or npos, code) for the 4^n nodes base-1 .. base+2; code
    /// packs the per-axis offset (0..3) in two bits per axis.
    template <class Fn>
    void for_each_stencil(const std::array<long, kMaxDim>& base, Fn&& fn) const {
        const auto& g = *geo_;
        const std::size_t n = g.dim();
        const std::size_t total = std::size_t{1} << (2 * n);
        for (std::size_t code = 0; code < total; ++code) {
            std::size_t idx = 0;
            bool inside = true;
            std::size_t c = code;
            for (std::size_t k = 0; k < n; ++k, c >>= 2) {
                const long j = base[k] - 1 + static_cast<long>(c & 3U);
                if (j < 0 || j >= static_cast<long>(g.resolution()[k])) {
                    inside = false;
                    break;
                }
                idx += static_cast<std::size_t>(j) * g.stride(k);
            }
            fn(inside ? idx : npos, code);
        }
    }

private:
    std::shared_ptr<const GridGeometry> geo_;
    std::vector<double> nodes_;
};

struct MollifyOptions {
    double width = 0.0;  // kernel radius in state units; 0 means two cell widths
    double delta = 0.2;  // clamp level the bounds are checked against
};

struct MollifyResult {
    SmoothedField field;
    double width = 0.0;
    double sup_error = 0.0;  // max |nu' - nu| over checked cell centers
    double min_lie = 0.0;    // min grad nu' . f over checked cell centers
    std::size_t checked = 0; // active band cells with |nu| <= delta
};

/// Convolves the band values of nu with a normalized bump kernel of radius
/// `width` (undefined cells excluded, weights renormalized) and interpolates
/// the result. The bounds sup |nu' - nu| < delta/2 and min Lie(nu') > 1 -
/// delta/2 are checked on the active band cells with |nu| <= delta.
inline MollifyResult mollify_field(const ExitTimeField& nu, const SafetyProblem& p, MollifyOptions opt) {
    const auto& g = nu.geometry();
    const auto geo = nu.certificate().geometry_ptr();
    if (opt.width == 0.0) opt.width = 2.0 * g.min_cell_width();
    if (!(opt.width >= g.min_cell_width() * (1.0 - 1e-12)))
        throw Error("mollify: kernel width must be at least one cell width");
    if (!(opt.delta > 0.0)) throw Error("mollify: delta must be positive");

    const auto& cells = nu.band().cells;
    std::vector<double> smooth(g.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<long> reach(g.dim());
    for (std::size_t k = 0; k < g.dim(); ++k) reach[k] = static_cast<long>(std::ceil(opt.width / g.cell_width(k)));
    const double w2 = opt.width * opt.width;
    parallel_for(cells.size(), [&](std::size_t i) {
        const std::size_t c = cells[i];
        if (!nu.defined(c)) return;
        const State xc = g.cell_center(c);
        std::vector<long> lo(g.dim()), hi(g.dim());
        for (std::size_t k = 0; k < g.dim(); ++k) {
            const long cc = static_cast<long>(g.coord(c, k));
            lo[k] = std::max(0L, cc - reach[k]);
            hi[k] = std::min(static_cast<long>(g.resolution()[k]) - 1, cc + reach[k]);
        }
        double num = 0.0, den = 0.0;
        g.for_each_in_range(lo, hi, [&](std::size_t j) {
            if (!nu.defined(j)) return;
            const double w = detail::bump(distance(xc, g.cell_center(j)) * distance(xc, g.cell_center(j)) / w2);
            num += w * nu.at(j);
            den += w;
        });
        smooth[c] = num / den;
    });

    MollifyResult res{SmoothedField(geo, std::move(smooth)), opt.width, 0.0, std::numeric_limits<double>::infinity(), 0};
    for (std::size_t c : cells) {
        if (!nu.defined(c) || std::abs(nu.at(c)) > opt.delta) continue;
        const State xc = g.cell_center(c);
        State grad;
        const auto v = res.field.evaluate(xc, &grad);
        if (!v) continue;
        ++res.checked;
        res.sup_error = std::max(res.sup_error, std::abs(*v - nu.at(c)));
        res.min_lie = std::min(res.min_lie, dot(grad, p.eval_field(xc)));
    }
    if (res.checked == 0) throw ConstructionError("mollification", "no active band cell with |nu| <= delta");
    if (!(res.sup_error < 0.5 * opt.delta) || !(res.min_lie > 1.0 - 0.5 * opt.delta)) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "bounds violated: sup|nu'-nu| = %.6g (limit %.6g), min Lie(nu') = %.6g (limit %.6g); "
                      "try a smaller kernel width or a finer grid",
                      res.sup_error, 0.5 * opt.delta, res.min_lie, 1.0 - 0.5 * opt.delta);
        throw ConstructionError("mollification", buf);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Assembly

/// beta = saturate(nu') where nu' is active, +delta inside V and -delta
/// outside V elsewhere.
class AssembledBarrier final : public BarrierField {
public:
    AssembledBarrier(SmoothedField nu, Membership inside, double delta)
        : nu_(std::move(nu)), inside_(std::move(inside)), delta_(delta) {}

    const SmoothedField& smoothed() const noexcept { return nu_; }
    const Membership& membership() const noexcept { return inside_; }
    double delta() const noexcept { return delta_; }

    std::size_t dim() const override { return nu_.geometry().dim(); }

    double value(const State& x) const override {
        if (const auto v = nu_.evaluate(x)) return saturate(*v, delta_);
        return inside_(x) ? delta_ : -delta_;
    }

    State gradient(const State& x) const override {
        State g;
        if (const auto v = nu_.evaluate(x, &g)) return g * saturate_derivative(*v, delta_);
        return State(dim());
    }

private:
    SmoothedField nu_;
    Membership inside_;
    double delta_;
};

/// Checks that the active region of nu' ends where |nu'| >= delta with the
/// sign of the membership just outside it, so that beta is continuous (and
/// C1) across the edge of the active region.
inline AssembledBarrier assemble_barrier(SmoothedField nu, Membership inside, double delta) {
    if (!(delta > 0.0 && delta < 0.5)) throw Error("assemble: clamp level must lie in (0, 1/2)");
    const auto& g = nu.geometry();
    const std::size_t n = g.dim();
    std::vector<std::uint8_t> active(g.size(), 0);
    std::vector<std::size_t> duals;
    for (std::size_t c = 0; c < g.size(); ++c) {
        std::array<long, kMaxDim> base{};
        bool in_range = true;
        for (std::size_t k = 0; k < n; ++k) {
            base[k] = static_cast<long>(g.coord(c, k));
            in_range = in_range && base[k] + 1 < static_cast<long>(g.resolution()[k]);
        }
        if (in_range && nu.stencil_defined(base)) {
            active[c] = 1;
            duals.push_back(c);
        }
    }
    if (duals.empty()) throw ConstructionError("band-too-thin", "the smoothed field has no active region");

    auto dual_center = [&](std::size_t c) {
        State x = g.cell_center(c);
        for (std::size_t k = 0; k < n; ++k) x[k] += 0.5 * g.cell_width(k);
        return x;
    };
    for (std::size_t c : duals) {
        bool edge = false;
        std::optional<std::size_t> outside_neighbor;
        g.for_each_neighbor(c, 1, [&](std::size_t j) {
            bool j_valid = true;
            for (std::size_t k = 0; k < n; ++k) j_valid = j_valid && g.coord(j, k) + 1 < g.resolution()[k];
            if (!j_valid || !active[j]) {
                edge = true;
                if (j_valid && !outside_neighbor) outside_neighbor = j;
            }
        });
        if (!edge) continue;
        std::array<long, kMaxDim> base{};
        for (std::size_t k = 0; k < n; ++k) base[k] = static_cast<long>(g.coord(c, k));
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        nu.for_each_stencil(base, [&](std::size_t idx, std::size_t) {
            lo = std::min(lo, nu.node(idx));
            hi = std::max(hi, nu.node(idx));
        });
        const bool positive = lo >= delta;
        const bool negative = hi <= -delta;
        const bool member = outside_neighbor ? inside(dual_center(*outside_neighbor)) : positive;
        if ((!positive && !negative) || positive != member) {
            throw ConstructionError("band-too-thin", "|nu'| < delta (or wrong sign) at the band edge near " +
                                                         format_point(dual_center(c)));
        }
    }
    return AssembledBarrier(std::move(nu), std::move(inside), delta);
}

// ---------------------------------------------------------------------------
// Validation

struct BarrierValidationOptions {
    std::size_t samples = 10000;
    /// Sweep lattice cells per axis; empty selects 2048 / 256 / 32 / 8.
    std::vector<std::size_t> sweep;
    std::uint64_t seed = 0;
};

struct ConditionResult {
    double margin = 0.0;  // positive iff the condition holds
    std::optional<State> worst;
    std::size_t points = 0;
    bool vacuous = false;  // no point to check (condition 2 with empty zero set)

    bool holds() const noexcept { return vacuous || margin > 0.0; }
};

struct BarrierReport {
    ConditionResult init;    // min beta on I
    ConditionResult lie;     // min Lie derivative on the swept zero set
    ConditionResult unsafe;  // -max beta on U and the box faces
    double eps_b = 0.0;      // robust margin; 0 when only the plain conditions hold
    std::size_t sweep_points = 0;
    std::size_t samples = 0;

    bool pass() const noexcept { return init.holds() && lie.holds() && unsafe.holds(); }
    std::vector<int> failed_conditions() const {
        std::vector<int> out;
        if (!init.holds()) out.push_back(1);
        if (!lie.holds()) out.push_back(2);
        if (!unsafe.holds()) out.push_back(3);
        return out;
    }
};

namespace detail {

inline std::vector<std::size_t> default_sweep(std::size_t n) {
    const std::size_t d = n == 1 ? 2048 : n == 2 ? 256 : n == 3 ? 32 : 8;
    return std::vector<std::size_t>(n, d);
}

// Centers and corners of every cell of `cells`.
inline std::vector<State> cell_points(const OccupancyGrid& cells) {
    const auto& g = cells.geometry();
    const std::size_t n = g.dim();
    std::vector<State> pts;
    for (std::size_t c : cells.occupied()) {
        pts.push_back(g.cell_center(c));
        const State lo = g.cell_lo(c);
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            State x = lo;
            for (std::size_t k = 0; k < n; ++k)
                if ((corner >> k) & 1U) x[k] += g.cell_width(k);
            pts.push_back(x);
        }
    }
    return pts;
}

}  // namespace detail

/// Evaluates the three barrier conditions on a sweep lattice, rasterized I
/// and U, the box faces and random samples, then ratchets the robust margin
/// eps_b: the largest eps (backed off by 1%) with beta > eps on I, beta < -eps
/// on U and Lie(beta) > eps wherever |beta| <= eps.
inline BarrierReport validate_barrier(const BarrierField& beta, const SafetyProblem& p, BarrierValidationOptions opt = {}) {
    if (beta.dim() != p.dim()) throw Error("validate_barrier: dimension mismatch");
    if (opt.samples == 0) throw Error("validate_barrier: need at least one sample");
    const std::size_t n = p.dim();
    if (opt.sweep.empty()) opt.sweep = detail::default_sweep(n);
    if (opt.sweep.size() == 1 && n > 1) opt.sweep.assign(n, opt.sweep.front());
    const auto geo = std::make_shared<const GridGeometry>(p.domain(), opt.sweep);
    const Box& box = p.domain();
    BarrierReport rep;

    std::mt19937_64 rng(opt.seed);
    auto uniform_box = [&]() {
        State x(n);
        for (std::size_t k = 0; k < n; ++k) x[k] = std::uniform_real_distribution<double>(box[k].lo, box[k].hi)(rng);
        return x;
    };
    std::vector<State> samples(opt.samples);
    for (auto& s : samples) s = uniform_box();
    rep.samples = samples.size();

    // Condition 1: I.
    std::vector<State> init_pts = detail::cell_points(rasterize_set(p.init(), geo));
    for (const auto& s : samples)
        if (p.init()(s)) init_pts.push_back(s);
    // Condition 3: U and the box faces.
    std::vector<State> unsafe_pts = detail::cell_points(rasterize_set(p.unsafe(), geo));
    for (const auto& s : samples)
        if (p.unsafe()(s)) unsafe_pts.push_back(s);

    // Sweep lattice nodes; nodes on the box faces also count for condition 3.
    std::vector<std::size_t> nodes_per_axis(n);
    std::size_t total = 1;
    for (std::size_t k = 0; k < n; ++k) {
        nodes_per_axis[k] = opt.sweep[k] + 1;
        total *= nodes_per_axis[k];
    }
    std::vector<State> sweep(total);
    for (std::size_t i = 0; i < total; ++i) {
        State x(n);
        std::size_t rem = i;
        bool face = false;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = rem % nodes_per_axis[k];
            rem /= nodes_per_axis[k];
            x[k] = j + 1 == nodes_per_axis[k] ? box[k].hi : box[k].lo + box[k].width() * static_cast<double>(j) / static_cast<double>(opt.sweep[k]);
            face = face || j == 0 || j + 1 == nodes_per_axis[k];
        }
        sweep[i] = x;
        if (face) unsafe_pts.push_back(x);
    }
    rep.sweep_points = total;

    auto eval_all = [&](const std::vector<State>& pts) {
        std::vector<double> v(pts.size());
        parallel_for(pts.size(), [&](std::size_t i) { v[i] = beta.value(pts[i]); });
        return v;
    };
    auto extreme = [](const std::vector<State>& pts, const std::vector<double>& v, double sign) {
        ConditionResult r;
        r.points = pts.size();
        if (pts.empty()) {
            r.vacuous = true;
            return r;
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (sign * v[i] < sign * v[best]) best = i;
        r.margin = sign * v[best];
        r.worst = pts[best];
        return r;
    };
    rep.init = extreme(init_pts, eval_all(init_pts), 1.0);
    rep.unsafe = extreme(unsafe_pts, eval_all(unsafe_pts), -1.0);

    // Condition 2: zero crossings between lattice neighbors, refined by bisection.
    const std::vector<double> sweep_v = eval_all(sweep);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t stride = 1;
        std::size_t rem = i;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = rem % nodes_per_axis[k];
            rem /= nodes_per_axis[k];
            if (j + 1 < nodes_per_axis[k]) {
                const double a = sweep_v[i], b = sweep_v[i + stride];
                if ((a <= 0.0 && b > 0.0) || (a > 0.0 && b <= 0.0)) pairs.emplace_back(i, i + stride);
            }
            stride *= nodes_per_axis[k];
        }
    }
    std::vector<State> zeros(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t q) {
        State a = sweep[pairs[q].first], b = sweep[pairs[q].second];
        const bool a_pos = beta.value(a) > 0.0;
        for (int it = 0; it < 60; ++it) {
            const State m = (a + b) * 0.5;
            if ((beta.value(m) > 0.0) == a_pos)
                a = m;
            else
                b = m;
        }
        zeros[q] = (a + b) * 0.5;
    });
    std::vector<double> zero_lie(zeros.size());
    parallel_for(zeros.size(), [&](std::size_t q) { zero_lie[q] = lie_derivative(beta, p, zeros[q]); });
    rep.lie = extreme(zeros, zero_lie, 1.0);

    if (!rep.pass()) return rep;

    // Robust margin: scan points by |beta| with a running minimum of Lie.
    struct Pt {
        double abs_beta;
        double lie;
    };
    std::vector<Pt> pts;
    pts.reserve(zeros.size() + total + samples.size());
    for (std::size_t q = 0; q < zeros.size(); ++q) pts.push_back({std::abs(beta.value(zeros[q])), zero_lie[q]});
    std::vector<State> rest = sweep;
    rest.insert(rest.end(), samples.begin(), samples.end());
    std::vector<Pt> rest_pts(rest.size());
    parallel_for(rest.size(), [&](std::size_t i) {
        rest_pts[i] = {std::abs(beta.value(rest[i])), lie_derivative(beta, p, rest[i])};
    });
    pts.insert(pts.end(), rest_pts.begin(), rest_pts.end());
    std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
        return a.abs_beta < b.abs_beta || (a.abs_beta == b.abs_beta && a.lie < b.lie);
    });
    const double cap = std::min(rep.init.vacuous ? std::numeric_limits<double>::infinity() : rep.init.margin,
                                rep.unsafe.vacuous ? std::numeric_limits<double>::infinity() : rep.unsafe.margin);
    double best = 0.0;
    double run_min = std::numeric_limits<double>::infinity();
    // eps in [a_k, a_{k+1}) sees the first k points.
    for (std::size_t k = 0; k <= pts.size(); ++k) {
        const double lo = k == 0 ? 0.0 : pts[k - 1].abs_beta;
        const double hi = k == pts.size() ? std::numeric_limits<double>::infinity() : pts[k].abs_beta;
        if (k > 0) run_min = std::min(run_min, pts[k - 1].lie);
        if (run_min <= lo) break;
        best = std::max(best, std::min({hi, run_min, cap}));
        if (hi >= cap) break;
    }
    rep.eps_b = std::isfinite(best) ? 0.99 * best : 0.0;
    return rep;
}

/// CSV over the sweep lattice: coordinates, beta, Lie derivative.
inline void write_barrier_csv(std::ostream& os, const BarrierField& beta, const SafetyProblem& p,
                              std::vector<std::size_t> sweep) {
    const std::size_t n = p.dim();
    if (sweep.empty()) sweep = detail::default_sweep(n);
    if (sweep.size() == 1 && n > 1) sweep.assign(n, sweep.front());
    const GridGeometry g(p.domain(), sweep);
    for (std::size_t k = 0; k < n; ++k) os << 'x' << (k + 1) << ',';
    os << "beta,lie\n";
    char buf[64];
    for (std::size_t c = 0; c < g.size(); ++c) {
        const State x = g.cell_center(c);
        for (std::size_t k = 0; k < n; ++k) {
            std::snprintf(buf, sizeof buf, "%.10g,", x[k]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", beta.value(x), lie_derivative(beta, p, x));
        os << buf;
    }
}

}  // namespace safecert
