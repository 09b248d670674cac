#pragma once

// Over-approximating reach operators for eps-perturbed dynamics on occupancy
// grids. Each occupied cell is represented by the nominal flow of its center;
// Groenwall's inequality bounds how far any eps-solution started anywhere in
// the cell can drift from it:
//
//   |x(t) - y(t)| <= (eps/L)(e^{Lt} - 1) + halfdiag * e^{Lt}
//
// so marking the cells that meet that ball around y(t) covers the exact
// perturbed reach set.

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "safecert/flow.hpp"
#include "safecert/grid.hpp"
#include "safecert/parallel.hpp"
#include "safecert/problem.hpp"

namespace safecert {

struct ReachParams {
    double eps = 0.1;
    double sub_step = 0.5 / 8.0;
    double lipschitz = 1.0;

    void validate() const {
        if (!(eps >= 0.0)) throw Error("reach: eps must be non-negative");
        if (!(sub_step > 0.0)) throw Error("reach: sub-step must be positive");
        if (!(lipschitz > 0.0)) throw Error("reach: Lipschitz bound must be positive");
    }
};

/// Groenwall bloat radius after time t for a cell of half-diagonal `halfdiag`.
inline double bloat_radius(double eps, double lipschitz, double t, double halfdiag, double slack) noexcept {
    const double g = std::exp(lipschitz * t);
    return eps / lipschitz * std::expm1(lipschitz * t) + halfdiag * g + slack;
}

/// Propagates grids by a fixed duration h, caching the nominal flow of each
/// cell center so that repeated steps (and steps at different eps) only pay
/// for the integration once.
class ReachEngine {
public:
    ReachEngine(const SafetyProblem& p, std::shared_ptr<const GridGeometry> geometry, double h, IntegratorConfig cfg = {},
                std::size_t tube_samples = 4)
        : p_(&p), geo_(std::move(geometry)), h_(h), cfg_(cfg), samples_(tube_samples), cache_(geo_->size()) {
        if (!(h > 0.0)) throw Error("reach: step duration must be positive");
        if (tube_samples < 1) throw Error("reach: need at least one tube sample");
        cfg_.validate();
    }

    double step_duration() const noexcept { return h_; }
    const GridGeometry& geometry() const noexcept { return *geo_; }

    /// Cells covering every eps-solution state at exactly time h from X.
    OccupancyGrid step(const OccupancyGrid& x, double eps, double lipschitz) const {
        return propagate_grid(x, eps, lipschitz, false);
    }

    /// Cells covering every eps-solution state at any time in [0, h] from X.
    OccupancyGrid tube(const OccupancyGrid& x, double eps, double lipschitz) const {
        return propagate_grid(x, eps, lipschitz, true);
    }

    /// m-fold composition of step().
    OccupancyGrid step_composed(const OccupancyGrid& x, double eps, double lipschitz, std::size_t m) const {
        OccupancyGrid r = x;
        bool escaped = false;
        for (std::size_t i = 0; i < m; ++i) {
            r = step(r, eps, lipschitz);
            escaped = escaped || r.escaped();
        }
        r.set_escaped(escaped);
        return r;
    }

    /// X together with its first m step() images: the reach set sampled at the
    /// sub-step instants. If step^m(X) is inside X, the result is closed under
    /// step^m exactly (monotonicity of step).
    OccupancyGrid reach_union(const OccupancyGrid& x, double eps, double lipschitz, std::size_t m) const {
        OccupancyGrid acc = x;
        OccupancyGrid frontier = x;
        bool escaped = x.escaped();
        for (std::size_t k = 0; k < m; ++k) {
            frontier = step(frontier, eps, lipschitz);
            escaped = escaped || frontier.escaped();
            acc = set_union(acc, frontier);
        }
        acc.set_escaped(escaped);
        return acc;
    }

    /// X together with tubes over ceil(horizon / h) consecutive sub-steps.
    OccupancyGrid reach_interval(const OccupancyGrid& x, double eps, double lipschitz, double horizon) const {
        if (horizon < 0.0) throw Error("reach: horizon must be non-negative");
        const auto steps = static_cast<std::size_t>(std::ceil(horizon / h_ - 1e-9));
        OccupancyGrid acc = x;
        OccupancyGrid frontier = x;
        bool escaped = x.escaped();
        for (std::size_t k = 0; k < steps; ++k) {
            const OccupancyGrid t = tube(frontier, eps, lipschitz);
            acc = set_union(acc, t);
            escaped = escaped || t.escaped();
            if (k + 1 < steps) frontier = step(frontier, eps, lipschitz);
        }
        acc.set_escaped(escaped);
        return acc;
    }

private:
    struct CellFlow {
        std::vector<State> points;  // y(j h / m), j = 1..m
        std::vector<double> speed;  // bound on |f| over [(j-1) h/m, j h/m]
        bool left = false;          // nominal flow left the box
    };

    const CellFlow& flow_of(std::size_t cell) const { return *cache_[cell]; }

    void ensure_cached(const std::vector<std::size_t>& cells) const {
        std::vector<std::size_t> missing;
        for (std::size_t c : cells)
            if (!cache_[c]) missing.push_back(c);
        parallel_for(missing.size(), [&](std::size_t i) {
            const std::size_t cell = missing[i];
            CellFlow cf;
            State y = geo_->cell_center(cell);
            double prev_speed = norm(p_->eval_field(y));
            const double dt = h_ / static_cast<double>(samples_);
            for (std::size_t j = 0; j < samples_; ++j) {
                if (!cf.left) {
                    const auto out = propagate(*p_, y, dt, cfg_);
                    y = out.state;
                    cf.left = !out.ok();
                }
                const double sp = norm(p_->eval_field(y));
                cf.points.push_back(y);
                cf.speed.push_back(1.1 * std::max(prev_speed, sp) + 1e-12);
                prev_speed = sp;
            }
            cache_[cell] = std::move(cf);
        });
    }

    OccupancyGrid propagate_grid(const OccupancyGrid& x, double eps, double lipschitz, bool tube) const {
        if (x.geometry_ptr() != geo_ && !(x.geometry() == *geo_)) throw Error("reach: grid shape mismatch");
        const auto cells = x.occupied();
        ensure_cached(cells);
        OccupancyGrid out(geo_);
        bool escaped = x.escaped();
        const double hd = geo_->half_diagonal();
        const double slack = cfg_.slack();
        const double dt = h_ / static_cast<double>(samples_);
        for (std::size_t c : cells) {
            const CellFlow& cf = flow_of(c);
            escaped = escaped || cf.left;
            if (tube) {
                for (std::size_t j = 0; j < samples_; ++j) {
                    const double tj = dt * static_cast<double>(j + 1);
                    const double r = bloat_radius(eps, lipschitz, tj, hd, slack) + cf.speed[j] * dt;
                    escaped = out.mark_ball(cf.points[j], r) || escaped;
                }
            } else {
                const double r = bloat_radius(eps, lipschitz, h_, hd, slack);
                escaped = out.mark_ball(cf.points.back(), r) || escaped;
            }
        }
        out.set_escaped(escaped);
        return out;
    }

    const SafetyProblem* p_;
    std::shared_ptr<const GridGeometry> geo_;
    double h_;
    IntegratorConfig cfg_;
    std::size_t samples_;
    mutable std::vector<std::optional<CellFlow>> cache_;
};

/// Single-time perturbed reach image of X after duration h.
inline OccupancyGrid step_reach(const OccupancyGrid& x, const SafetyProblem& p, const ReachParams& rp, double h,
                                const IntegratorConfig& cfg = {}) {
    rp.validate();
    ReachEngine engine(p, x.geometry_ptr(), h, cfg);
    return engine.step(x, rp.eps, rp.lipschitz);
}

/// Over-approximation of the perturbed reach set over [0, horizon], built from
/// sub-steps of length rp.sub_step.
inline OccupancyGrid reach_interval(const OccupancyGrid& x, const SafetyProblem& p, const ReachParams& rp, double horizon,
                                    const IntegratorConfig& cfg = {}) {
    rp.validate();
    if (horizon < 0.0) throw Error("reach: horizon must be non-negative");
    if (horizon == 0.0) return x;
    ReachEngine engine(p, x.geometry_ptr(), rp.sub_step, cfg);
    return engine.reach_interval(x, rp.eps, rp.lipschitz, horizon);
}

}  // namespace safecert
