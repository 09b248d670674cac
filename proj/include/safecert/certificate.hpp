#pragma once

// Finite-time certificate search: grow the eps-perturbed reach set W_t of the
// initial set until the eps/2-perturbed image of W_t after Delta falls back
// into W_t. Then V, the union of W_t with its eps/2 images at the sub-step
// instants of [0, Delta], is closed under the eps/2-perturbed Delta step.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "safecert/flow.hpp"
#include "safecert/grid.hpp"
#include "safecert/parallel.hpp"
#include "safecert/reach.hpp"

namespace safecert {

enum class CertificateStatus { found, unsafe_suspect, inconclusive };

inline const char* to_string(CertificateStatus s) noexcept {
    switch (s) {
        case CertificateStatus::found: return "found";
        case CertificateStatus::unsafe_suspect: return "unsafe-suspect";
        case CertificateStatus::inconclusive: return "inconclusive";
    }
    return "?";
}

struct CertificateOptions {
    double eps = 0.1;
    double delta = 0.5;
    double t_max = 50.0;
    std::vector<std::size_t> resolution;
    /// Delta is split into this many reach sub-steps.
    std::size_t sub_steps = 8;
    /// Extra cell layers around the rasterized initial set.
    std::size_t init_dilation = 0;
    /// Lipschitz bound; estimated from the field when unset.
    std::optional<double> lipschitz;
    /// Falsification budget (sampled trajectories) when W_t reaches U.
    std::size_t falsify_trials = 256;
    std::uint64_t seed = 0;
    IntegratorConfig integrator{};
    /// Previously confirmed witnesses; any that is a valid eps-solution from I
    /// into U is reused.
    std::vector<TrajectorySample> witness_hints;
};

struct CertificateResult {
    CertificateStatus status = CertificateStatus::inconclusive;
    std::optional<OccupancyGrid> certificate;  // V, when found
    std::optional<OccupancyGrid> reach;        // W_t at termination
    double t_found = 0.0;
    double t_reached = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    double lipschitz = 0.0;
    std::optional<TrajectorySample> witness;
    std::string reason;
};

/// Grid geometry over the problem box with the given (or default) resolution.
inline std::shared_ptr<const GridGeometry> make_geometry(const SafetyProblem& p, std::vector<std::size_t> resolution) {
    if (resolution.empty()) {
        const std::size_t d = p.dim() == 1 ? 512 : p.dim() == 2 ? 256 : p.dim() == 3 ? 48 : 16;
        resolution.assign(p.dim(), d);
    } else if (resolution.size() == 1 && p.dim() > 1) {
        resolution.assign(p.dim(), resolution.front());
    }
    return std::make_shared<const GridGeometry>(p.domain(), std::move(resolution));
}

/// Uniform random point inside cell `index`.
inline State random_point_in_cell(const GridGeometry& g, std::size_t index, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    State x = g.cell_lo(index);
    for (std::size_t k = 0; k < g.dim(); ++k) x[k] += unit(rng) * g.cell_width(k);
    return x;
}

/// Whether `w` is an eps-solution that starts in I and ends in U (or leaves
/// the box, whose faces are unsafe).
inline bool is_confirmed_witness(const SafetyProblem& p, const TrajectorySample& w, double eps) {
    if (w.states.empty() || !p.init()(w.states.front())) return false;
    for (const auto& u : w.inputs)
        if (norm(u) > eps * (1.0 + 1e-12)) return false;
    const State& last = w.final_state();
    return p.unsafe()(last) || !p.domain().contains(last);
}

namespace detail {

inline std::optional<State> sample_initial_point(const SafetyProblem& p, const OccupancyGrid& init, std::mt19937_64& rng) {
    const auto cells = init.occupied();
    if (cells.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
        const State x = random_point_in_cell(init.geometry(), cells[pick(rng)], rng);
        if (p.init()(x)) return x;
    }
    for (std::size_t c : cells) {
        const State x = init.geometry().cell_center(c);
        if (p.init()(x)) return x;
    }
    return std::nullopt;
}

}  // namespace detail

/// Samples eps-disturbed trajectories from I and returns the first one that
/// reaches U, cut at the first unsafe state.
inline std::optional<TrajectorySample> falsify(const SafetyProblem& p, const OccupancyGrid& init, double eps, double horizon,
                                               std::size_t trials, std::uint64_t seed, const IntegratorConfig& cfg = {Method::rk4}) {
    std::vector<std::optional<TrajectorySample>> found(trials);
    parallel_for(trials, [&](std::size_t k) {
        std::mt19937_64 rng(mix_seed(seed, k));
        const auto x0 = detail::sample_initial_point(p, init, rng);
        if (!x0) return;
        auto tr = sample_disturbed_trajectory(p, *x0, horizon, eps, mix_seed(seed ^ 0x5AFEC0DEULL, k), cfg);
        for (std::size_t i = 0; i < tr.states.size(); ++i) {
            if (p.unsafe()(tr.states[i]) || !p.domain().contains(tr.states[i])) {
                tr.states.resize(i + 1);
                tr.times.resize(i + 1);
                tr.inputs.resize(i);
                found[k] = std::move(tr);
                return;
            }
        }
    });
    for (auto& f : found)
        if (f) return f;
    return std::nullopt;
}

inline CertificateResult search_certificate(const SafetyProblem& p, const CertificateOptions& opt) {
    if (!(opt.eps > 0.0)) throw Error("search_certificate: eps must be positive");
    if (!(opt.delta > 0.0)) throw Error("search_certificate: delta must be positive");
    if (!(opt.t_max >= opt.delta)) throw Error("search_certificate: t_max must be at least delta");
    if (opt.sub_steps == 0) throw Error("search_certificate: sub_steps must be positive");

    CertificateResult res;
    res.eps = opt.eps;
    res.delta = opt.delta;

    for (const auto& w : opt.witness_hints) {
        if (is_confirmed_witness(p, w, opt.eps)) {
            res.status = CertificateStatus::unsafe_suspect;
            res.witness = w;
            res.reason = "reused a confirmed witness";
            return res;
        }
    }

    const auto geo = make_geometry(p, opt.resolution);
    const double lip = std::max(opt.lipschitz.value_or(lipschitz_estimate(p)), 1e-3);
    res.lipschitz = lip;
    const OccupancyGrid init = rasterize_set(p.init(), geo, opt.init_dilation);
    const OccupancyGrid unsafe = rasterize_set(p.unsafe(), geo);
    ReachEngine engine(p, geo, opt.delta / static_cast<double>(opt.sub_steps), opt.integrator);

    OccupancyGrid w = init;
    OccupancyGrid frontier = init;
    const double half = 0.5 * opt.eps;
    const auto max_k = static_cast<std::size_t>(std::floor(opt.t_max / opt.delta + 1e-9));
    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * opt.delta;
        res.t_reached = t;
        if (w.escaped() || !disjoint(w, unsafe)) {
            res.reach = w;
            const double horizon = std::max(opt.t_max, t + opt.delta);
            if (auto wit = falsify(p, init, opt.eps, horizon, opt.falsify_trials, opt.seed)) {
                res.status = CertificateStatus::unsafe_suspect;
                res.witness = std::move(wit);
                res.reason = "sampled eps-solution from I reaches U";
            } else {
                res.status = CertificateStatus::inconclusive;
                res.reason = "over-approximated reach set meets U but no witness was found";
            }
            return res;
        }
        // One eps/2 sub-step back into W implies the composed Delta step does.
        const bool invariant = grid_subset(engine.step(w, half, lip), w) ||
                               grid_subset(engine.step_composed(w, half, lip, opt.sub_steps), w);
        if (invariant) {
            res.status = CertificateStatus::found;
            res.t_found = t;
            res.reach = w;
            res.certificate = engine.reach_union(w, half, lip, opt.sub_steps);
            res.reason = "reach set is Delta-invariant";
            return res;
        }
        if (k >= max_k) break;
        for (std::size_t s = 0; s < opt.sub_steps; ++s) {
            const OccupancyGrid tube = engine.tube(frontier, opt.eps, lip);
            w = set_union(w, tube);
            w.set_escaped(w.escaped() || tube.escaped());
            frontier = engine.step(frontier, opt.eps, lip);
        }
    }
    res.status = CertificateStatus::inconclusive;
    res.reach = w;
    res.reason = "t_max exhausted before the reach set became invariant";
    return res;
}

struct CertificateReport {
    bool init_subset = false;
    bool delta_invariant_grid = false;
    std::size_t trials = 0;
    std::size_t violations = 0;
    bool unsafe_disjoint = false;

    bool delta_invariant() const noexcept { return delta_invariant_grid && violations == 0; }
    bool pass() const noexcept { return init_subset && delta_invariant() && unsafe_disjoint; }
};

/// Checks the three certificate conditions on V: I inside V, V closed under
/// eps-perturbed flow for Delta (grid operator and sampled trajectories), and
/// V disjoint from U.
inline CertificateReport validate_certificate(const OccupancyGrid& v, const SafetyProblem& p, double eps, double delta,
                                              std::size_t trials, std::uint64_t seed = 0, std::size_t sub_steps = 8,
                                              std::optional<double> lipschitz = std::nullopt) {
    if (!(v.geometry().box() == p.domain())) throw Error("validate_certificate: grid shape mismatch");
    const auto geo = v.geometry_ptr();
    CertificateReport rep;
    rep.init_subset = grid_subset(rasterize_set(p.init(), geo), v);
    rep.unsafe_disjoint = disjoint(v, rasterize_set(p.unsafe(), geo));

    const double lip = std::max(lipschitz.value_or(lipschitz_estimate(p)), 1e-3);
    ReachEngine engine(p, geo, delta / static_cast<double>(sub_steps));
    const OccupancyGrid image = engine.step_composed(v, eps, lip, sub_steps);
    rep.delta_invariant_grid = !image.escaped() && grid_subset(image, v);

    const auto cells = v.occupied();
    rep.trials = cells.empty() ? 0 : trials;
    std::vector<std::uint8_t> bad(rep.trials, 0);
    IntegratorConfig cfg{Method::rk4};
    cfg.h = delta / 64.0;
    parallel_for(rep.trials, [&](std::size_t k) {
        std::mt19937_64 rng(mix_seed(seed, k));
        std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
        const State x0 = random_point_in_cell(v.geometry(), cells[pick(rng)], rng);
        const auto tr = sample_disturbed_trajectory(p, x0, delta, eps, mix_seed(seed + 1, k), cfg);
        if (tr.truncated || !v.contains_point(tr.final_state())) bad[k] = 1;
    });
    for (auto b : bad) rep.violations += b;
    return rep;
}

}  // namespace safecert
