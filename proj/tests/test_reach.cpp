#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "safecert/benchmarks.hpp"
#include "safecert/certificate.hpp"
#include "safecert/reach.hpp"

using namespace safecert;

namespace {

SafetyProblem bench(const char* name) { return find_benchmark(name)->problem(); }

SafetyProblem zero_field_1d() {
    return parse_problem("dim = 1\nfield = [\"0\"]\ndomain = [[-2.2, 2.2]]\ninit = \"x1^2 <= 0.25\"\nunsafe = \"x1^2 >= 4\"\n");
}

// Counts recorded trajectory states outside `reach`, sampling starts
// uniformly in random occupied cells of `from`.
std::size_t sampled_escapes(const SafetyProblem& p, const OccupancyGrid& from, const OccupancyGrid& reach, double eps,
                            double horizon, std::size_t trials, std::uint64_t seed) {
    const auto cells = from.occupied();
    std::size_t bad = 0;
    for (std::size_t k = 0; k < trials; ++k) {
        std::mt19937_64 rng(mix_seed(seed, k));
        std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
        const State x0 = random_point_in_cell(from.geometry(), cells[pick(rng)], rng);
        const auto tr = sample_disturbed_trajectory(p, x0, horizon, eps, mix_seed(seed + 7, k));
        bool out = tr.truncated;
        for (const auto& x : tr.states) out = out || !reach.contains_point(x);
        bad += out ? 1 : 0;
    }
    return bad;
}

}  // namespace

TEST(BloatRadius, GroenwallFormula) {
    const double hd = 0.004;
    EXPECT_NEAR(bloat_radius(0.1, 1.2, 0.1, hd, 0.0), 0.1 / 1.2 * (std::exp(0.12) - 1) + hd * std::exp(0.12), 1e-15);
    EXPECT_NEAR(bloat_radius(0.0, 1e-3, 0.0, hd, 0.0), hd, 1e-15);
}

TEST(StepReach, StationaryFieldStaysWithinOneRing) {
    const auto p = zero_field_1d();
    const auto geo = make_geometry(p, {512});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    ReachParams rp;
    rp.eps = 0.0;
    rp.lipschitz = 1e-3;
    const OccupancyGrid y = step_reach(x, p, rp, 0.1);
    EXPECT_TRUE(grid_subset(x, y));
    EXPECT_TRUE(grid_subset(y, dilate(x, 1)));
}

TEST(StepReach, ShortStepConvergesToOneRing) {
    const auto p = bench("lin1d-stable");
    const auto geo = make_geometry(p, {512});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    ReachParams rp;
    rp.eps = 0.0;
    rp.lipschitz = 1.2;
    const OccupancyGrid y = step_reach(x, p, rp, 1e-3);
    EXPECT_TRUE(grid_subset(y, dilate(x, 1)));
    EXPECT_TRUE(grid_subset(x, y));
}

TEST(StepReach, CoversTheBloatedImageInterval) {
    const auto p = bench("lin1d-stable");
    const auto geo = make_geometry(p, {512});
    const OccupancyGrid x = rasterize_set(parse_predicate("x1 >= 0.49 and x1 <= 0.51", 1), geo);
    ReachParams rp;
    rp.eps = 0.1;
    rp.lipschitz = 1.2;
    const double h = 0.1;
    const OccupancyGrid y = step_reach(x, p, rp, h);
    // Exact eps-reach of [0.49, 0.51] under x' = -x + u, |u| <= eps.
    const double spread = 0.1 * (1.0 - std::exp(-h));
    const double lo = 0.49 * std::exp(-h) - spread, hi = 0.51 * std::exp(-h) + spread;
    for (int i = 0; i <= 1000; ++i) EXPECT_TRUE(y.contains_point(State{lo + (hi - lo) * i / 1000.0}));

    std::mt19937_64 rng(1);
    const auto cells = x.occupied();
    IntegratorConfig cfg{Method::rk4};
    cfg.h = h / 8.0;
    std::size_t bad = 0;
    for (std::size_t k = 0; k < 10000; ++k) {
        const State x0 = random_point_in_cell(*geo, cells[k % cells.size()], rng);
        const auto tr = sample_disturbed_trajectory(p, x0, h, 0.1, k, cfg);
        bad += y.contains_point(tr.final_state()) ? 0 : 1;
    }
    EXPECT_EQ(bad, 0u);
}

TEST(StepReach, OutwardFlowAtTheFaceEscapes) {
    const auto p = bench("lin1d-unstable");
    const auto geo = make_geometry(p, {512});
    OccupancyGrid x(geo);
    x.set(511);
    ReachParams rp;
    rp.lipschitz = 1.2;
    EXPECT_TRUE(step_reach(x, p, rp, 0.0625).escaped());
}

TEST(ReachInterval, ZeroHorizonIsIdentity) {
    const auto p = bench("lin1d-stable");
    const auto geo = make_geometry(p, {512});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    EXPECT_EQ(reach_interval(x, p, ReachParams{}, 0.0).occupied(), x.occupied());
}

TEST(ReachInterval, StableIntervalBound) {
    const auto p = bench("lin1d-stable");
    const auto geo = make_geometry(p, {512});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    ReachParams rp;
    rp.lipschitz = lipschitz_estimate(p);
    const OccupancyGrid r = reach_interval(x, p, rp, 5.0);
    EXPECT_FALSE(r.escaped());
    EXPECT_TRUE(grid_subset(r, rasterize_set(parse_predicate("x1^2 <= 0.3844", 1), geo)));
}

TEST(ReachInterval, UnstableEscapes) {
    const auto p = bench("lin1d-unstable");
    const auto geo = make_geometry(p, {512});
    ReachParams rp;
    rp.lipschitz = lipschitz_estimate(p);
    EXPECT_TRUE(reach_interval(rasterize_set(p.init(), geo), p, rp, 3.0).escaped());
}

TEST(ReachInterval, SemigroupOverApproximation) {
    const auto p = bench("spiral2d");
    const auto geo = make_geometry(p, {96, 96});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    ReachParams rp;
    rp.lipschitz = lipschitz_estimate(p);
    const OccupancyGrid a = reach_interval(x, p, rp, 1.0);
    const OccupancyGrid whole = reach_interval(x, p, rp, 2.0);
    EXPECT_TRUE(grid_subset(whole, set_union(reach_interval(a, p, rp, 1.0), a)));
    EXPECT_TRUE(grid_subset(a, whole));
}

TEST(ReachInterval, SampledTrajectoriesStayInsideOneDimension) {
    const auto p = bench("lin1d-stable");
    const auto geo = make_geometry(p, {512});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    ReachParams rp;
    rp.lipschitz = lipschitz_estimate(p);
    const OccupancyGrid r = reach_interval(x, p, rp, 5.0);
    EXPECT_EQ(sampled_escapes(p, x, r, 0.1, 5.0, 2000, 3), 0u);
}

TEST(ReachInterval, SampledTrajectoriesStayInsideSpiral) {
    const auto p = bench("spiral2d");
    const auto geo = make_geometry(p, {256, 256});
    const OccupancyGrid x = rasterize_set(p.init(), geo);
    ReachParams rp;
    rp.lipschitz = lipschitz_estimate(p);
    const OccupancyGrid r = reach_interval(x, p, rp, 5.0);
    EXPECT_FALSE(r.escaped());
    EXPECT_EQ(sampled_escapes(p, x, r, 0.1, 5.0, 1000, 4), 0u);
}

TEST(ReachInterval, ParameterValidation) {
    ReachParams rp;
    rp.sub_step = 0.0;
    EXPECT_THROW(rp.validate(), Error);
    rp = {};
    rp.lipschitz = 0.0;
    EXPECT_THROW(rp.validate(), Error);
    rp = {};
    rp.eps = -1.0;
    EXPECT_THROW(rp.validate(), Error);
}
