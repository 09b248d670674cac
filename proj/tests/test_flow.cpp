#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>
#include <sstream>

#include "safecert/benchmarks.hpp"
#include "safecert/flow.hpp"

using namespace safecert;

namespace {

SafetyProblem lin1d() { return find_benchmark("lin1d-stable")->problem(); }
SafetyProblem unstable1d() { return find_benchmark("lin1d-unstable")->problem(); }
SafetyProblem spiral() { return find_benchmark("spiral2d")->problem(); }

SafetyProblem zero_field() {
    return parse_problem("dim = 2\nfield = [\"0\", \"0\"]\ndomain = [[-2.2, 2.2], [-2.2, 2.2]]\n"
                         "init = \"x1^2 + x2^2 <= 0.25\"\nunsafe = \"x1^2 >= 4 or x2^2 >= 4\"\n");
}

// e^{At} x by the matrix exponential, independent of the library's closed forms.
State expm_flow(const Eigen::MatrixXd& A, const State& x, double t) {
    const Eigen::MatrixXd E = (A * t).exp();
    Eigen::VectorXd v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
    const Eigen::VectorXd y = E * v;
    State out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = y[static_cast<Eigen::Index>(i)];
    return out;
}

}  // namespace

TEST(Flow, ZeroFieldIsIdentity) {
    const auto p = zero_field();
    const State x{0.3, -1.1};
    const State y = integrate_flow(p, x, 5.0);
    EXPECT_DOUBLE_EQ(y[0], x[0]);
    EXPECT_DOUBLE_EQ(y[1], x[1]);
}

TEST(Flow, ExponentialDecayForwardAndBackward) {
    const auto p = lin1d();
    EXPECT_NEAR(integrate_flow(p, State{1.0}, 1.0)[0], 0.3678794, 1e-6);
    EXPECT_NEAR(integrate_flow(p, State{0.3678794}, -1.0)[0], 1.0, 1e-6);
    IntegratorConfig rk4{Method::rk4};
    rk4.h = 0.5 / 64.0;
    EXPECT_NEAR(integrate_flow(p, State{1.0}, 1.0, rk4)[0], std::exp(-1.0), 1e-6);
}

TEST(Flow, SpiralMatchesMatrixExponential) {
    const auto p = spiral();
    Eigen::MatrixXd A(2, 2);
    A << -0.5, -1.0, 1.0, -0.5;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(-1.5, 1.5), ut(-3.0, 3.0);
    for (int i = 0; i < 100;) {
        const State x{ux(rng), ux(rng)};
        const double t = ut(rng);
        // the reversed spiral expands; keep pairs whose orbit stays in the box
        if (norm(x) * std::exp(std::max(0.0, -0.5 * t)) >= 3.3) continue;
        ++i;
        const State want = expm_flow(A, x, t);
        const State got = integrate_flow(p, x, t);
        EXPECT_NEAR(got[0], want[0], 1e-6);
        EXPECT_NEAR(got[1], want[1], 1e-6);
    }
}

TEST(Flow, ReverseTimeInvertsForward) {
    const auto p = spiral();
    const State x{0.8, 0.4};
    const State back = integrate_flow(p, integrate_flow(p, x, 1.7), -1.7);
    EXPECT_NEAR(back[0], x[0], 1e-7);
    EXPECT_NEAR(back[1], x[1], 1e-7);
}

TEST(Flow, LeavingTheBoxIsReported) {
    const auto p = unstable1d();
    EXPECT_THROW(integrate_flow(p, State{0.5}, 3.0), TrajectoryLeftDomain);
    const auto out = propagate(p, State{0.5}, 3.0, {});
    EXPECT_EQ(out.status, FlowOutcome::Status::left_domain);
}

TEST(Flow, ConfigValidation) {
    IntegratorConfig bad;
    bad.h = 0.0;
    EXPECT_THROW(bad.validate(), Error);
    bad = {};
    bad.atol = 0.0;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Disturbed, ZeroDisturbanceFollowsTheFlow) {
    const auto p = spiral();
    const State x0{1.0, 0.1};
    const auto tr = sample_disturbed_trajectory(p, x0, 3.0, 0.0, 7);
    ASSERT_FALSE(tr.truncated);
    EXPECT_EQ(tr.times.front(), 0.0);
    for (std::size_t k = 0; k < tr.states.size(); k += 16) {
        const State y = integrate_flow(p, x0, tr.times[k]);
        EXPECT_NEAR(tr.states[k][0], y[0], 1e-6);
        EXPECT_NEAR(tr.states[k][1], y[1], 1e-6);
    }
}

TEST(Disturbed, StableIntervalIsInvariant) {
    const auto p = lin1d();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto tr = sample_disturbed_trajectory(p, State{0.5}, 10.0, 0.1, seed);
        for (const auto& x : tr.states) ASSERT_LE(std::abs(x[0]), 0.5 + 1e-3);
    }
}

TEST(Disturbed, UnstableTrajectoryTruncates) {
    const auto tr = sample_disturbed_trajectory(unstable1d(), State{0.5}, 10.0, 0.1, 0);
    EXPECT_TRUE(tr.truncated);
    EXPECT_LT(tr.times.back(), 2.0);
}

TEST(Disturbed, DerivativeStaysWithinEpsilon) {
    const auto p = spiral();
    const double eps = 0.1;
    const auto tr = sample_disturbed_trajectory(p, State{1.0, 0.0}, 5.0, eps, 42);
    ASSERT_EQ(tr.inputs.size() + 1, tr.states.size());
    for (std::size_t k = 0; k + 1 < tr.states.size(); ++k) {
        EXPECT_LE(norm(tr.inputs[k]), eps + 1e-12);
        const double h = tr.times[k + 1] - tr.times[k];
        ASSERT_GT(h, 0.0);
        const State slope = (tr.states[k + 1] - tr.states[k]) * (1.0 / h);
        const State mid = (tr.states[k + 1] + tr.states[k]) * 0.5;
        EXPECT_LE(norm(slope - p.eval_field(mid)), eps + 1e-3);
    }
}

TEST(Disturbed, DeterministicInSeed) {
    const auto p = spiral();
    const auto a = sample_disturbed_trajectory(p, State{1.0, 0.0}, 5.0, 0.1, 9);
    const auto b = sample_disturbed_trajectory(p, State{1.0, 0.0}, 5.0, 0.1, 9);
    const auto c = sample_disturbed_trajectory(p, State{1.0, 0.0}, 5.0, 0.1, 10);
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        EXPECT_EQ(a.states[k][0], b.states[k][0]);
        EXPECT_EQ(a.states[k][1], b.states[k][1]);
    }
    EXPECT_NE(a.states.back()[0], c.states.back()[0]);
}

TEST(Disturbed, CsvDump) {
    const auto tr = sample_disturbed_trajectory(lin1d(), State{0.5}, 0.5, 0.1, 1);
    std::ostringstream os;
    write_trajectory_csv(os, tr);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,x1");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, tr.states.size());
}

TEST(Lipschitz, EstimatesBracketTheOperatorNorm) {
    const double l1 = lipschitz_estimate(lin1d());
    EXPECT_GE(l1, 1.0);
    EXPECT_LE(l1, 1.3);
    EXPECT_LE(lipschitz_estimate(zero_field()), 1.2e-6);
    const double l2 = lipschitz_estimate(spiral());
    EXPECT_GE(l2, std::sqrt(1.25));
    EXPECT_LE(l2, 1.45);
}
