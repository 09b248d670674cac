#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "safecert/benchmarks.hpp"
#include "safecert/synthesis.hpp"

using namespace safecert;

namespace {

SafetyProblem lin1d() { return find_benchmark("lin1d-stable")->problem(); }

// x' = -1: the exit time of V = {x <= b} is exactly b - x.
SafetyProblem drift() {
    return parse_problem("dim = 1\nfield = [\"-1\"]\ndomain = [[-2.2, 2.2]]\ninit = \"x1^2 <= 0.01\"\nunsafe = \"x1^2 >= 4\"\n");
}

double upper_edge(const OccupancyGrid& v) {
    const auto cells = v.occupied();
    return v.geometry().cell_lo(cells.back())[0] + v.geometry().cell_width(0);
}

OccupancyGrid cells_of(const SafetyProblem& p, const char* pred) {
    return rasterize_set(parse_predicate(pred, p.dim()), make_geometry(p, {}));
}

ExitTimeField drift_field(std::size_t k) {
    static const SafetyProblem p = drift();
    CrossingOptions o;
    o.t_search = 0.5;
    return build_band_field(p, cells_of(p, "x1 <= 0"), k, o);
}

// Band of V = cells of [-1, 1] under x' = -x, grown until |nu| >= 2 delta.
ExitTimeField unit_interval_field(const SafetyProblem& p, double delta) {
    BandOptions b;
    b.grow_below = 2.0 * delta;
    CrossingOptions o;
    o.t_search = 2.0;
    return build_band_field(p, cells_of(p, "x1^2 <= 1"), b, o);
}

const SynthesisResult& lin1d_synthesis() {
    static const SynthesisResult r = [] {
        static const SafetyProblem p = lin1d();
        return synthesize_barrier(p, SynthesisOptions{});
    }();
    return r;
}

}  // namespace

TEST(Saturation, IdentityNearZeroAndClampedBeyondDelta) {
    const double d = 0.2;
    EXPECT_EQ(saturate(0.0, d), 0.0);
    EXPECT_EQ(saturate_derivative(0.0, d), 1.0);
    for (double s : {-0.1, -0.05, 0.03, 0.1}) EXPECT_DOUBLE_EQ(saturate(s, d), s);
    for (double s : {0.2, 0.5, 3.0}) {
        EXPECT_DOUBLE_EQ(saturate(s, d), d);
        EXPECT_DOUBLE_EQ(saturate(-s, d), -d);
        EXPECT_EQ(saturate_derivative(s, d), 0.0);
    }
}

TEST(Saturation, SmoothOddAndMonotone) {
    const double d = 0.2;
    double prev = saturate(-d, d);
    for (int i = 1; i <= 4000; ++i) {
        const double s = -d + 2 * d * i / 4000.0;
        const double v = saturate(s, d);
        EXPECT_GT(v, prev);
        EXPECT_DOUBLE_EQ(saturate(-s, d), -v);
        EXPECT_LE(std::abs(v), d);
        if (std::abs(s) < d - 1e-6) EXPECT_GT(saturate_derivative(s, d), 0.0);
        const double h = 1e-7;
        EXPECT_NEAR(saturate_derivative(s, d), (saturate(s + h, d) - saturate(s - h, d)) / (2 * h), 1e-5);
        prev = v;
    }
    // the derivative is continuous at both joins
    EXPECT_NEAR(saturate_derivative(0.1 + 1e-9, d), 1.0, 1e-6);
    EXPECT_NEAR(saturate_derivative(0.2 - 1e-9, d), 0.0, 1e-6);
}

TEST(LieDerivative, AnalyticCases) {
    const auto p = lin1d();
    const auto c = AnalyticBarrier::parse("0.3", 1);
    EXPECT_EQ(lie_derivative(c, p, State{0.7}), 0.0);
    const auto b = AnalyticBarrier::parse("1 - x1^2", 1);
    EXPECT_DOUBLE_EQ(lie_derivative(b, p, State{1.0}), 2.0);
    EXPECT_DOUBLE_EQ(lie_derivative(b, p, State{-0.5}), 0.5);
    EXPECT_THROW(AnalyticBarrier::parse("abs(x1)", 1), ParseError);
}

TEST(Mollify, OneCellKernelPreservesAffineExitTime) {
    const auto field = drift_field(8);
    const auto p = drift();
    MollifyOptions o;
    o.width = field.geometry().cell_width(0);
    o.delta = 0.2;
    const auto m = mollify_field(field, p, o);
    EXPECT_GT(m.checked, 0u);
    EXPECT_LE(m.sup_error, 1e-3);
    EXPECT_NEAR(m.min_lie, 1.0, 1e-3);
    const double b = upper_edge(field.certificate());
    for (std::size_t c : field.band().cells) {
        const State x = field.geometry().cell_center(c);
        if (const auto v = m.field.evaluate(x)) EXPECT_NEAR(*v, b - x[0], 1e-3);
    }
}

TEST(Mollify, TwoCellKernelOnTheStableLine) {
    const auto p = lin1d();
    const auto v = *search_certificate(p, CertificateOptions{}).certificate;
    CrossingOptions o;
    o.t_search = 2.0;
    const auto field = build_band_field(p, v, 8, o);
    // |nu| <= 0.05 stays inside an eight-cell band around the edge.
    MollifyOptions mo;
    mo.delta = 0.05;
    const auto m = mollify_field(field, p, mo);
    EXPECT_DOUBLE_EQ(m.width, 2 * v.geometry().cell_width(0));
    EXPECT_LT(m.sup_error, 0.025);
    EXPECT_GE(m.min_lie, 0.975);
}

TEST(Mollify, OversmoothingViolatesTheBounds) {
    const auto field = drift_field(8);
    const auto p = drift();
    MollifyOptions o;
    o.width = 100.0 * 17 * field.geometry().cell_width(0);
    try {
        mollify_field(field, p, o);
        FAIL() << "expected bounds-violated";
    } catch (const ConstructionError& e) {
        EXPECT_EQ(e.stage(), "mollification");
        EXPECT_NE(std::string(e.what()).find("bounds violated"), std::string::npos);
    }
    o.width = 0.5 * field.geometry().cell_width(0);
    EXPECT_THROW(mollify_field(field, p, o), Error);
}

TEST(SmoothedField, BsplineReproducesAffineDataWithExactGradient) {
    const auto geo = std::make_shared<const GridGeometry>(Box({{0, 1}, {0, 2}}), std::vector<std::size_t>{10, 20});
    std::vector<double> nodes(geo->size());
    for (std::size_t c = 0; c < geo->size(); ++c) {
        const State x = geo->cell_center(c);
        nodes[c] = 3 * x[0] - 2 * x[1] + 0.5;
    }
    const SmoothedField f(geo, nodes);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u0(0.2, 0.8), u1(0.2, 1.8);
    for (int i = 0; i < 100; ++i) {
        const State x{u0(rng), u1(rng)};
        State g;
        const auto v = f.evaluate(x, &g);
        ASSERT_TRUE(v);
        EXPECT_NEAR(*v, 3 * x[0] - 2 * x[1] + 0.5, 1e-12);
        EXPECT_NEAR(g[0], 3.0, 1e-10);
        EXPECT_NEAR(g[1], -2.0, 1e-10);
    }
    EXPECT_FALSE(f.active(State{0.01, 1.0}));
}

TEST(Assemble, ClampLevelsAndClosedForm) {
    const auto p = lin1d();
    const double d = 0.2;
    const auto field = unit_interval_field(p, d);
    MollifyOptions mo;
    mo.delta = d;
    const auto m = mollify_field(field, p, mo);
    const auto beta = assemble_barrier(m.field, field.membership(), d);
    EXPECT_DOUBLE_EQ(beta.value(State{1.5}), -0.2);
    EXPECT_DOUBLE_EQ(beta.value(State{0.0}), 0.2);
    EXPECT_DOUBLE_EQ(beta.value(State{-1.5}), -0.2);
    // Just inside the band, beta follows sigma(-ln(x / b)) with b the cell edge of V.
    const double b = upper_edge(field.certificate());
    for (double x : {0.95, 1.0, 1.05, 1.1}) EXPECT_NEAR(beta.value(State{x}), saturate(-std::log(x / b), d), 5e-3) << x;
    for (double x = -2.2; x <= 2.2; x += 0.001) EXPECT_LE(std::abs(beta.value(State{x})), d + 1e-15);
}

TEST(Assemble, RejectsBadClampAndThinBands) {
    const auto p = lin1d();
    const auto field = unit_interval_field(p, 0.2);
    MollifyOptions mo;
    const auto m = mollify_field(field, p, mo);
    EXPECT_THROW(assemble_barrier(m.field, field.membership(), 0.5), Error);
    EXPECT_THROW(assemble_barrier(m.field, field.membership(), 0.0), Error);

    CrossingOptions o;
    o.t_search = 2.0;
    const auto thin = build_band_field(p, cells_of(p, "x1^2 <= 1"), 3, o);
    // Raw band values as nodes: a three-cell band never reaches |nu| >= 0.2.
    std::vector<double> nodes(thin.geometry().size(), std::nan(""));
    for (std::size_t c : thin.band().cells)
        if (thin.defined(c)) nodes[c] = thin.at(c);
    try {
        assemble_barrier(SmoothedField(thin.certificate().geometry_ptr(), nodes), thin.membership(), 0.2);
        FAIL() << "expected band-too-thin";
    } catch (const ConstructionError& e) {
        EXPECT_EQ(e.stage(), "band-too-thin");
    }
}

TEST(Assemble, GradientMatchesFlowDifferences) {
    const auto p = lin1d();
    const double d = 0.2;
    const auto field = unit_interval_field(p, d);
    MollifyOptions mo;
    const auto m = mollify_field(field, p, mo);
    const auto beta = assemble_barrier(m.field, field.membership(), d);
    std::mt19937_64 rng(8);
    const auto& cells = field.band().cells;
    const double h = 1e-4;
    for (int i = 0; i < 100; ++i) {
        const State x = random_point_in_cell(field.geometry(), cells[rng() % cells.size()], rng);
        const double fd = (beta.value(integrate_flow(p, x, h)) - beta.value(integrate_flow(p, x, -h))) / (2 * h);
        EXPECT_NEAR(lie_derivative(beta, p, x), fd, 1e-3);
    }
}

TEST(Validate, AnalyticQuadraticPasses) {
    const auto p = lin1d();
    const auto rep = validate_barrier(AnalyticBarrier::parse("1 - x1^2", 1), p);
    EXPECT_TRUE(rep.pass());
    EXPECT_NEAR(rep.init.margin, 0.75, 0.01);
    EXPECT_NEAR(rep.lie.margin, 2.0, 0.05);
    EXPECT_GT(rep.unsafe.margin, 0.0);
    EXPECT_GT(rep.eps_b, 0.0);
    ASSERT_TRUE(rep.lie.worst);
    EXPECT_NEAR(std::abs((*rep.lie.worst)[0]), 1.0, 1e-9);
}

TEST(Validate, LinearFunctionFailsOnUnsafe) {
    const auto p = lin1d();
    const auto rep = validate_barrier(AnalyticBarrier::parse("x1", 1), p);
    EXPECT_FALSE(rep.pass());
    EXPECT_FALSE(rep.unsafe.holds());
    ASSERT_TRUE(rep.unsafe.worst);
    EXPECT_TRUE(p.unsafe()(*rep.unsafe.worst));
    EXPECT_GE((*rep.unsafe.worst)[0], 2.0);
    const auto failed = rep.failed_conditions();
    EXPECT_NE(std::find(failed.begin(), failed.end(), 3), failed.end());
    EXPECT_EQ(rep.eps_b, 0.0);
}

TEST(Validate, DeterministicAndSeeded) {
    const auto p = lin1d();
    const auto b = AnalyticBarrier::parse("1 - x1^2", 1);
    BarrierValidationOptions o;
    o.samples = 500;
    const auto a = validate_barrier(b, p, o);
    const auto c = validate_barrier(b, p, o);
    EXPECT_EQ(a.eps_b, c.eps_b);
    EXPECT_EQ(a.init.margin, c.init.margin);
    o.samples = 0;
    EXPECT_THROW(validate_barrier(b, p, o), Error);
}

TEST(Synthesis, StableLineBarrierPasses) {
    const auto& r = lin1d_synthesis();
    ASSERT_TRUE(r.report);
    EXPECT_TRUE(r.report->pass());
    EXPECT_GT(r.report->eps_b, 0.0);
    EXPECT_LT(*r.sup_error, 0.1);
    EXPECT_GT(*r.min_lie, 0.9);
    EXPECT_EQ(r.exit_time->sign_violations, 0u);
}

TEST(Synthesis, SignSeparationOnInitAndUnsafe) {
    const auto p = lin1d();
    const auto& r = lin1d_synthesis();
    const auto& beta = *r.barrier;
    const auto geo = make_geometry(p, {});
    for (const auto& x : detail::cell_points(rasterize_set(p.init(), geo))) EXPECT_GE(beta.value(x), 0.2 - 1e-12);
    for (const auto& x : detail::cell_points(rasterize_set(p.unsafe(), geo))) EXPECT_LE(beta.value(x), -0.2 + 1e-12);
}

TEST(Synthesis, BandPointsHaveLieNearOne) {
    const auto p = lin1d();
    const auto& r = lin1d_synthesis();
    const auto& beta = *r.barrier;
    std::size_t seen = 0;
    for (double x = -1.0; x <= 1.0; x += 1e-3) {
        const auto v = beta.smoothed().evaluate(State{x});
        if (!v || std::abs(*v) > 0.1) continue;
        ++seen;
        EXPECT_GE(lie_derivative(beta, p, State{x}), 0.9);
    }
    EXPECT_GT(seen, 10u);
}

TEST(Synthesis, ZeroSetIsTransversal) {
    const auto p = lin1d();
    const auto& beta = *lin1d_synthesis().barrier;
    for (double x = -2.2; x <= 2.2; x += 1e-4) {
        if (std::abs(beta.value(State{x})) <= 1e-3) EXPECT_GT(lie_derivative(beta, p, State{x}), 0.0) << x;
    }
}

TEST(Synthesis, DisturbedTrajectoriesStayOnThePositiveSide) {
    const auto p = lin1d();
    const auto& r = lin1d_synthesis();
    const auto& beta = *r.barrier;
    const double eps = 0.5 * r.report->eps_b;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (std::size_t k = 0; k < 1000; ++k) {
        const auto tr = sample_disturbed_trajectory(p, State{u(rng)}, 5.0, eps, k);
        for (const auto& x : tr.states) ASSERT_GE(beta.value(x), 0.0);
    }
}

TEST(Synthesis, EquilibriumOnTheBoundaryFailsNonSingularity) {
    const auto p = lin1d();
    SynthesisOptions o;
    o.given_certificate = cells_of(p, "x1 >= 0 and x1 <= 1");
    try {
        synthesize_barrier(p, o);
        FAIL() << "expected a construction failure";
    } catch (const ConstructionError& e) {
        EXPECT_EQ(e.stage(), "exit-time non-singularity");
    }
}

TEST(Synthesis, CertificateHuggingInitFailsSideConditions) {
    const auto p = lin1d();
    SynthesisOptions o;
    o.given_certificate = *search_certificate(p, CertificateOptions{}).certificate;
    try {
        synthesize_barrier(p, o);
        FAIL() << "expected a side-condition failure";
    } catch (const ConstructionError& e) {
        EXPECT_EQ(e.stage(), "clamp-level side conditions");
    }
}

TEST(Synthesis, CollarCoversTheClampTime) {
    const auto p = lin1d();
    const auto geo = make_geometry(p, {});
    // Backward flow from I over time delta moves at most delta e^{L delta} max|f|.
    const double w = geo->cell_width(0);
    const double collar = static_cast<double>(clamp_collar(p, *geo, 0.2, 1.2, 5.0)) * w;
    const double travel = 0.2 * std::exp(1.2 * 0.2) * 0.5;
    EXPECT_GE(collar, travel + 5 * w);
    EXPECT_LE(collar, travel + 8 * w);
}

TEST(BarrierCsv, SweepDump) {
    const auto p = lin1d();
    std::ostringstream os;
    write_barrier_csv(os, AnalyticBarrier::parse("1 - x1^2", 1), p, {16});
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x1,beta,lie");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 16u);
}
