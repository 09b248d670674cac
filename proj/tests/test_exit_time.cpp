#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "safecert/benchmarks.hpp"
#include "safecert/certificate.hpp"
#include "safecert/exit_time.hpp"

using namespace safecert;

namespace {

SafetyProblem lin1d() { return find_benchmark("lin1d-stable")->problem(); }

OccupancyGrid cells_of(const SafetyProblem& p, const char* pred) {
    return rasterize_set(parse_predicate(pred, p.dim()), make_geometry(p, {}));
}

const OccupancyGrid& lin1d_certificate() {
    static const OccupancyGrid v = [] {
        CertificateOptions o;
        const auto r = search_certificate(lin1d(), o);
        return *r.certificate;
    }();
    return v;
}

CrossingOptions scan4() {
    CrossingOptions o;
    o.t_search = 2.0;
    return o;
}

}  // namespace

TEST(CrossingTime, OutsidePointEntersAtClosedFormTime) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    const double w = v.geometry().cell_width(0);
    const auto r = crossing_time(p, v, State{1.5});
    ASSERT_TRUE(r.time);
    EXPECT_NEAR(*r.time, std::log(1.5), 1e-6 + w);
    EXPECT_NEAR(*r.nu(), -0.4055, 1e-6 + w);
    EXPECT_TRUE(r.extra.empty());
}

TEST(CrossingTime, InsidePointUsesReverseTime) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    const double w = v.geometry().cell_width(0);
    const auto r = crossing_time(p, v, State{0.5});
    ASSERT_TRUE(r.time);
    EXPECT_NEAR(*r.time, -std::log(2.0), 1e-6 + 2 * w);
    EXPECT_NEAR(*r.nu(), 0.6931, 1e-6 + 2 * w);
}

TEST(CrossingTime, BoundaryPointHasSmallExitTime) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    const auto r = crossing_time(p, v, State{1.0});
    ASSERT_TRUE(r.time);
    EXPECT_LE(std::abs(*r.nu()), 2 * v.geometry().cell_width(0));
}

TEST(CrossingTime, NoCrossingWithinRange) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    CrossingOptions o;
    o.t_search = 0.1;
    EXPECT_FALSE(crossing_time(p, v, State{0.2}, o).time);
    EXPECT_THROW(crossing_time(p, v, State{3.0}, o), Error);
}

TEST(Band, BoundaryCellsAndCollar) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    const auto b = make_band(v, 8, 2.0);
    ASSERT_EQ(b.boundary.size(), 2u);
    for (std::size_t c : b.boundary) EXPECT_TRUE(v[c]);
    EXPECT_EQ(b.cells.size(), 34u);
    std::size_t in = 0;
    for (std::size_t c : b.cells) in += v[c] ? 1 : 0;
    EXPECT_EQ(in, 18u);
    EXPECT_THROW(make_band(v, 0, 2.0), Error);
}

TEST(BandField, OneDimensionalBandIsRegular) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    const auto field = build_band_field(p, v, 8, scan4());
    const auto& d = field.diagnostics();
    EXPECT_EQ(d.band_cells, 34u);
    EXPECT_EQ(d.undefined, 0u);
    EXPECT_EQ(d.sign_violations, 0u);
    EXPECT_EQ(d.extra_crossings, 0u);
    EXPECT_FALSE(d.continuity_suspect);
    EXPECT_LE(d.max_adjacent_jump, 5.0 * v.geometry().cell_width(0) / 0.9);
    for (std::size_t c : field.band().cells) {
        const double x = std::abs(v.geometry().cell_center(c)[0]);
        EXPECT_NEAR(field.at(c), -std::log(x), 2 * v.geometry().cell_width(0));
        EXPECT_LE(std::abs(field.at(c)), 2.0);
    }
}

TEST(BandField, EquilibriumOnBoundaryAborts) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1 >= 0 and x1 <= 1");
    try {
        build_band_field(p, v, 8, scan4());
        FAIL() << "expected a non-singularity failure";
    } catch (const ConstructionError& e) {
        EXPECT_EQ(e.stage(), "exit-time non-singularity");
    }
}

TEST(BandField, TooShortSearchFailsCoverage) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    CrossingOptions o;
    o.t_search = 0.01;
    try {
        build_band_field(p, v, 8, o);
        FAIL() << "expected a coverage failure";
    } catch (const ConstructionError& e) {
        EXPECT_EQ(e.stage(), "exit-time coverage");
    }
}

TEST(BandField, CertificateBandSignsAndUniqueness) {
    const auto p = lin1d();
    const auto& v = lin1d_certificate();
    const auto field = build_band_field(p, v, 8, scan4());
    const auto& d = field.diagnostics();
    EXPECT_EQ(d.undefined, 0u);
    EXPECT_EQ(d.sign_violations, 0u);
    EXPECT_EQ(d.extra_crossings, 0u);
    const auto& g = v.geometry();
    for (std::size_t c : field.band().cells) {
        bool near_boundary = false;
        g.for_each_neighbor(c, 1, [&](std::size_t j) { near_boundary = near_boundary || v[j] != v[c]; });
        if (near_boundary) continue;
        ASSERT_TRUE(field.defined(c));
        EXPECT_EQ(field.at(c) > 0.0, v[c]);
    }
}

TEST(BandField, CocycleSpotCheck) {
    const auto p = lin1d();
    const auto& v = lin1d_certificate();
    const auto field = build_band_field(p, v, 8, scan4());
    const auto& cells = field.band().cells;
    std::mt19937_64 rng(17);
    for (int i = 0; i < 100; ++i) {
        const State x = random_point_in_cell(v.geometry(), cells[rng() % cells.size()], rng);
        const double s = (i % 2 ? 0.1 : -0.1);
        const auto a = field.nu_exact(x);
        const auto b = field.nu_exact(integrate_flow(p, x, s));
        ASSERT_TRUE(a && b);
        EXPECT_NEAR(*b - *a, s, 1e-4);
    }
}

TEST(BandField, DiscreteLieDerivativeIsOne) {
    const auto p = lin1d();
    const auto& v = lin1d_certificate();
    const auto field = build_band_field(p, v, 8, scan4());
    const auto& cells = field.band().cells;
    std::mt19937_64 rng(23);
    const double h = 1e-2;
    for (int i = 0; i < 100; ++i) {
        const State x = random_point_in_cell(v.geometry(), cells[rng() % cells.size()], rng);
        const auto a = field.nu(x);
        const auto b = field.nu(integrate_flow(p, x, h));
        ASSERT_TRUE(a && b);
        const double lie = (*b - *a) / h;
        EXPECT_GE(lie, 0.95);
        EXPECT_LE(lie, 1.05);
    }
}

TEST(BandField, InterpolationMatchesTheCrossingSearch) {
    const auto p = lin1d();
    const auto& v = lin1d_certificate();
    const auto field = build_band_field(p, v, 8, scan4());
    std::mt19937_64 rng(5);
    const auto& cells = field.band().cells;
    for (int i = 0; i < 50; ++i) {
        const State x = random_point_in_cell(v.geometry(), cells[rng() % cells.size()], rng);
        const auto tab = field.interpolate(x);
        if (!tab) continue;
        EXPECT_NEAR(*tab, *field.nu_exact(x), 1e-3);
    }
}

TEST(Membership, SmoothedIndicatorAgreesAwayFromTheBoundary) {
    const auto p = find_benchmark("spiral2d")->problem();
    const auto v = cells_of(p, "x1^2 + x2^2 <= 4");
    const Membership exact(v), smooth(v, 5.0);
    const auto& g = v.geometry();
    const double w = g.cell_width(0);
    for (std::size_t c = 0; c < g.size(); c += 7) {
        const State x = g.cell_center(c);
        EXPECT_EQ(exact(x), v[c]);
        if (std::abs(norm(x) - 2.0) > 6 * w) EXPECT_EQ(smooth(x), v[c]) << format_point(x);
    }
    EXPECT_THROW(Membership(v, -1.0), Error);
}

TEST(BandField, SmoothedBoundaryOnSpiralHasUniqueCrossings) {
    const auto p = find_benchmark("spiral2d")->problem();
    const auto v = cells_of(p, "x1^2 + x2^2 <= 4");
    BandOptions b;
    b.width = 4;
    b.smoothing = 5.0;
    const auto field = build_band_field(p, v, b, scan4());
    const auto& d = field.diagnostics();
    EXPECT_EQ(d.undefined, 0u);
    EXPECT_EQ(d.sign_violations, 0u);
    std::mt19937_64 rng(2);
    const auto& cells = field.band().cells;
    for (int i = 0; i < 30; ++i) {
        const State x = random_point_in_cell(v.geometry(), cells[rng() % cells.size()], rng);
        const auto a = field.nu_exact(x);
        const auto c = field.nu_exact(integrate_flow(p, x, 0.2));
        ASSERT_TRUE(a && c);
        EXPECT_NEAR(*c - *a, 0.2, 1e-4);
    }
}

TEST(BandCsv, UndefinedMarkerAndHeader) {
    const auto p = lin1d();
    const auto v = cells_of(p, "x1^2 <= 1");
    const auto field = build_band_field(p, v, 2, scan4());
    std::ostringstream os;
    write_band_csv(os, field);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x1,nu");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 1);
    }
    EXPECT_EQ(rows, field.band().cells.size());
}
