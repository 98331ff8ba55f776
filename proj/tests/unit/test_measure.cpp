#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "selfaffine/measure_density.hpp"
#include "selfaffine/rng.hpp"
#include "support.hpp"

using namespace selfaffine;
using namespace selfaffine::testing;

namespace {

PseudoNorm exact(const ExpandingSystem& sys) { return PseudoNorm::build(sys, NormVariant::ExactSimilarity); }

/// max over all index pairs i <= j of (j - i + 1) / (x_j - x_i + len)^s.
double interval_oracle(const std::vector<double>& xs, double len, double s) {
    double best = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i; j < xs.size(); ++j)
            best = std::max(best, static_cast<double>(j - i + 1) / std::pow(xs[j] - xs[i] + len, s));
    return best;
}

}  // namespace

TEST_CASE("window family names") {
    for (auto f : {WindowFamily::Boxes, WindowFamily::Balls, WindowFamily::Both})
        CHECK(parse_window_family(to_string(f)) == f);
    CHECK_THROWS_AS(parse_window_family("discs"), Error);
}

TEST_CASE("density of the integer interval tends to 1") {
    auto sys = system1(2, {0, 1});
    auto w = exact(sys);
    double prev = INFINITY;
    for (int m : {6, 9, 12}) {
        auto d = upper_density_estimate(sys, w, 1.0, m);
        // windows hold L + 1 points over length L >= 2^(m-2) - 1 on the top levels
        CHECK(d.best >= 1.0);
        CHECK(d.best == doctest::Approx(1.0 + 1.0 / (std::exp2(m - 2) - 1)).epsilon(1e-12));
        CHECK(d.best <= prev);
        prev = d.best;
        CHECK(d.certified == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("density of 3 Z tends to 1/3") {
    auto sys = system1(2, {0, 3});
    auto d = upper_density_estimate(sys, exact(sys), 1.0, 12);
    CHECK(d.best == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
    CHECK(d.certified == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sweep rows") {
    auto sys = system1(3, {0, 2});
    auto d = upper_density_estimate(sys, exact(sys), sys.similarity_dimension(), 8);
    REQUIRE(!d.rows.empty());
    for (std::size_t i = 1; i < d.rows.size(); ++i) {
        CHECK(d.rows[i - 1].scale <= d.rows[i].scale);
        CHECK(d.rows[i - 1].sup_beyond >= d.rows[i].sup_beyond);
    }
    for (const auto& r : d.rows) {
        CHECK(r.sup_beyond >= r.sup_ratio);
        CHECK(r.windows > 0);
    }
}

TEST_CASE("certified sweep matches the exhaustive interval oracle") {
    SUBCASE("Cantor") {
        auto sys = system1(3, {0, 2});
        const double s = sys.similarity_dimension();
        auto e = enumerate_DM(sys, 8);
        double oracle = interval_oracle(e.points.coords, 1.0, s);
        CHECK(oracle == doctest::Approx(1.0).epsilon(1e-12));
        auto d = upper_density_estimate(sys, exact(sys), s, 8);
        CHECK(d.certified <= oracle * (1 + 1e-9));
        CHECK(d.certified >= oracle * (1 - 1e-9));
    }
    SUBCASE("A = 4, D = {0, 1, 3}") {
        auto sys = system1(4, {0, 1, 3});
        const double s = sys.similarity_dimension();
        auto e = enumerate_DM(sys, 6);
        Box k = attractor_bbox(sys);
        double oracle = interval_oracle(e.points.coords, k.extent()[0], s);
        auto d = upper_density_estimate(sys, exact(sys), s, 6);
        CHECK(d.certified <= oracle * (1 + 1e-9));
        CHECK(d.certified >= 0.97 * oracle);
    }
}

TEST_CASE("enlarging the sweep never lowers the estimates") {
    auto sys = product_system();
    auto w = PseudoNorm::build(sys, NormVariant::Step);
    SweepOptions small, large;
    small.family = WindowFamily::Boxes;
    small.substeps = 2;
    large.substeps = 4;
    auto a = upper_density_estimate(sys, w, 2.0, 4, small);
    auto b = upper_density_estimate(sys, w, 2.0, 4, large);
    CHECK(b.best >= a.best);
    CHECK(b.certified >= a.certified);
    CHECK(b.windows > a.windows);
}

TEST_CASE("measure brackets") {
    SUBCASE("unit interval") {
        auto sys = system1(2, {0, 1});
        auto mb = measure_estimate(sys, exact(sys), 12);
        CHECK(mb.verdict == OscStatus::Holds);
        CHECK(mb.s == doctest::Approx(1.0));
        CHECK(mb.H_lo <= 1.0);
        CHECK(mb.H_hi >= 1.0);
        CHECK(mb.H_hi - mb.H_lo <= 0.01);
    }
    SUBCASE("[0, 3]") {
        auto sys = system1(2, {0, 3});
        auto mb = measure_estimate(sys, exact(sys), 12);
        CHECK(mb.H_lo <= 3.0);
        CHECK(mb.H_hi >= 3.0);
        CHECK(mb.H_hi - mb.H_lo <= 0.05);
    }
    SUBCASE("Cantor") {
        auto sys = system1(3, {0, 2});
        auto mb = measure_estimate(sys, exact(sys), 10);
        CHECK(mb.s == doctest::Approx(std::log(2.0) / std::log(3.0)));
        CHECK(mb.H_lo <= 1.0);
        CHECK(mb.H_hi >= 1.0);
        CHECK(mb.H_hi - mb.H_lo <= 0.15);
        CHECK(mb.warnings.empty());
    }
    SUBCASE("twin dragon tile") {
        // area-one lattice tile under a Euclidean w: isodiametric value 4/pi
        auto sys = ExpandingSystem::create(spectral_data(mat(2, {1, -1, 1, 1})), {vec({0, 0}), vec({1, 0})},
                                           ArithmeticMode::ExactInteger);
        auto mb = measure_estimate(sys, exact(sys), 10);
        CHECK(mb.s == doctest::Approx(2.0));
        CHECK(mb.H_lo <= 4.0 / std::numbers::pi);
        CHECK(mb.H_hi >= 4.0 / std::numbers::pi);
    }
    SUBCASE("collisions drive the upper end to zero") {
        auto sys = system1(3, {0, 1, 3});
        auto mb = measure_estimate(sys, exact(sys), 6);
        CHECK(mb.verdict == OscStatus::Fails);
        REQUIRE(mb.amplified);
        CHECK(mb.amplified->multiplicity >= 1024);
        CHECK(mb.amplified->ratio > 1000.0);
        CHECK(mb.H_hi <= 0.1);
        CHECK(mb.H_lo == 0.0);
        CHECK(mb.hi_method.find("amplification") != std::string::npos);
    }
    SUBCASE("more digits than q") {
        auto sys = system1(2, {0, 1, 2}, ArithmeticMode::Float);
        auto mb = measure_estimate(sys, exact(sys), 6);
        CHECK(!mb.warnings.empty());
    }
}

TEST_CASE("measure invariants") {
    std::vector<std::pair<ExpandingSystem, NormVariant>> cases;
    cases.emplace_back(system1(3, {0, 2}), NormVariant::ExactSimilarity);
    cases.emplace_back(system1(4, {0, 1, 3}), NormVariant::ExactSimilarity);
    cases.emplace_back(product_system(), NormVariant::Step);
    cases.emplace_back(system1(2, {0, 1}), NormVariant::Mollified);
    for (auto& [sys, v] : cases) {
        auto w = PseudoNorm::build(sys, v);
        auto mb = measure_estimate(sys, w, 5);
        CHECK(mb.H_lo <= mb.H_hi);
        CHECK(mb.H_hi <= std::pow(mb.root_diam.hi, mb.s) * (1 + 1e-9));
    }
}

TEST_CASE("lower end against single-window covers") {
    struct Case {
        ExpandingSystem sys;
        NormVariant v;
        int depth;
    };
    std::vector<Case> cases{{system1(3, {0, 2}), NormVariant::ExactSimilarity, 8},
                            {system1(2, {0, 3}), NormVariant::ExactSimilarity, 8},
                            {product_system(), NormVariant::Step, 5}};
    for (auto& c : cases) {
        auto w = PseudoNorm::build(c.sys, c.v);
        auto mb = measure_estimate(c.sys, w, c.depth);
        REQUIRE(mb.verdict == OscStatus::Holds);
        CylinderDecomposition cyl(c.sys, c.depth + 2);
        Box k = attractor_bbox(c.sys);
        StreamRng rng(77, 0, 0);
        const int n = c.sys.dim();
        for (int t = 0; t < 100; ++t) {
            Vec lo(n), hi(n);
            for (int a = 0; a < n; ++a) {
                double x = rng.uniform(k.lo[a] - 0.2, k.hi[a]), y = rng.uniform(k.lo[a], k.hi[a] + 0.2);
                lo[a] = std::min(x, y);
                hi[a] = std::max(x, y);
            }
            auto win = ConvexWindow::axis_box(Box{lo, hi});
            double lhs = mb.H_lo * cyl.sigma(win).lo;
            CHECK(lhs <= std::pow(win.diam(w).hi, mb.s) + 1e-6);
        }
    }
}

TEST_CASE("scale covariance of window ratios") {
    auto check = [](const ExpandingSystem& sys, const PseudoNorm& w, int depth, bool boxes) {
        const double s = sys.similarity_dimension();
        auto e = enumerate_DM(sys, depth);
        PointSet img = e.points;
        const Mat& a = sys.matrix().entries();
        for (std::size_t i = 0; i < img.size(); ++i) {
            Vec p = a * e.points.point(i);
            for (int j = 0; j < img.n; ++j) img.coords[i * img.n + j] = p[j];
            img.weights[i] *= static_cast<double>(sys.digit_count());
        }
        Box bb = e.points.bbox();
        StreamRng rng(5, 0, 0);
        int nonzero = 0;
        for (int t = 0; t < 40; ++t) {
            Vec c(img.n);
            for (int j = 0; j < img.n; ++j) c[j] = rng.uniform(bb.lo[j], bb.hi[j]);
            ConvexWindow win = boxes ? ConvexWindow::axis_box(Box::around(c, 0.5 * (bb.extent() * rng.uniform(0.05, 0.6))))
                                     : ConvexWindow::pseudo_ball(c, depth - 2, rng.uniform(0.5, 2.0));
            double r1 = window_ratio(sys, w, s, e.points, win);
            double r2 = window_ratio(sys, w, s, img, win.mapped(sys));
            CHECK(r2 == doctest::Approx(r1).epsilon(1e-9));
            nonzero += r1 > 0;
        }
        CHECK(nonzero > 10);
    };
    auto prod = product_system();
    check(prod, PseudoNorm::build(prod, NormVariant::Step), 5, true);
    check(prod, PseudoNorm::build(prod, NormVariant::Step), 5, false);
    check(prod, PseudoNorm::build(prod, NormVariant::Mollified), 5, false);
    auto cantor = system1(3, {0, 2});
    check(cantor, exact(cantor), 8, true);
    check(cantor, exact(cantor), 8, false);
}

TEST_CASE("convolution identity") {
    auto sys = system1(2, {0, 1});
    SUBCASE("whole space") {
        auto r = convolution_check(sys, 2, ConvexWindow::axis_box(Box{vec({-10}), vec({10})}), 1000, 3);
        CHECK(r.lhs == 1.0);
        CHECK(r.rhs == 1.0);
        CHECK(r.z == 0.0);
    }
    SUBCASE("disjoint window") {
        auto r = convolution_check(sys, 2, ConvexWindow::axis_box(Box{vec({50}), vec({60})}), 1000, 3);
        CHECK(r.lhs == 0.0);
        CHECK(r.rhs == 0.0);
        CHECK(r.z == 0.0);
    }
    SUBCASE("unit window at depth 2") {
        auto r = convolution_check(sys, 2, ConvexWindow::axis_box(Box{vec({0}), vec({1})}), 100000, 11);
        CHECK(r.lhs == doctest::Approx(0.25).epsilon(0.05));
        CHECK(std::abs(r.z) <= 3.0);
    }
    SUBCASE("product system with a ball and the sweep comparison") {
        auto prod = product_system();
        auto w = PseudoNorm::build(prod, NormVariant::Step);
        auto r = convolution_check(prod, 2, ConvexWindow::pseudo_ball(vec({1.5, 3.5}), 1, 1.0), 50000, 12, &w);
        CHECK(std::abs(r.z) <= 3.5);
        CHECK(r.lhs > 0.0);
        CHECK(r.density_mu > 0.0);
        CHECK(r.density_conv > 0.0);
    }
}

TEST_CASE("dimension estimates") {
    auto cantor = system1(3, {0, 2});
    auto dc = dim_estimate(cantor, exact(cantor), 14);
    CHECK(dc.s_w_hat == doctest::Approx(std::log(2.0) / std::log(3.0)).epsilon(1e-6));
    CHECK(std::abs(dc.euclid_dim_hat - std::log(2.0) / std::log(3.0)) < 0.05);
    CHECK(dc.inside);

    auto prod = product_system();
    auto dp = dim_estimate(prod, PseudoNorm::build(prod, NormVariant::Step), 7);
    CHECK(dp.s_w_hat == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(dp.euclid_dim_hat >= 1.9);
    CHECK(dp.euclid_dim_hat <= 2.1);
    CHECK(dp.bound_lo == doctest::Approx(std::log(6.0) / std::log(3.0)));
    CHECK(dp.bound_hi == doctest::Approx(std::log(6.0) / std::log(2.0)));
    CHECK(dp.inside);

    auto unit = system1(2, {0, 1});
    auto du = dim_estimate(unit, exact(unit), 12);
    CHECK(du.s_w_hat == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(du.euclid_dim_hat == doctest::Approx(1.0).epsilon(0.02));
    CHECK(du.bound_lo == doctest::Approx(du.bound_hi));
}

TEST_CASE("convex density trace") {
    auto sys = system1(2, {0, 1});
    auto w = exact(sys);
    auto mb = measure_estimate(sys, w, 12);
    std::vector<double> radii{0.5, 0.25, 0.125, 1.0 / 16, 1.0 / 64};
    for (double x : {0.5, 0.0, 1.0 / 3.0}) {
        auto tr = convex_density_trace(sys, w, vec({x}), 1.0, radii, mb);
        REQUIRE(tr.entries.size() == radii.size());
        for (const auto& e : tr.entries) {
            CHECK(e.value.lo >= 0.0);
            CHECK(e.value.lo <= 1.0 + 1e-9);
            CHECK(e.value.hi >= 1.0 - 1e-9);
            CHECK(e.value.lo >= 0.9);
            CHECK(e.value.hi <= 1.1);
        }
    }
    CHECK_THROWS_AS(convex_density_trace(sys, w, vec({5.0}), 1.0, radii, mb), Error);
    try {
        convex_density_trace(sys, w, vec({-0.5}), 1.0, radii, mb);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PointNotOnAttractor);
    }
}

TEST_CASE("sweeps do not depend on the thread count") {
    auto sys = product_system();
    auto w = PseudoNorm::build(sys, NormVariant::Mollified);
    MeasureOptions o;
    o.sweep.substeps = 2;
    o.sweep.levels = 3;
    int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    auto a = measure_estimate(sys, w, 4, o);
    omp_set_num_threads(4);
    auto b = measure_estimate(sys, w, 4, o);
    omp_set_num_threads(saved);
    CHECK(a.H_lo == b.H_lo);
    CHECK(a.H_hi == b.H_hi);
    REQUIRE(a.density.rows.size() == b.density.rows.size());
    for (std::size_t i = 0; i < a.density.rows.size(); ++i) {
        CHECK(a.density.rows[i].sup_ratio == b.density.rows[i].sup_ratio);
        CHECK(a.density.rows[i].windows == b.density.rows[i].windows);
    }
}
