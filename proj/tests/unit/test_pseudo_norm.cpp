#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "selfaffine/pseudo_norm.hpp"
#include "selfaffine/rng.hpp"
#include "support.hpp"

using namespace selfaffine;
using namespace selfaffine::testing;

namespace {

const PseudoNorm& mollified_diag() {
    static PseudoNorm w = PseudoNorm::build(product_system(), NormVariant::Mollified);
    return w;
}

Vec random_vec(StreamRng& rng, int n, double scale) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = scale * rng.uniform(-1, 1);
    return x;
}

void check_norm_properties(const PseudoNorm& w, std::uint64_t seed) {
    StreamRng rng(seed, 0, 0);
    const Mat& a = w.matrix().entries();
    CHECK(w(Vec::Zero(w.dim())) == 0.0);
    int bad_h = 0, bad_s = 0;
    for (int i = 0; i < 10000; ++i) {
        Vec x = random_vec(rng, w.dim(), std::pow(10.0, rng.uniform(-3, 3)));
        double wx = w(x), wax = w(a * x);
        if (!(std::abs(wax - w.scale() * wx) <= 1e-9 * wax)) ++bad_h;
        if (w(-x) != wx) ++bad_s;
        CHECK(wx > 0.0);
    }
    CHECK(bad_h == 0);
    CHECK(bad_s == 0);
}

}  // namespace

TEST_CASE("exact similarity norm") {
    auto w = PseudoNorm::build(system1(3, {0, 2}), NormVariant::ExactSimilarity);
    CHECK(w(vec({-2.5})) == doctest::Approx(2.5));
    CHECK(w(vec({3 * 1.7})) == doctest::Approx(w.scale() * w(vec({1.7}))));
    CHECK(w.scale() == doctest::Approx(3));
    auto rot = ExpandingSystem::create(spectral_data(mat(2, {1, -1, 1, 1})), {vec({0, 0}), vec({1, 0})},
                                       ArithmeticMode::ExactInteger);
    auto wr = PseudoNorm::build(rot, NormVariant::ExactSimilarity);
    CHECK(wr(vec({3, 4})) == doctest::Approx(5));
}

TEST_CASE("exact similarity needs a similarity") {
    try {
        PseudoNorm::build(product_system(), NormVariant::ExactSimilarity);
        FAIL("expected NotSimilarity");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotSimilarity);
    }
}

TEST_CASE("step norm in one dimension") {
    auto w = PseudoNorm::build(system1(2, {0, 1}), NormVariant::Step);
    CHECK(w(vec({1.5})) == doctest::Approx(1));
    CHECK(w(vec({3})) == doctest::Approx(2));
    CHECK(w(vec({-0.6})) == doctest::Approx(0.5));
    CHECK(w.in_V(vec({1.5})));
    CHECK_FALSE(w.in_V(vec({0.5})));
    CHECK(w.annulus_index(vec({3})) == 1);
}

TEST_CASE("homogeneity and symmetry, every variant") {
    check_norm_properties(PseudoNorm::build(system1(3, {0, 2}), NormVariant::ExactSimilarity), 1);
    check_norm_properties(PseudoNorm::build(product_system(), NormVariant::Step), 2);
    check_norm_properties(mollified_diag(), 3);
    auto shear = ExpandingSystem::create(spectral_data(mat(2, {2, 1, 0, 2})), {vec({0, 0}), vec({1, 0})},
                                         ArithmeticMode::Float);
    check_norm_properties(PseudoNorm::build(shear, NormVariant::Mollified), 4);
    check_norm_properties(PseudoNorm::build(system1(2, {0, 1}), NormVariant::Mollified), 5);
}

TEST_CASE("annulus bounds on V samples") {
    for (const PseudoNorm* w : {&mollified_diag()}) {
        const auto& c = w->constants();
        double cap = c.p * std::pow(w->q(), double(c.p) / w->dim());
        StreamRng rng(9, 0, 0);
        int bad = 0;
        for (int i = 0; i < 10000; ++i) {
            Vec z = w->sample_V(rng);
            CHECK(w->in_V(z));
            double v = (*w)(z);
            if (!(c.alpha <= v && v <= cap && v <= c.w_hi_V)) ++bad;
        }
        CHECK(bad == 0);
        CHECK(c.alpha > 0.0);
    }
}

TEST_CASE("mollified h is in [0, 1] and matches quadrature") {
    const auto& w = mollified_diag();
    StreamRng rng(13, 0, 0);
    for (int i = 0; i < 200; ++i) {
        Vec z = random_vec(rng, 2, 4.0);
        double h = w.h(z);
        CHECK(h >= -1e-12);
        CHECK(h <= 1 + 1e-12);
        CHECK(std::abs(h - w.h_direct(z)) <= w.params().interp_cap);
    }
}

TEST_CASE("euclidean comparison bounds") {
    const auto& w = mollified_diag();
    StreamRng rng(17, 0, 0);
    for (int i = 0; i < 2000; ++i) {
        Vec x = random_vec(rng, 2, std::pow(10.0, rng.uniform(-2, 2)));
        double r = x.norm();
        CHECK(w.lower_bound_at_euclid(r) <= w(x) * (1 + 1e-12));
        CHECK(w.upper_bound_at_euclid(r) >= w(x) * (1 - 1e-12));
    }
}

TEST_CASE("diam brackets") {
    auto w1 = PseudoNorm::build(system1(3, {0, 2}), NormVariant::ExactSimilarity);
    auto d = w1.diam_box(Box{vec({0}), vec({2})});
    CHECK(d.lo == doctest::Approx(2));
    CHECK(d.hi == doctest::Approx(2));
    PointSet single{1, {0.7}, {}};
    CHECK(w1.diam_points(single) == 0.0);
}

TEST_CASE("step diam of the unit square contains a dense boundary oracle") {
    auto w = PseudoNorm::build(product_system(), NormVariant::Step);
    auto d = w.diam_box(Box{vec({0, 0}), vec({1, 1})});
    double best = 0.0;
    const int per_side = 250000;
    for (int side = 0; side < 4; ++side) {
        for (int i = 0; i <= per_side; ++i) {
            double t = -1.0 + 2.0 * i / per_side;
            Vec z = side == 0 ? vec({t, -1}) : side == 1 ? vec({t, 1}) : side == 2 ? vec({-1, t}) : vec({1, t});
            best = std::max(best, w(z));
        }
    }
    CHECK(d.lo <= best * (1 + 1e-12));
    CHECK(best <= d.hi * (1 + 1e-12));
}

TEST_CASE("mollified diam bracket contains sampled values") {
    const auto& w = mollified_diag();
    Vec e = vec({1, 1});
    auto d = w.diam_extent(e);
    CHECK(d.lo <= d.hi);
    StreamRng rng(21, 0, 0);
    double best = 0.0;
    for (int i = 0; i < 200000; ++i) best = std::max(best, w(vec({rng.uniform(-1, 1), rng.uniform(-1, 1)})));
    CHECK(best <= d.hi * (1 + 1e-12));
    CHECK(d.lo <= d.hi);
    CHECK(d.hi <= (1 + w.params().diam_tol) * d.lo * (1 + 1e-12));
}

TEST_CASE("diam of point clouds is the pair maximum") {
    const auto& w = mollified_diag();
    StreamRng rng(23, 0, 0);
    PointSet p{2, {}, {}};
    for (int i = 0; i < 300; ++i) {
        p.coords.push_back(rng.uniform(-1, 1));
        p.coords.push_back(rng.uniform(-1, 1));
    }
    double best = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j) best = std::max(best, w(p.point(i) - p.point(j)));
    CHECK(w.diam_points(p) == best);
}

TEST_CASE("quasi-triangle constants") {
    auto abs = PseudoNorm::build(system1(3, {0, 2}), NormVariant::ExactSimilarity);
    double b = estimate_beta(abs, 5000, 1);
    CHECK(b <= 2.0 + 1e-12);
    CHECK(b >= 2.0 - 1e-3);
    CHECK(b >= 1.0);

    auto step = PseudoNorm::build(system1(2, {0, 1}), NormVariant::Step);
    CHECK(estimate_beta(step, 5000, 2) <= 2.0 + 1e-12);

    for (double eps : {0.5, 0.25, 0.1}) {
        double lam = estimate_lambda_eps(abs, eps, 20000, 3);
        CHECK(lam <= 1.1 / eps);
    }
    CHECK(estimate_lambda_eps(abs, 10.0, 2000, 4) == doctest::Approx(1.0));
}

TEST_CASE("calibrated beta holds on fresh pairs") {
    auto w = mollified_diag();
    calibrate(w, 20000, 5);
    double beta = w.constants().beta_hat * 1.05;
    StreamRng rng(77, 0, 0);
    int violations = 0;
    for (int i = 0; i < 100000; ++i) {
        Vec x = random_vec(rng, 2, std::pow(10.0, rng.uniform(-1, 1)));
        Vec y = random_vec(rng, 2, std::pow(10.0, rng.uniform(-1, 1)));
        if (w(x + y) > beta * std::max(w(x), w(y))) ++violations;
    }
    CHECK(violations == 0);
    CHECK(w.constants().lambda_eps.size() == 3);
}

TEST_CASE("comparability envelopes") {
    auto abs = PseudoNorm::build(system1(3, {0, 2}), NormVariant::ExactSimilarity);
    auto f = comparability_fit(abs, 0.5, 2000, 1);
    CHECK(f.c_est == doctest::Approx(1.0).epsilon(1e-9));

    auto fit = comparability_fit(mollified_diag(), 0.1, 5000, 2);
    CHECK(fit.exponent_lo == doctest::Approx(std::log(6.0) / (2 * std::log(3.1))));
    CHECK(fit.exponent_hi == doctest::Approx(std::log(6.0) / (2 * std::log(1.9))));
    CHECK(fit.c_est <= 1e3);
    CHECK(fit.slope_small >= fit.exponent_lo - 0.05);
    CHECK(fit.slope_small <= fit.exponent_hi + 0.05);
    CHECK(fit.slope_large >= fit.exponent_lo - 0.05);
    CHECK(fit.slope_large <= fit.exponent_hi + 0.05);
}

TEST_CASE("grid file round trip") {
    const auto& w = mollified_diag();
    std::stringstream ss;
    write_grid_file(ss, w.grid_file());
    GridFile g = read_grid_file(ss);
    CHECK(g.grid.values == w.grid()->values);
    CHECK(g.delta == 0.25);
    auto w2 = PseudoNorm::build(product_system(), NormVariant::Mollified, {}, &g.grid);
    StreamRng rng(31, 0, 0);
    for (int i = 0; i < 100; ++i) {
        Vec x = random_vec(rng, 2, 3.0);
        CHECK(w2(x) == w(x));
    }
}

TEST_CASE("norm variant strings") {
    for (auto v : {NormVariant::Mollified, NormVariant::Step, NormVariant::ExactSimilarity})
        CHECK(parse_norm_variant(to_string(v)) == v);
}
