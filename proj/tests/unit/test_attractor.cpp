#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "selfaffine/attractor.hpp"
#include "selfaffine/rng.hpp"
#include "support.hpp"

using namespace selfaffine;
using namespace selfaffine::testing;

namespace {

std::vector<double> sorted_coords(const PointSet& p) {
    std::vector<double> v = p.coords;
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

TEST_CASE("attractor cloud of the binary system") {
    auto sys = system1(2, {0, 1});
    auto c = attractor_cloud(sys, 3);
    std::vector<double> expect;
    for (int i = 0; i < 8; ++i) expect.push_back(i / 8.0);
    CHECK(sorted_coords(c.points) == expect);
    CHECK(c.err_radius == doctest::Approx(0.125).epsilon(1e-6));
    auto c0 = attractor_cloud(sys, 0);
    CHECK(c0.points.size() == 1);
    CHECK(c0.points.coords[0] == 0.0);
    CHECK(c0.err_radius == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("one application for the Cantor system") {
    auto c = attractor_cloud(system1(3, {0, 2}), 1);
    auto v = sorted_coords(c.points);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("set equation at cloud level") {
    auto sys = product_system();
    auto c3 = attractor_cloud(sys, 3), c4 = attractor_cloud(sys, 4);
    std::set<std::pair<long, long>> a, b;
    Mat inv = sys.matrix().power(-1);
    auto key = [](const Vec& x) { return std::make_pair(std::lround(x[0] * 1e9), std::lround(x[1] * 1e9)); };
    for (std::size_t i = 0; i < c3.points.size(); ++i)
        for (const Vec& d : sys.digits()) a.insert(key(inv * (c3.points.point(i) + d)));
    for (std::size_t i = 0; i < c4.points.size(); ++i) b.insert(key(c4.points.point(i)));
    CHECK(a == b);
}

TEST_CASE("support bounding boxes are tight") {
    Box k = attractor_bbox(system1(3, {0, 2}));
    CHECK(k.lo[0] == doctest::Approx(0.0));
    CHECK(k.hi[0] == doctest::Approx(1.0));
    CHECK(k.hi[0] >= 1.0);
    Box c1 = attractor_bbox(system1(3, {0, 2}), 1);
    CHECK(c1.hi[0] == doctest::Approx(1.0 / 3.0));
    Box sq = attractor_bbox(product_system());
    CHECK(sq.hi[0] == doctest::Approx(1.0));
    CHECK(sq.hi[1] == doctest::Approx(1.0));
    Box neg = attractor_bbox(system1(-2, {0, 1}, ArithmeticMode::Float));
    CHECK(neg.lo[0] == doctest::Approx(-2.0 / 3.0));
    CHECK(neg.hi[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("cloud stays inside the support box") {
    auto sys = ExpandingSystem::create(spectral_data(mat(2, {1, -1, 1, 1})), {vec({0, 0}), vec({1, 0})},
                                       ArithmeticMode::ExactInteger);
    Box k = attractor_bbox(sys);
    auto c = attractor_cloud(sys, 14);
    for (std::size_t i = 0; i < c.points.size(); ++i) CHECK(k.contains(c.points.point(i)));
}

TEST_CASE("chaos game") {
    auto sys = system1(2, {0, 1});
    int j = chaos_truncation(sys, 1e-9);
    CHECK(tail_radius(sys, j) <= 1e-9);
    auto s = chaos_game(sys, 100000, j, 42);
    double mean = 0.0;
    for (double x : s.coords) mean += x;
    mean /= 100000.0;
    double se = std::sqrt(1.0 / 12.0 / 100000.0);
    CHECK(std::abs(mean - 0.5) <= 3 * se);

    auto again = chaos_game(sys, 100000, j, 42);
    CHECK(again.coords == s.coords);
    auto part = chaos_game(sys, 1000, j, 42);
    CHECK(std::equal(part.coords.begin(), part.coords.end(), s.coords.begin()));
}

TEST_CASE("chaos samples are cloud points") {
    auto sys = system1(3, {0, 1, 3});
    auto cloud = attractor_cloud(sys, 8);
    auto s = chaos_game(sys, 500, 8, 3);
    std::set<long> keys;
    for (double x : cloud.points.coords) keys.insert(std::lround(x * 6561));
    for (double x : s.coords) CHECK(keys.count(std::lround(x * 6561)) == 1);
}

TEST_CASE("sigma brackets") {
    auto sys = system1(3, {0, 2});
    auto whole = sigma_bracket(sys, ConvexWindow::axis_box(Box{vec({-1}), vec({2})}), 3);
    CHECK(whole.lo == 1.0);
    CHECK(whole.hi == 1.0);
    auto none = sigma_bracket(sys, ConvexWindow::axis_box(Box{vec({5}), vec({6})}), 3);
    CHECK(none.lo == 0.0);
    CHECK(none.hi == 0.0);
    auto left = sigma_bracket(sys, ConvexWindow::axis_box(Box{vec({0}), vec({1.0 / 3.0})}), 1);
    CHECK(left.lo == 0.5);
    CHECK(left.hi == 0.5);
}

TEST_CASE("sigma brackets nest as depth grows") {
    auto sys = product_system();
    std::vector<CylinderDecomposition> levels;
    for (int m = 1; m <= 6; ++m) levels.emplace_back(sys, m);
    StreamRng rng(8, 0, 0);
    for (int t = 0; t < 50; ++t) {
        Vec lo = vec({rng.uniform(-0.2, 1), rng.uniform(-0.2, 1)});
        Vec ext = vec({rng.uniform(0, 0.8), rng.uniform(0, 0.8)});
        auto win = ConvexWindow::axis_box(Box{lo, lo + ext});
        for (std::size_t m = 1; m < levels.size(); ++m) {
            auto a = levels[m - 1].sigma(win), b = levels[m].sigma(win);
            CHECK(a.lo <= b.lo + 1e-12);
            CHECK(b.hi <= a.hi + 1e-12);
        }
        auto e = levels.back().sigma(win);
        double area = 1.0;
        for (int a = 0; a < 2; ++a) area *= std::max(0.0, std::min(1.0, lo[a] + ext[a]) - std::max(0.0, lo[a]));
        CHECK(e.lo <= area + 1e-12);
        CHECK(area <= e.hi + 1e-12);
    }
}

TEST_CASE("pseudo ball windows") {
    auto sys = product_system();
    CylinderDecomposition cyl(sys, 5);
    auto ball = ConvexWindow::pseudo_ball(vec({0.5, 0.5}), -1, 1.0);
    auto br = cyl.sigma(ball);
    CHECK(br.lo <= br.hi);
    // Monte Carlo mass of the ball inside the unit square
    StreamRng rng(4, 0, 0);
    int in = 0;
    for (int i = 0; i < 200000; ++i)
        if (ball.contains(sys, vec({rng.uniform(), rng.uniform()}))) ++in;
    double mc = in / 200000.0;
    CHECK(br.lo <= mc + 0.01);
    CHECK(mc <= br.hi + 0.01);
    Box bb = ball.bounding_box(sys);
    for (int i = 0; i < 20000; ++i) {
        Vec x = vec({rng.uniform(-2, 3), rng.uniform(-2, 3)});
        if (ball.contains(sys, x)) CHECK(bb.contains(x));
    }
}

TEST_CASE("chaos game mass sits inside sigma brackets") {
    auto sys = product_system();
    CylinderDecomposition cyl(sys, 5);
    auto s = chaos_game(sys, 20000, chaos_truncation(sys, 1e-10), 9);
    StreamRng rng(10, 0, 0);
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        Vec lo = vec({rng.uniform(0, 1), rng.uniform(0, 1)});
        Vec ext = vec({rng.uniform(0, 0.5), rng.uniform(0, 0.5)});
        Box b{lo, lo + ext};
        double mass = 0;
        for (std::size_t i = 0; i < s.size(); ++i) mass += b.contains(s.point(i));
        mass /= s.size();
        auto br = cyl.sigma(ConvexWindow::axis_box(b));
        double se = std::sqrt(std::max(mass * (1 - mass), 1e-12) / s.size());
        if (mass >= br.lo - 3 * se && mass <= br.hi + 3 * se) ++ok;
    }
    CHECK(ok >= 95);
}

TEST_CASE("pseudo Hausdorff distance") {
    auto w = PseudoNorm::build(system1(3, {0, 2}), NormVariant::ExactSimilarity);
    PointSet p{1, {}, {}}, q{1, {}, {}};
    for (int i = 0; i <= 10; ++i) {
        p.coords.push_back(i * 0.1);
        q.coords.push_back(i * 0.1 + 0.05);
    }
    CHECK(pseudo_hausdorff_distance(w, p, p) == 0.0);
    CHECK(pseudo_hausdorff_distance(w, p, q) == doctest::Approx(0.05));
    PointSet z{1, {0.0}, {}}, x{1, {-0.7}, {}};
    CHECK(pseudo_hausdorff_distance(w, z, x) == doctest::Approx(0.7));

    auto w2 = PseudoNorm::build(product_system(), NormVariant::Step);
    PointSet a{2, {0.0, 0.0}, {}}, b{2, {0.3, -0.2}, {}};
    CHECK(pseudo_hausdorff_distance(w2, a, b) == w2(vec({0.3, -0.2})));
}

TEST_CASE("pseudo Hausdorff distance matches brute force") {
    auto w = PseudoNorm::build(product_system(), NormVariant::Mollified);
    StreamRng rng(12, 0, 0);
    PointSet p{2, {}, {}}, q{2, {}, {}};
    for (int i = 0; i < 300; ++i) {
        p.coords.push_back(rng.uniform(0, 1));
        p.coords.push_back(rng.uniform(0, 1));
        q.coords.push_back(rng.uniform(0, 1.5));
        q.coords.push_back(rng.uniform(0, 0.5));
    }
    auto brute = [&](const PointSet& x, const PointSet& y) {
        double h = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double m = INFINITY;
            for (std::size_t j = 0; j < y.size(); ++j) m = std::min(m, w(x.point(i) - y.point(j)));
            h = std::max(h, m);
        }
        return h;
    };
    CHECK(pseudo_hausdorff_distance(w, p, q) == std::max(brute(p, q), brute(q, p)));
}

TEST_CASE("cylinder w-diameters contract by r per level") {
    auto sys = product_system();
    auto w = PseudoNorm::build(sys, NormVariant::Step);
    auto root = attractor_cloud(sys, 5);
    double d0 = w.diam_points(root.points);
    auto fine = attractor_cloud(sys, 7);
    // cylinder of the word starting (0, 0)
    PointSet cyl{2, {}, {}};
    Mat inv2 = sys.matrix().power(-2);
    for (std::size_t i = 0; i < root.points.size(); ++i) {
        Vec x = inv2 * root.points.point(i);
        cyl.coords.push_back(x[0]);
        cyl.coords.push_back(x[1]);
    }
    CHECK(w.diam_points(cyl) == doctest::Approx(d0 / 6.0));
    (void)fine;
}
