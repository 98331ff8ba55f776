#include "selfaffine/attractor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "selfaffine/rng.hpp"

namespace selfaffine {

namespace {

PointSet scaled_values(const ExpandingSystem& sys, const ExpansionSet& e, int depth) {
    const int n = sys.dim();
    const Mat inv = sys.matrix().power(-depth);
    PointSet out;
    out.n = n;
    out.coords.resize(e.size() * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < e.size(); ++i) {
        Vec v = inv * e.points.point(i);
        for (int a = 0; a < n; ++a) out.coords[i * n + a] = v[a];
    }
    out.weights.assign(e.multiplicity.begin(), e.multiplicity.end());
    return out;
}

/// sup over y in A^-m K of <u, y>.
double support(const ExpandingSystem& sys, const Vec& u, int m) {
    const Mat inv_t = sys.matrix().power(-1).transpose();
    Vec g = sys.matrix().power(-m).transpose() * u;
    const double unorm = u.norm();
    double sum = 0.0, mag = 0.0;
    for (int j = 1; j <= 4096; ++j) {
        g = inv_t * g;
        double best = -std::numeric_limits<double>::infinity();
        for (const Vec& d : sys.digits()) best = std::max(best, g.dot(d));
        sum += best;
        mag += std::abs(best);
        double tail = unorm * tail_radius(sys, m + j);
        if (tail <= 1e-15 * std::max(mag, 1e-300) || tail == 0.0) return sum + tail + 1e-13 * mag;
    }
    return sum + unorm * tail_radius(sys, m + 4096) + 1e-13 * mag;
}

}  // namespace

double tail_radius(const ExpandingSystem& sys, int m) {
    return sys.norm().inverse_power_bound(m) * sys.attractor_radius() / sys.norm().lower_equivalence();
}

AttractorCloud attractor_cloud(const ExpandingSystem& sys, int depth, std::uint64_t budget) {
    AttractorCloud c;
    c.depth = depth;
    c.points = scaled_values(sys, enumerate_DM(sys, depth, budget), depth);
    c.err_radius = tail_radius(sys, depth);
    return c;
}

Box attractor_bbox(const ExpandingSystem& sys, int m) {
    const int n = sys.dim();
    Box b{Vec(n), Vec(n)};
    for (int a = 0; a < n; ++a) {
        Vec u = Vec::Zero(n);
        u[a] = 1.0;
        b.hi[a] = support(sys, u, m);
        b.lo[a] = -support(sys, -u, m);
    }
    return b;
}

int chaos_truncation(const ExpandingSystem& sys, double eps) {
    if (!(eps > 0.0)) throw Error(ErrorCode::Config, "truncation tolerance must be positive");
    for (int j = 0; j <= 100000; ++j)
        if (tail_radius(sys, j) <= eps) return j;
    throw Error(ErrorCode::BudgetExceeded, "truncation depth above 100000");
}

PointSet chaos_game(const ExpandingSystem& sys, std::size_t count, int truncation, std::uint64_t seed,
                    std::uint64_t stream) {
    const int n = sys.dim();
    const Mat inv = sys.matrix().power(-1);
    const std::uint64_t nd = sys.digit_count();
    PointSet out;
    out.n = n;
    out.coords.resize(count * static_cast<std::size_t>(n));
    const long long total = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < total; ++i) {
        StreamRng rng(seed, stream, static_cast<std::uint64_t>(i));
        std::vector<std::uint32_t> word(static_cast<std::size_t>(truncation));
        for (auto& d : word) d = static_cast<std::uint32_t>(rng.below(nd));
        Vec x = Vec::Zero(n);
        for (int j = truncation - 1; j >= 0; --j) x = inv * (x + sys.digits()[word[j]]);
        for (int a = 0; a < n; ++a) out.coords[static_cast<std::size_t>(i) * n + a] = x[a];
    }
    return out;
}

ConvexWindow ConvexWindow::axis_box(Box b) {
    if (b.empty()) throw Error(ErrorCode::EmptySet, "empty window box");
    ConvexWindow w;
    w.kind = Kind::Box;
    w.box = std::move(b);
    return w;
}

ConvexWindow ConvexWindow::pseudo_ball(Vec center, int k, double t) {
    if (!(t >= 0.0)) throw Error(ErrorCode::EmptySet, "pseudo ball radius must be non-negative");
    ConvexWindow w;
    w.kind = Kind::Ball;
    w.center = std::move(center);
    w.k = k;
    w.t = t;
    return w;
}

bool ConvexWindow::contains(const ExpandingSystem& sys, const Vec& x) const {
    if (kind == Kind::Box) return box.contains(x);
    return sys.norm()(sys.matrix().apply_power(-k, x - center)) <= t;
}

Box ConvexWindow::bounding_box(const ExpandingSystem& sys) const {
    if (kind == Kind::Box) return box;
    const Mat ak = sys.matrix().power(k);
    Vec half(center.size());
    for (int a = 0; a < center.size(); ++a) half[a] = t * ak.row(a).norm() / sys.norm().lower_equivalence();
    return Box::around(center, half);
}

ConvexWindow ConvexWindow::mapped(const ExpandingSystem& sys) const {
    const Mat& a = sys.matrix().entries();
    if (kind == Kind::Ball) return pseudo_ball(a * center, k + 1, t);
    Mat off = a;
    off.diagonal().setZero();
    if (!off.isZero(0.0)) throw Error(ErrorCode::Config, "the image of a box under a non-diagonal matrix is not a box");
    Vec p = a.diagonal().cwiseProduct(box.lo), r = a.diagonal().cwiseProduct(box.hi);
    return axis_box(Box{p.cwiseMin(r), p.cwiseMax(r)});
}

Bracket ConvexWindow::diam(const PseudoNorm& w) const {
    if (kind == Kind::Box) return w.diam_box(box);
    return w.diam_ball(t, k);
}

CylinderDecomposition::CylinderDecomposition(const ExpandingSystem& sys, int depth, std::uint64_t budget)
    : sys_(&sys), depth_(depth) {
    ExpansionSet e = enumerate_DM(sys, depth, budget);
    anchors_ = std::make_shared<PointSet>(scaled_values(sys, e, depth));
    shape_ = attractor_bbox(sys, depth);
    unit_mass_ = std::pow(static_cast<double>(sys.digit_count()), -depth);
    Box root = attractor_bbox(sys, 0);
    double scale = std::max({1.0, root.lo.cwiseAbs().maxCoeff(), root.hi.cwiseAbs().maxCoeff()});
    slack_ = 1e-12 * scale + sys.tau() * sys.matrix().op_norm(-depth);
    counter_ = BoxCounter(*anchors_);
}

Box CylinderDecomposition::cylinder_box(std::size_t i) const { return shape_.translated(anchors_->point(i)); }

CylinderDecomposition::Counts CylinderDecomposition::bracket_counts(const ConvexWindow& win) const {
    Counts c;
    const int n = anchors_->n;
    auto range = [&](const Vec& lo, const Vec& hi) {
        Box b{lo, hi};
        return b.empty() ? 0.0 : counter_.count(b);
    };
    if (win.kind == ConvexWindow::Kind::Box) {
        const Box& w = win.box;
        double inside = range(w.lo - shape_.lo - Vec::Constant(n, slack_),
                              w.hi - shape_.hi + Vec::Constant(n, slack_));
        double strict = range(w.lo - shape_.lo + Vec::Constant(n, slack_), w.hi - shape_.hi - Vec::Constant(n, slack_));
        c.inside = inside;
        c.meets = range(w.lo - shape_.hi - Vec::Constant(n, slack_), w.hi - shape_.lo + Vec::Constant(n, slack_));
        c.grazing = static_cast<std::uint64_t>(std::llround(inside - strict));
        return c;
    }
    // pseudo ball: corners decide containment since the ball is convex
    const auto& sys = *sys_;
    const Mat inv = sys.matrix().power(-win.k);
    const double ball_slack = slack_ * sys.matrix().op_norm(-win.k);
    Vec half = 0.5 * shape_.extent();
    double reach = 0.0;
    for (unsigned sgn = 0; sgn < (1u << n); ++sgn) {
        Vec d = half;
        for (int a = 0; a < n; ++a)
            if (sgn & (1u << a)) d[a] = -d[a];
        reach = std::max(reach, (inv * d).norm());
    }
    Box bb = win.bounding_box(sys);
    Box cand{bb.lo - shape_.hi - Vec::Constant(n, slack_), bb.hi - shape_.lo + Vec::Constant(n, slack_)};
    counter_.visit(cand, [&](std::uint32_t i) {
        Vec p = anchors_->point(i);
        double wgt = anchors_->weights.empty() ? 1.0 : anchors_->weights[i];
        Vec mid = p + shape_.center();
        double centre_val = sys.norm()(inv * (mid - win.center));
        if (centre_val - reach > win.t + ball_slack) return;
        c.meets += wgt;
        double worst = 0.0;
        for (unsigned corner = 0; corner < (1u << n); ++corner) {
            Vec z = p + shape_.lo;
            for (int a = 0; a < n; ++a)
                if (corner & (1u << a)) z[a] = p[a] + shape_.hi[a];
            worst = std::max(worst, sys.norm()(inv * (z - win.center)));
        }
        if (worst <= win.t + ball_slack) {
            c.inside += wgt;
            if (worst > win.t - ball_slack) ++c.grazing;
        }
    });
    return c;
}

Bracket CylinderDecomposition::sigma(const ConvexWindow& win) const {
    Counts c = bracket_counts(win);
    return {std::min(1.0, c.inside * unit_mass_), std::min(1.0, c.meets * unit_mass_)};
}

Bracket sigma_bracket(const ExpandingSystem& sys, const ConvexWindow& win, int depth, std::uint64_t budget) {
    return CylinderDecomposition(sys, depth, budget).sigma(win);
}

namespace {

double directed(const PseudoNorm& w, const PointSet& p, const PointSet& q) {
    const int n = q.n;
    Box bb = q.bbox();
    double ext = std::max(bb.extent().maxCoeff(), 1e-300);
    double cell = ext / std::max(1.0, std::ceil(std::pow(static_cast<double>(q.size()), 1.0 / n)));
    SpatialGrid grid(q, cell);
    const bool euclid = w.variant() == NormVariant::ExactSimilarity;
    std::vector<double> slot(p.size(), 0.0);
    const long long count = static_cast<long long>(p.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (long long ii = 0; ii < count; ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const double* xp = p.coords.data() + i * n;
        Vec x = p.point(i);
        // nearest Euclidean neighbour first, then every point that could beat it in w
        double near = std::numeric_limits<double>::infinity();
        std::uint32_t near_j = 0;
        auto take = [&](std::uint32_t j) {
            double d = (x - q.point(j)).norm();
            if (d < near || (d == near && j < near_j)) {
                near = d;
                near_j = j;
            }
        };
        for (int reach = 1;; reach *= 2) {
            if (std::pow(2.0 * reach + 1.0, n) > static_cast<double>(q.size())) {
                for (std::size_t j = 0; j < q.size(); ++j) take(static_cast<std::uint32_t>(j));
                break;
            }
            grid.visit_neighbourhood(xp, reach, take);
            if (std::isfinite(near) && near <= reach * cell) break;
        }
        double best = euclid ? near : w(x - q.point(near_j));
        double radius = near;
        if (!euclid) {
            radius = std::max(near, 1e-300);
            for (int it = 0; it < 400 && w.lower_bound_at_euclid(radius) < best; ++it) radius *= 1.25;
        }
        int reach = static_cast<int>(std::ceil(radius / cell));
        double total_cells = std::pow(2.0 * reach + 1.0, n);
        auto consider = [&](std::uint32_t j) {
            Vec d = x - q.point(j);
            if (d.norm() > radius) return;
            best = std::min(best, euclid ? d.norm() : w(d));
        };
        if (total_cells > static_cast<double>(q.size())) {
            for (std::size_t j = 0; j < q.size(); ++j) consider(static_cast<std::uint32_t>(j));
        } else {
            grid.visit_neighbourhood(xp, reach, consider);
        }
        slot[i] = best;
    }
    return *std::max_element(slot.begin(), slot.end());
}

}  // namespace

double pseudo_hausdorff_distance(const PseudoNorm& w, const PointSet& p, const PointSet& q) {
    if (p.size() == 0 || q.size() == 0) throw Error(ErrorCode::EmptySet, "Hausdorff distance of an empty cloud");
    if (p.n != q.n || p.n != w.dim()) throw Error(ErrorCode::Config, "dimension mismatch");
    return std::max(directed(w, p, q), directed(w, q, p));
}

}  // namespace selfaffine
