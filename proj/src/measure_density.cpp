#include "selfaffine/measure_density.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

#include <fmt/format.h>

#include "selfaffine/spatial_index.hpp"

namespace selfaffine {

const char* to_string(WindowFamily f) {
    switch (f) {
        case WindowFamily::Boxes: return "boxes";
        case WindowFamily::Balls: return "balls";
        case WindowFamily::Both: return "both";
    }
    return "?";
}

WindowFamily parse_window_family(const std::string& s) {
    if (s == "boxes") return WindowFamily::Boxes;
    if (s == "balls") return WindowFamily::Balls;
    if (s == "both") return WindowFamily::Both;
    throw Error(ErrorCode::Config, fmt::format("unknown window family '{}'", s));
}

namespace {

constexpr double kNone = -1.0;

bool is_diagonal(const Mat& a) {
    Mat off = a;
    off.diagonal().setZero();
    return off.isZero(0.0);
}

/// Sound diameter brackets of axis boxes by extent. Mollified values are
/// reduced by homogeneity (diagonal A) and rounded outward on a log grid.
class DiamCache {
  public:
    DiamCache(const PseudoNorm& w, double grid)
        : w_(w), grid_(grid), diag_(is_diagonal(w.matrix().entries())) {}

    Bracket operator()(const Vec& e) { return {lo(e), hi(e)}; }
    double hi(const Vec& e) { return bound(e, true); }
    double lo(const Vec& e) { return bound(e, false); }

  private:
    double bound(const Vec& e, bool upper) {
        if ((e.array() <= 0.0).all()) return 0.0;
        if (w_.variant() != NormVariant::Mollified) {
            Bracket b = w_.diam_extent(e);
            return upper ? b.hi : b.lo;
        }
        const int n = w_.dim();
        int k = 0;
        Vec r = e;
        if (diag_) {
            k = static_cast<int>(std::lround(std::log(e.norm()) / std::log(w_.scale())));
            for (int a = 0; a < n; ++a) r[a] = e[a] * std::pow(std::abs(w_.matrix().entries()(a, a)), -k);
        }
        std::vector<long> key(n);
        for (int a = 0; a < n; ++a) {
            if (r[a] <= 0.0) {
                key[a] = std::numeric_limits<long>::min();
                continue;
            }
            double l = std::log2(r[a]) / grid_;
            if (upper) {
                key[a] = static_cast<long>(std::ceil(l));
                while (node(key[a]) < r[a]) ++key[a];
            } else {
                key[a] = static_cast<long>(std::floor(l));
                while (node(key[a]) > r[a]) --key[a];
            }
        }
        Bracket b = lookup(key);
        return std::pow(w_.scale(), k) * (upper ? b.hi : b.lo);
    }

    double node(long j) const { return j == std::numeric_limits<long>::min() ? 0.0 : std::exp2(j * grid_); }

    Bracket lookup(const std::vector<long>& key) {
        std::shared_ptr<Entry> entry;
        {
            std::lock_guard<std::mutex> g(mu_);
            auto& slot = cache_[key];
            if (!slot) slot = std::make_shared<Entry>();
            entry = slot;
        }
        std::call_once(entry->once, [&] {
            Vec e(static_cast<int>(key.size()));
            for (std::size_t a = 0; a < key.size(); ++a) e[static_cast<int>(a)] = node(key[a]);
            entry->value = w_.diam_extent(e);
        });
        return entry->value;
    }

    struct Entry {
        std::once_flag once;
        Bracket value;
    };

    const PseudoNorm& w_;
    double grid_;
    bool diag_;
    std::mutex mu_;
    std::map<std::vector<long>, std::shared_ptr<Entry>> cache_;
};

struct WindowEval {
    bool swept = false;
    double raw = kNone, cert = kNone, lo = kNone;
};

double ratio(double mass, double diam, double s) { return diam > 0.0 ? mass / std::pow(diam, s) : kNone; }

/// Evaluates windows against a weighted cloud: raw mass ratio, the ratio of
/// the shrink-wrapped window (hull of the caught points plus the piece box),
/// and the neighbour-inclusive ratio used for the lower side.
class Sweeper {
  public:
    Sweeper(const ExpandingSystem& sys, const PseudoNorm& w, double s, const PointSet& mass, const Box& piece,
            double diam_grid)
        : sys_(sys), s_(s), mass_(mass), piece_(piece), n_(mass.n), diam_(w, diam_grid) {
        counter_ = BoxCounter(mass);
        all_ = mass.bbox();
        clip_ = w.variant() != NormVariant::Mollified;
        min_weight_ = 1.0;
        if (!mass.weights.empty()) min_weight_ = *std::min_element(mass.weights.begin(), mass.weights.end());
        if (n_ == 1) {
            std::vector<std::size_t> order(mass.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return mass.coords[a] < mass.coords[b]; });
            xs_.resize(order.size());
            prefix_.assign(order.size() + 1, 0.0);
            for (std::size_t i = 0; i < order.size(); ++i) {
                xs_[i] = mass.coords[order[i]];
                prefix_[i + 1] = prefix_[i] + (mass.weights.empty() ? 1.0 : mass.weights[order[i]]);
            }
        }
    }

    DiamCache& diam() { return diam_; }
    /// Shrink-wrapped windows whose diam_lo falls in [lo, hi] enter the lower side.
    void set_lower_range(double lo, double hi) {
        lower_lo_ = lo;
        lower_hi_ = hi;
    }

    /// Weighted count in a closed box and the bounding box of the caught points.
    double weigh(const Box& b, Box* hull) const {
        if (b.empty()) return 0.0;
        if (n_ == 1) {
            auto i0 = std::lower_bound(xs_.begin(), xs_.end(), b.lo[0]) - xs_.begin();
            auto i1 = std::upper_bound(xs_.begin(), xs_.end(), b.hi[0]) - xs_.begin();
            if (i1 <= i0) return 0.0;
            if (hull) *hull = Box{Vec::Constant(1, xs_[i0]), Vec::Constant(1, xs_[i1 - 1])};
            return prefix_[i1] - prefix_[i0];
        }
        // clipping to the data box tightens the hull but multiplies the
        // distinct extents, so the mollified variant keeps the window
        double c = counter_.count(b);
        if (hull && c > 0.0) *hull = clip_ ? Box{b.lo.cwiseMax(all_.lo), b.hi.cwiseMin(all_.hi)} : b;
        return c;
    }

    WindowEval box(const Box& win) {
        WindowEval e;
        e.swept = true;
        Box hull;
        double c = weigh(win, &hull);
        if (c <= 0.0) return e;
        e.raw = ratio(c, diam_.hi(win.extent()), s_);
        finish(e, c, hull);
        return e;
    }

    WindowEval ball(const ConvexWindow& b, const Bracket& d, std::size_t cap) {
        WindowEval e;
        Box bb = b.bounding_box(sys_);
        double pre = weigh(bb, nullptr);
        if (pre <= 0.0) {
            e.swept = true;
            return e;
        }
        if (pre / min_weight_ > static_cast<double>(cap)) return e;
        e.swept = true;
        const Mat inv = sys_.matrix().power(-b.k);
        // pieces v + piece meeting the ball have v + mid within t + rho of
        // the centre; the renorm is convex, so rho is attained at a corner
        const bool lower = d.lo >= lower_lo_ && d.lo <= lower_hi_;
        const Vec mid = piece_.center();
        const Vec m = 0.5 * piece_.extent();
        double rho = 0.0;
        if (lower) {
            for (std::size_t mask = 0; mask < (std::size_t{1} << n_); ++mask) {
                Vec y = m;
                for (int a = 0; a < n_; ++a)
                    if (mask >> a & 1) y[a] = -y[a];
                rho = std::max(rho, sys_.norm()(inv * y));
            }
        }
        double c = 0.0, near = 0.0;
        Vec lo = Vec::Constant(n_, std::numeric_limits<double>::infinity());
        Vec hi = -lo;
        const Box reach = lower ? Box{bb.lo.cwiseMin(bb.lo - mid - m), bb.hi.cwiseMax(bb.hi - mid + m)} : bb;
        counter_.visit(reach, [&](std::uint32_t i) {
            Vec x = mass_.point(i);
            const double wt = mass_.weights.empty() ? 1.0 : mass_.weights[i];
            if (lower && sys_.norm()(inv * (x + mid - b.center)) <= b.t + rho) near += wt;
            if (sys_.norm()(inv * (x - b.center)) > b.t) return;
            c += wt;
            lo = lo.cwiseMin(x);
            hi = hi.cwiseMax(x);
        });
        if (c <= 0.0) return e;
        e.raw = ratio(c, d.hi, s_);
        finish(e, c, clip_ ? Box{lo, hi} : bb);
        if (lower) e.lo = std::max(e.lo, ratio(near, d.lo, s_));
        return e;
    }

  private:
    void finish(WindowEval& e, double c, const Box& hull) {
        Box u = hull.plus(piece_);
        const double hi = diam_.hi(u.extent());
        e.cert = ratio(c, hi, s_);
        if (hi < lower_lo_) return;
        const double lo = diam_.lo(u.extent());
        if (lo >= lower_lo_ && lo <= lower_hi_)
            e.lo = ratio(weigh(Box{u.lo - piece_.hi, u.hi - piece_.lo}, nullptr), lo, s_);
    }

    const ExpandingSystem& sys_;
    double s_;
    const PointSet& mass_;
    Box piece_;
    int n_;
    DiamCache diam_;
    BoxCounter counter_;
    Box all_;
    bool clip_ = true;
    double min_weight_;
    double lower_lo_ = 0.0, lower_hi_ = -1.0;
    std::vector<double> xs_, prefix_;
};

/// Windows t + bbox(D_k) over translates t in A^k D_{M-k}: each holds one
/// depth-(M-k) cylinder of D_M.
std::vector<Box> cylinder_windows(const ExpandingSystem& sys, int depth, int k, std::size_t cap, double slack) {
    const int n = sys.dim();
    const Mat& a = sys.matrix().entries();
    const std::size_t nd = sys.digit_count();
    Vec lo = Vec::Zero(n), hi = Vec::Zero(n);
    Mat p = Mat::Identity(n, n);
    for (int j = 0; j < k; ++j) {
        Vec mn = Vec::Constant(n, std::numeric_limits<double>::infinity()), mx = -mn;
        for (const Vec& d : sys.digits()) {
            Vec v = p * d;
            mn = mn.cwiseMin(v);
            mx = mx.cwiseMax(v);
        }
        lo += mn;
        hi += mx;
        p = a * p;
    }
    const int rest = depth - k;
    const double total = std::pow(static_cast<double>(nd), rest);
    const std::size_t count = total <= static_cast<double>(cap) ? static_cast<std::size_t>(std::llround(total)) : cap;
    std::vector<Box> out(count);
    const long long cnt = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
    for (long long j = 0; j < cnt; ++j) {
        auto code = static_cast<std::uint64_t>(std::floor(static_cast<long double>(j) * total / count));
        std::vector<std::size_t> digit(static_cast<std::size_t>(rest));
        for (int i = 0; i < rest; ++i) {
            digit[static_cast<std::size_t>(i)] = code % nd;
            code /= nd;
        }
        Vec x = Vec::Zero(n);
        for (int i = rest - 1; i >= 0; --i) x = a * x + sys.digits()[digit[static_cast<std::size_t>(i)]];
        x = p * x;
        out[static_cast<std::size_t>(j)] = Box{x + lo - Vec::Constant(n, slack), x + hi + Vec::Constant(n, slack)};
    }
    return out;
}

std::vector<Vec> offset_patterns(int n) {
    std::vector<Vec> out;
    const double f[3] = {0.0, 0.5, 1.0};
    if (n <= 2) {
        int total = n == 1 ? 3 : 9;
        for (int c = 0; c < total; ++c) {
            Vec v(n);
            int r = c;
            for (int a = 0; a < n; ++a) {
                v[a] = f[r % 3];
                r /= 3;
            }
            out.push_back(v);
        }
    } else {
        for (double x : f) out.push_back(Vec::Constant(n, x));
    }
    return out;
}

struct RowSpec {
    std::string family;
    int level = 0, substep = 0;
    double scale = 0.0;
    std::vector<Box> boxes;
    std::vector<ConvexWindow> balls;
    Bracket ball_diam;
};

DensityEstimate run_sweep(const ExpandingSystem& sys, const PseudoNorm& w, double s, int depth, const PointSet& mass,
                          const Box& piece, const SweepOptions& o, bool cylinders) {
    if (!(s > 0.0)) throw Error(ErrorCode::Config, "density exponent must be positive");
    if (mass.size() == 0) throw Error(ErrorCode::EmptySet, "empty mass");
    if (o.substeps < 1 || o.levels < 0 || o.periods < 1) throw Error(ErrorCode::Config, "invalid sweep schedule");
    const int n = sys.dim();
    const double q = sys.q();
    const std::size_t anchors =
        std::min(mass.size(), o.max_anchors ? o.max_anchors : (n == 1 ? std::size_t{4096} : std::size_t{256}));
    const std::size_t ball_anchors = std::min(mass.size(), o.max_ball_anchors);
    const bool boxes = o.family != WindowFamily::Balls;
    const bool balls = o.family != WindowFamily::Boxes;

    Sweeper sw(sys, w, s, mass, piece, o.diam_grid);
    const Box unit = attractor_bbox(sys);
    const Vec ext = unit.extent();
    const double diam0 = sw.diam().hi(ext);
    // small-window range [r0 q^{-2/n}, r0] q^{M/n} with r0 = diam(K) q^{-2/n}
    sw.set_lower_range(diam0 * std::pow(q, (depth - 4.0) / n) * (1 - 1e-9),
                       diam0 * std::pow(q, (depth - 2.0) / n) * (1 + 1e-9));
    double geo = 1.0;
    for (int a = 0; a < n; ++a) geo *= ext[a];
    geo = geo > 0.0 ? std::pow(geo, 1.0 / n) : ext.maxCoeff();
    const double t_base = 0.5 * ext.norm();
    Box data = mass.bbox();
    const double mag = std::max({1.0, data.lo.cwiseAbs().maxCoeff(), data.hi.cwiseAbs().maxCoeff()});
    const double slack = 1e-12 * mag + sys.tau();
    const auto offsets = offset_patterns(n);

    DensityEstimate est;
    est.s = s;
    est.depth = depth;
    est.family = o.family;
    if (cylinders) est.certified = ratio(1.0, diam0, s);

    const int k0 = std::max(0, depth - o.levels);
    for (int k = k0; k <= depth; ++k) {
        const Mat ak = sys.matrix().power(k).cwiseAbs();
        for (int i = 0; i < o.substeps; ++i) {
            const double pos = k + static_cast<double>(i) / o.substeps;
            const double g = std::pow(q, static_cast<double>(i) / (n * o.substeps));
            const double scale = diam0 * std::pow(q, pos / n);
            std::vector<RowSpec> specs;
            auto spec = [&](const char* fam) {
                RowSpec r;
                r.family = fam;
                r.level = k;
                r.substep = i;
                r.scale = scale;
                return r;
            };
            if (boxes && cylinders && i == 0) {
                RowSpec r = spec("cylinder");
                r.boxes = cylinder_windows(sys, depth, k, o.max_windows, slack);
                specs.push_back(std::move(r));
            }
            if (boxes) {
                std::vector<std::pair<const char*, Vec>> shapes;
                shapes.emplace_back("box", (ak * ext * g - ext).cwiseMax(0.0));
                if (n > 1) shapes.emplace_back("cube", (Vec::Constant(n, geo * std::pow(q, pos / n)) - ext).cwiseMax(0.0));
                for (auto& [fam, e] : shapes) {
                    RowSpec r = spec(fam);
                    for (std::size_t j = 0; j < anchors; ++j) {
                        Vec p = mass.point(j * mass.size() / anchors);
                        for (const Vec& f : offsets) {
                            Vec lo = p - f.cwiseProduct(e);
                            r.boxes.push_back(Box{lo, lo + e});
                        }
                    }
                    specs.push_back(std::move(r));
                }
            }
            if (balls) {
                RowSpec r = spec("ball");
                const double t = t_base * g;
                r.ball_diam = w.diam_ball(t, k);
                for (std::size_t j = 0; j < ball_anchors; ++j)
                    r.balls.push_back(ConvexWindow::pseudo_ball(mass.point(j * mass.size() / ball_anchors), k, t));
                specs.push_back(std::move(r));
            }

            for (RowSpec& r : specs) {
                const std::size_t total = r.boxes.size() + r.balls.size();
                std::vector<WindowEval> slot(total);
                const long long cnt = static_cast<long long>(total);
#pragma omp parallel for schedule(dynamic, 64)
                for (long long j = 0; j < cnt; ++j) {
                    auto u = static_cast<std::size_t>(j);
                    slot[u] = u < r.boxes.size()
                                  ? sw.box(r.boxes[u])
                                  : sw.ball(r.balls[u - r.boxes.size()], r.ball_diam, o.ball_visit_cap);
                }
                DensityRow row;
                row.scale = r.scale;
                row.family = r.family;
                row.level = r.level;
                row.substep = r.substep;
                for (const WindowEval& e : slot) {
                    if (!e.swept) continue;
                    ++row.windows;
                    row.sup_ratio = std::max(row.sup_ratio, e.raw);
                    row.sup_certified = std::max(row.sup_certified, e.cert);
                    est.lo_side = std::max(est.lo_side, e.lo);
                }
                est.windows += row.windows;
                est.certified = std::max(est.certified, row.sup_certified);
                if (pos >= depth - o.periods - 1e-9) est.best = std::max(est.best, row.sup_ratio);
                est.rows.push_back(std::move(row));
            }
        }
    }
    std::stable_sort(est.rows.begin(), est.rows.end(),
                     [](const DensityRow& a, const DensityRow& b) { return a.scale < b.scale; });
    double run = 0.0;
    for (auto it = est.rows.rbegin(); it != est.rows.rend(); ++it) {
        run = std::max(run, it->sup_ratio);
        it->sup_beyond = run;
    }
    return est;
}

double nearest_euclid(const PointSet& pts, const Vec& x) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) best = std::min(best, (pts.point(i) - x).norm());
    return best;
}

/// Least-squares slope of y against x.
double slope(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 2) throw Error(ErrorCode::BudgetExceeded, "too few scales for a dimension fit");
    double mx = 0, my = 0;
    for (auto& [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= pts.size();
    my /= pts.size();
    double sxy = 0, sxx = 0;
    for (auto& [x, y] : pts) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    return sxy / sxx;
}

std::size_t occupied_cells(const PointSet& pts, const std::function<void(const double*, long*)>& key) {
    const int n = pts.n;
    std::vector<long> keys(pts.size() * n);
    const long long cnt = static_cast<long long>(pts.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < cnt; ++i) key(pts.coords.data() + i * n, keys.data() + i * n);
    std::vector<std::size_t> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto less = [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(keys.begin() + a * n, keys.begin() + a * n + n, keys.begin() + b * n,
                                            keys.begin() + b * n + n);
    };
    std::sort(order.begin(), order.end(), less);
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (i == 0 || less(order[i - 1], order[i])) ++distinct;
    return distinct;
}

}  // namespace

DensityEstimate upper_density_estimate(const ExpandingSystem& sys, const PseudoNorm& w, double s, int depth,
                                       const SweepOptions& opts, std::uint64_t budget) {
    ExpansionSet e = enumerate_DM(sys, depth, budget);
    return upper_density_estimate(sys, w, s, e, opts);
}

DensityEstimate upper_density_estimate(const ExpandingSystem& sys, const PseudoNorm& w, double s,
                                       const ExpansionSet& dm, const SweepOptions& opts) {
    return run_sweep(sys, w, s, dm.depth, dm.points, attractor_bbox(sys), opts, true);
}

DensityEstimate density_sweep(const ExpandingSystem& sys, const PseudoNorm& w, double s, int depth,
                              const PointSet& mass, const Box& piece, const SweepOptions& opts) {
    return run_sweep(sys, w, s, depth, mass, piece, opts, false);
}

double window_ratio(const ExpandingSystem& sys, const PseudoNorm& w, double s, const PointSet& mass,
                    const ConvexWindow& win) {
    double c = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i)
        if (win.contains(sys, mass.point(i))) c += mass.weights.empty() ? 1.0 : mass.weights[i];
    return c / std::pow(win.diam(w).hi, s);
}

AmplifiedDensity amplified_density(const ExpandingSystem& sys, const PseudoNorm& w, double s,
                                   const CollisionWitness& witness, int folds, double half_width,
                                   std::uint64_t budget) {
    Amplification amp = collision_amplify(sys, witness, folds, budget);
    AmplifiedDensity out;
    out.folds = folds;
    out.point = amp.point;
    out.multiplicity = static_cast<double>(std::max(amp.multiplicity_bound, amp.enumerated_weight.value_or(0)));
    out.window_diam = w.diam_extent(Vec::Constant(sys.dim(), 2.0 * half_width)).hi;
    out.ratio = out.multiplicity / std::pow(out.window_diam, s);
    out.piece_diam = w.diam_box(attractor_bbox(sys)).hi;
    return out;
}

MeasureBracket measure_estimate(const ExpandingSystem& sys, const PseudoNorm& w, int depth,
                                const MeasureOptions& opts, const ExpansionSet* dm) {
    if (dm && dm->depth != depth) throw Error(ErrorCode::Config, "expansion set depth mismatch");
    MeasureBracket mb;
    mb.s = sys.similarity_dimension();
    mb.depth = depth;
    if (sys.digit_count_exceeds_q())
        mb.warnings.push_back("#D exceeds q: s > n and the measure identity is outside its classical range");
    OscVerdict v = decide_osc(sys, opts.osc);
    mb.verdict = v.status;
    mb.witness = v.witness;
    mb.root_diam = w.diam_box(attractor_bbox(sys));
    mb.density = dm ? upper_density_estimate(sys, w, mb.s, *dm, opts.sweep)
                    : upper_density_estimate(sys, w, mb.s, depth, opts.sweep, opts.budget);

    mb.H_hi = 1.0 / mb.density.certified;
    mb.hi_method = "shrink-wrapped window cover";
    mb.H_lo = 1.0 / std::max(mb.density.lo_side, mb.density.certified);
    mb.lo_method = "neighbour-inclusive small windows";
    if (v.status == OscStatus::Fails && v.witness) {
        mb.amplified =
            amplified_density(sys, w, mb.s, *v.witness, opts.amplify_folds, opts.amplify_half_width, opts.budget);
        double amp_hi = std::pow(mb.amplified->piece_diam, mb.s) / mb.amplified->multiplicity;
        if (amp_hi < mb.H_hi) {
            mb.H_hi = amp_hi;
            mb.hi_method = fmt::format("collision amplification k={}", opts.amplify_folds);
        }
        mb.H_lo = 0.0;
        mb.lo_method = "open set condition fails";
    } else if (v.status == OscStatus::Unknown) {
        mb.warnings.push_back("open set condition undecided: the lower end is unsupported");
    }
    mb.H_hi *= 1.0 + opts.rounding;
    mb.H_lo *= 1.0 - opts.rounding;
    return mb;
}

ConvexDensityTrace convex_density_trace(const ExpandingSystem& sys, const PseudoNorm& w, const Vec& x, double s,
                                        const std::vector<double>& radii, const MeasureBracket& h,
                                        const TraceOptions& opts) {
    const int n = sys.dim();
    if (x.size() != n) throw Error(ErrorCode::Config, "base point dimension mismatch");
    const double nd = static_cast<double>(sys.digit_count());
    int cloud_depth = 0;
    while (cloud_depth < 30 && std::pow(nd, cloud_depth + 1) <= 200000.0) ++cloud_depth;
    AttractorCloud cloud = attractor_cloud(sys, cloud_depth);
    double dist = nearest_euclid(cloud.points, x);
    if (dist > cloud.err_radius * (1 + 1e-9) + 1e-12)
        throw Error(ErrorCode::PointNotOnAttractor,
                    fmt::format("point is {:.6g} from the cloud, beyond the error radius {:.6g}", dist,
                                cloud.err_radius));

    const Box unit = attractor_bbox(sys);
    std::vector<Vec> shapes{unit.extent()};
    if (n > 1) shapes.push_back(Vec::Ones(n));
    std::vector<std::vector<double>> combos;
    {
        const std::size_t m = opts.offsets.size();
        if (n <= 2) {
            std::size_t total = n == 1 ? m : m * m;
            for (std::size_t c = 0; c < total; ++c) {
                std::vector<double> v(n);
                std::size_t r = c;
                for (int a = 0; a < n; ++a) {
                    v[a] = opts.offsets[r % m];
                    r /= m;
                }
                combos.push_back(v);
            }
        } else {
            for (double f : opts.offsets) combos.push_back(std::vector<double>(n, f));
        }
    }

    std::map<int, std::unique_ptr<CylinderDecomposition>> decomps;
    int max_depth = 0;
    while (std::pow(nd, max_depth + 1) <= static_cast<double>(opts.budget)) ++max_depth;

    ConvexDensityTrace tr;
    tr.x = x;
    tr.s = s;
    for (double r : radii) {
        if (!(r > 0.0)) throw Error(ErrorCode::Config, "trace radii must be positive");
        int d = 0;
        while (d < max_depth && w.diam_box(attractor_bbox(sys, d)).hi > opts.cylinder_ratio * r) ++d;
        auto& dec = decomps[d];
        if (!dec) dec = std::make_unique<CylinderDecomposition>(sys, d, opts.budget);

        TraceEntry entry;
        entry.radius = r;
        entry.cylinder_depth = d;
        entry.value = {0.0, 0.0};
        for (const Vec& shape : shapes) {
            auto fits = [&](double lam) { return w.diam_extent(lam * shape).hi <= r; };
            double lo = 0.0, hi = 1.0;
            while (fits(hi)) {
                lo = hi;
                hi *= 2.0;
            }
            if (lo == 0.0) {
                lo = hi;
                while (!fits(lo) && lo > 1e-300) lo *= 0.5;
                hi = 2.0 * lo;
            }
            for (int it = 0; it < opts.bisection_steps; ++it) {
                double mid = 0.5 * (lo + hi);
                (fits(mid) ? lo : hi) = mid;
            }
            for (double frac : opts.fractions) {
                Vec e = frac * lo * shape;
                Bracket dd = w.diam_extent(e);
                for (const auto& off : combos) {
                    Vec blo = x;
                    for (int a = 0; a < n; ++a) blo[a] -= off[a] * e[a];
                    Bracket sig = dec->sigma(ConvexWindow::axis_box(Box{blo, blo + e}));
                    ++entry.windows;
                    if (dd.hi > 0.0) entry.value.lo = std::max(entry.value.lo, h.H_lo * sig.lo / std::pow(dd.hi, s));
                    double v = dd.lo > 0.0 ? h.H_hi * sig.hi / std::pow(dd.lo, s)
                                           : (sig.hi > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
                    entry.value.hi = std::max(entry.value.hi, v);
                }
            }
        }
        tr.entries.push_back(entry);
    }
    return tr;
}

DimEstimate dim_estimate(const ExpandingSystem& sys, const PseudoNorm& w, int depth, double tol,
                         std::uint64_t budget) {
    if (depth < 3) throw Error(ErrorCode::Config, "dimension estimates need depth >= 3");
    const int n = sys.dim();
    const double q = sys.q();
    DimEstimate out;
    out.depth = depth;
    AttractorCloud cloud = attractor_cloud(sys, depth, budget);
    const PointSet& pts = cloud.points;

    // A-adapted cells A^-L (z + [0,1)^n): covers by sets of w-diameter
    // q^{-L/n} diam_w([0,1]^n)
    const double cell_diam = w.diam_extent(Vec::Ones(n)).hi;
    for (int level = 1; level < depth; ++level) {
        const Mat al = sys.matrix().power(level);
        std::size_t c = occupied_cells(pts, [&](const double* p, long* key) {
            Vec y = al * Eigen::Map<const Eigen::VectorXd>(p, n);
            for (int a = 0; a < n; ++a) key[a] = static_cast<long>(std::floor(y[a] + 1e-7));
        });
        out.w_fit.emplace_back(level * std::log(q) / n - std::log(cell_diam), std::log(static_cast<double>(c)));
    }
    out.s_w_hat = slope(out.w_fit);

    // dyadic boxes over the root box
    const Box unit = attractor_bbox(sys);
    const double side0 = std::max(unit.extent().maxCoeff(), 1e-300);
    for (int j = 1; j <= 40; ++j) {
        const double side = side0 * std::exp2(-j);
        std::size_t c = occupied_cells(pts, [&](const double* p, long* key) {
            for (int a = 0; a < n; ++a) key[a] = static_cast<long>(std::floor((p[a] - unit.lo[a]) / side));
        });
        if (j > 2 && (static_cast<double>(c) > static_cast<double>(pts.size()) / 8.0 || side < 2.0 * cloud.err_radius))
            break;
        out.e_fit.emplace_back(j * std::log(2.0), std::log(static_cast<double>(c)));
    }
    // the finer half of the scales; coarse counts carry the lattice offset
    std::vector<std::pair<double, double>> fine(out.e_fit.begin() + out.e_fit.size() / 2, out.e_fit.end());
    out.euclid_dim_hat = slope(fine.size() >= 3 ? fine : out.e_fit);

    const auto& a = sys.matrix();
    out.bound_lo = std::log(q) / (n * std::log(a.lambda_max())) * out.s_w_hat;
    out.bound_hi = std::log(q) / (n * std::log(a.lambda_min())) * out.s_w_hat;
    out.inside = out.euclid_dim_hat >= out.bound_lo - tol && out.euclid_dim_hat <= out.bound_hi + tol;
    return out;
}

ConvolutionReport convolution_check(const ExpandingSystem& sys, int depth, const ConvexWindow& win,
                                    std::size_t samples, std::uint64_t seed, const PseudoNorm* w,
                                    const SweepOptions& sweep) {
    if (samples < 2) throw Error(ErrorCode::Config, "convolution check needs at least two samples");
    const int n = sys.dim();
    ConvolutionReport rep;
    rep.samples = samples;
    const int trunc = chaos_truncation(sys, 1e-12);
    PointSet xs = chaos_game(sys, samples, trunc, seed, 1);
    PointSet ys = chaos_game(sys, samples, trunc, seed, 2);
    ExpansionSet e = enumerate_DM(sys, depth);
    const PointSet& dm = e.points;
    BoxCounter counter(dm);
    const double inv_total = 1.0 / static_cast<double>(e.total_weight());
    const Box wb = win.bounding_box(sys);

    std::vector<double> left(samples), right(samples);
    const long long cnt = static_cast<long long>(samples);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < cnt; ++i) {
        auto u = static_cast<std::size_t>(i);
        left[u] = win.contains(sys, sys.matrix().apply_power(depth, xs.point(u))) ? 1.0 : 0.0;
        Vec y = ys.point(u);
        double c = 0.0;
        if (win.kind == ConvexWindow::Kind::Box) {
            c = counter.count(win.box.translated(-y));
        } else {
            counter.visit(wb.translated(-y), [&](std::uint32_t k) {
                if (win.contains(sys, dm.point(k) + y)) c += dm.weights[k];
            });
        }
        right[u] = c * inv_total;
    }
    auto moments = [&](const std::vector<double>& v, double& mean, double& se) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= v.size();
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        se = std::sqrt(ss / (v.size() - 1) / v.size());
    };
    moments(left, rep.lhs, rep.lhs_se);
    moments(right, rep.rhs, rep.rhs_se);
    double den = std::hypot(rep.lhs_se, rep.rhs_se);
    if (den > 0.0)
        rep.z = (rep.lhs - rep.rhs) / den;
    else
        rep.z = rep.lhs == rep.rhs ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), rep.lhs - rep.rhs);

    if (w) {
        const double s = sys.similarity_dimension();
        const Box none{Vec::Zero(n), Vec::Zero(n)};
        rep.density_mu = density_sweep(sys, *w, s, depth, dm, none, sweep).best;
        const std::size_t shifts = std::min<std::size_t>(64, samples);
        PointSet conv;
        conv.n = n;
        conv.coords.reserve(dm.size() * shifts * n);
        for (std::size_t i = 0; i < dm.size(); ++i)
            for (std::size_t j = 0; j < shifts; ++j) {
                Vec p = dm.point(i) + ys.point(j);
                conv.coords.insert(conv.coords.end(), p.data(), p.data() + n);
                conv.weights.push_back(dm.weights[i] / shifts);
            }
        rep.density_conv = density_sweep(sys, *w, s, depth, conv, none, sweep).best;
    }
    return rep;
}

}  // namespace selfaffine
