#include "selfaffine/digits.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "selfaffine/spatial_index.hpp"

namespace selfaffine {

namespace {

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw Error(ErrorCode::BudgetExceeded, "expansion values exceed 64-bit range");
    return r;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw Error(ErrorCode::BudgetExceeded, "expansion values exceed 64-bit range");
    return r;
}

IVec checked_apply(const IMat& m, const IVec& v) {
    IVec out = IVec::Zero(v.size());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out[i] = checked_add(out[i], checked_mul(m(i, j), v[j]));
    return out;
}

IMat checked_power(const IMat& m, int k) {
    IMat r = IMat::Identity(m.rows(), m.cols());
    for (int s = 0; s < k; ++s) {
        IMat next = IMat::Zero(m.rows(), m.cols());
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j)
                for (int l = 0; l < m.cols(); ++l) next(i, j) = checked_add(next(i, j), checked_mul(r(i, l), m(l, j)));
        r = next;
    }
    return r;
}

/// N^k, saturating at UINT64_MAX.
std::uint64_t word_count(std::size_t n, int k) {
    std::uint64_t r = 1;
    for (int i = 0; i < k; ++i) {
        if (r > std::numeric_limits<std::uint64_t>::max() / n) return std::numeric_limits<std::uint64_t>::max();
        r *= n;
    }
    return r;
}

bool lex_less(const std::int64_t* a, const std::int64_t* b, int n) {
    for (int i = 0; i < n; ++i)
        if (a[i] != b[i]) return a[i] < b[i];
    return false;
}

bool lex_less(const double* a, const double* b, int n) {
    for (int i = 0; i < n; ++i)
        if (a[i] != b[i]) return a[i] < b[i];
    return false;
}

struct IVecHash {
    std::size_t operator()(const IVec& v) const noexcept {
        std::uint64_t h = 0x243F6A8885A308D3ULL;
        for (int i = 0; i < v.size(); ++i) h = mix64(h ^ static_cast<std::uint64_t>(v[i]));
        return static_cast<std::size_t>(h);
    }
};

struct IVecEq {
    bool operator()(const IVec& a, const IVec& b) const { return a.size() == b.size() && a == b; }
};

ExpansionSet initial_set(const ExpandingSystem& sys) {
    ExpansionSet e;
    e.n = sys.dim();
    e.depth = 0;
    e.digit_count = sys.digit_count();
    e.exact = sys.exact().has_value();
    e.denominator = e.exact ? sys.exact()->denominator : 1;
    e.tau = sys.tau();
    e.points.n = e.n;
    e.points.coords.assign(e.n, 0.0);
    e.points.weights = {1.0};
    e.multiplicity = {1};
    e.word_code = {0};
    if (e.exact) e.keys.assign(e.n, 0);
    return e;
}

}  // namespace

std::uint64_t ExpansionSet::total_weight() const {
    return std::accumulate(multiplicity.begin(), multiplicity.end(), std::uint64_t{0});
}

bool ExpansionSet::all_distinct() const {
    return std::all_of(multiplicity.begin(), multiplicity.end(), [](std::uint64_t m) { return m == 1; });
}

Word decode_word(std::uint64_t code, std::size_t digit_count, int depth) {
    Word w(depth);
    for (int j = 0; j < depth; ++j) {
        w[j] = static_cast<int>(code % digit_count);
        code /= digit_count;
    }
    return w;
}

std::uint64_t encode_word(const Word& w, std::size_t digit_count) {
    std::uint64_t code = 0;
    for (int j = static_cast<int>(w.size()) - 1; j >= 0; --j) code = code * digit_count + static_cast<std::uint64_t>(w[j]);
    return code;
}

ExpansionSet refine(const ExpandingSystem& sys, const ExpansionSet& prev, std::uint64_t budget) {
    const int n = prev.n;
    const std::size_t nd = sys.digit_count();
    const int m = prev.depth;
    if (word_count(nd, m + 1) > budget)
        throw Error(ErrorCode::BudgetExceeded, fmt::format("{}^{} words exceed the point budget {}", nd, m + 1, budget));
    const std::uint64_t place = word_count(nd, m);
    const std::size_t cand = prev.size() * nd;

    ExpansionSet out;
    out.n = n;
    out.depth = m + 1;
    out.digit_count = nd;
    out.exact = prev.exact;
    out.denominator = prev.denominator;
    out.tau = prev.tau;
    out.collision = prev.collision;

    std::vector<std::uint64_t> cw(cand), cc(cand);
    std::vector<std::size_t> order(cand);
    std::iota(order.begin(), order.end(), std::size_t{0});

    if (prev.exact) {
        const auto& ex = *sys.exact();
        IMat am = checked_power(ex.matrix, m);
        std::vector<IVec> shift;
        for (const IVec& d : ex.digits) shift.push_back(checked_apply(am, d));
        std::vector<std::int64_t> ck(cand * n);
        for (std::size_t i = 0; i < prev.size(); ++i) {
            for (std::size_t d = 0; d < nd; ++d) {
                std::size_t c = i * nd + d;
                for (int a = 0; a < n; ++a) ck[c * n + a] = checked_add(prev.keys[i * n + a], shift[d][a]);
                cw[c] = prev.multiplicity[i];
                cc[c] = prev.word_code[i] + static_cast<std::uint64_t>(d) * place;
            }
        }
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            if (lex_less(&ck[x * n], &ck[y * n], n)) return true;
            if (lex_less(&ck[y * n], &ck[x * n], n)) return false;
            return cc[x] < cc[y];
        });
        for (std::size_t r = 0; r < cand; ++r) {
            std::size_t c = order[r];
            bool same = !out.multiplicity.empty() &&
                        std::equal(&ck[c * n], &ck[c * n] + n, out.keys.end() - n);
            if (same) {
                if (!out.collision) out.collision = ExpansionSet::Coincidence{m + 1, out.word_code.back(), cc[c]};
                out.multiplicity.back() += cw[c];
            } else {
                out.keys.insert(out.keys.end(), &ck[c * n], &ck[c * n] + n);
                out.multiplicity.push_back(cw[c]);
                out.word_code.push_back(cc[c]);
            }
        }
        out.points.n = n;
        out.points.coords.resize(out.keys.size());
        for (std::size_t i = 0; i < out.keys.size(); ++i)
            out.points.coords[i] = static_cast<double>(out.keys[i]) / static_cast<double>(out.denominator);
    } else {
        Mat am = sys.matrix().power(m);
        std::vector<Vec> shift;
        for (const Vec& d : sys.digits()) shift.push_back(am * d);
        std::vector<double> cx(cand * n);
        for (std::size_t i = 0; i < prev.size(); ++i) {
            for (std::size_t d = 0; d < nd; ++d) {
                std::size_t c = i * nd + d;
                for (int a = 0; a < n; ++a) cx[c * n + a] = prev.points.coords[i * n + a] + shift[d][a];
                cw[c] = prev.multiplicity[i];
                cc[c] = prev.word_code[i] + static_cast<std::uint64_t>(d) * place;
            }
        }
        const double tau = prev.tau;
        std::vector<std::size_t> rep;  // candidate index of each cluster's representative
        std::vector<std::uint64_t> mult, code;
        if (tau > 0.0) {
            std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells;
            auto key = [&](std::size_t c) {
                CellKey k;
                for (int a = 0; a < n; ++a)
                    k.c[a] = static_cast<std::int64_t>(std::clamp(std::floor(cx[c * n + a] / tau), -4.0e18, 4.0e18));
                return k;
            };
            int side = 3, total = 1;
            for (int a = 0; a < n; ++a) total *= side;
            for (std::size_t c = 0; c < cand; ++c) {
                CellKey base = key(c);
                std::size_t found = std::numeric_limits<std::size_t>::max();
                for (int t = 0; t < total; ++t) {
                    CellKey k = base;
                    int r = t;
                    for (int a = 0; a < n; ++a) {
                        k.c[a] += r % side - 1;
                        r /= side;
                    }
                    auto it = cells.find(k);
                    if (it == cells.end()) continue;
                    for (std::size_t cl : it->second) {
                        std::size_t rc = rep[cl];
                        bool near = true;
                        for (int a = 0; a < n && near; ++a) near = std::abs(cx[rc * n + a] - cx[c * n + a]) <= tau;
                        if (near) found = std::min(found, cl);
                    }
                }
                if (found != std::numeric_limits<std::size_t>::max()) {
                    if (!out.collision)
                        out.collision = ExpansionSet::Coincidence{m + 1, std::min(code[found], cc[c]),
                                                                  std::max(code[found], cc[c])};
                    mult[found] += cw[c];
                    code[found] = std::min(code[found], cc[c]);
                } else {
                    cells[base].push_back(rep.size());
                    rep.push_back(c);
                    mult.push_back(cw[c]);
                    code.push_back(cc[c]);
                }
            }
        } else {
            std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                if (lex_less(&cx[x * n], &cx[y * n], n)) return true;
                if (lex_less(&cx[y * n], &cx[x * n], n)) return false;
                return cc[x] < cc[y];
            });
            for (std::size_t r = 0; r < cand; ++r) {
                std::size_t c = order[r];
                if (!rep.empty() && std::equal(&cx[c * n], &cx[c * n] + n, &cx[rep.back() * n])) {
                    if (!out.collision) out.collision = ExpansionSet::Coincidence{m + 1, code.back(), cc[c]};
                    mult.back() += cw[c];
                } else {
                    rep.push_back(c);
                    mult.push_back(cw[c]);
                    code.push_back(cc[c]);
                }
            }
        }
        std::vector<std::size_t> idx(rep.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
            if (lex_less(&cx[rep[x] * n], &cx[rep[y] * n], n)) return true;
            if (lex_less(&cx[rep[y] * n], &cx[rep[x] * n], n)) return false;
            return code[x] < code[y];
        });
        out.points.n = n;
        for (std::size_t i : idx) {
            out.points.coords.insert(out.points.coords.end(), &cx[rep[i] * n], &cx[rep[i] * n] + n);
            out.multiplicity.push_back(mult[i]);
            out.word_code.push_back(code[i]);
        }
    }
    out.points.weights.assign(out.multiplicity.begin(), out.multiplicity.end());
    return out;
}

ExpansionSet enumerate_DM(const ExpandingSystem& sys, int depth, std::uint64_t budget) {
    if (depth < 0) throw Error(ErrorCode::Config, "depth must be non-negative");
    if (word_count(sys.digit_count(), depth) > budget)
        throw Error(ErrorCode::BudgetExceeded,
                    fmt::format("{}^{} words exceed the point budget {}", sys.digit_count(), depth, budget));
    ExpansionSet e = initial_set(sys);
    for (int m = 0; m < depth; ++m) e = refine(sys, e, budget);
    return e;
}

double min_separation(const ExpansionSet& eset) {
    if (!eset.all_distinct()) return 0.0;
    if (eset.size() < 2) return std::numeric_limits<double>::infinity();
    return closest_pair(eset.points).first;
}

double min_separation(const ExpansionSet& eset, const PseudoNorm& w) {
    if (!eset.all_distinct()) return 0.0;
    if (eset.size() < 2) return std::numeric_limits<double>::infinity();
    if (w.variant() == NormVariant::ExactSimilarity) return closest_pair(eset.points).first;
    const PointSet& p = eset.points;
    auto [d, pair] = closest_pair(p);
    double best = w(p.point(pair.first) - p.point(pair.second));
    double radius = d;
    for (int it = 0; it < 200 && w.lower_bound_at_euclid(radius) < best; ++it) radius *= 1.25;
    SpatialGrid grid(p, radius);
    for (std::size_t i = 0; i < p.size(); ++i) {
        Vec xi = p.point(i);
        grid.visit_neighbourhood(p.coords.data() + i * p.n, 1, [&](std::uint32_t j) {
            if (j <= i) return;
            Vec diff = xi - p.point(j);
            if (diff.norm() > radius) return;
            best = std::min(best, w(diff));
        });
    }
    return best;
}

Vec word_value(const ExpandingSystem& sys, const Word& w) {
    Vec v = Vec::Zero(sys.dim());
    for (int j = static_cast<int>(w.size()) - 1; j >= 0; --j) v = sys.matrix().entries() * v + sys.digits()[w[j]];
    return v;
}

IVec word_value_exact(const ExpandingSystem& sys, const Word& w) {
    if (!sys.exact()) throw Error(ErrorCode::Config, "exact word values need an exact arithmetic mode");
    const auto& ex = *sys.exact();
    IVec v = IVec::Zero(sys.dim());
    for (int j = static_cast<int>(w.size()) - 1; j >= 0; --j) {
        v = checked_apply(ex.matrix, v);
        for (int a = 0; a < v.size(); ++a) v[a] = checked_add(v[a], ex.digits[w[j]][a]);
    }
    return v;
}

const char* to_string(OscStatus s) {
    switch (s) {
        case OscStatus::Holds: return "Holds";
        case OscStatus::Fails: return "Fails";
        case OscStatus::Unknown: return "Unknown";
    }
    return "Unknown";
}

bool verify_witness(const ExpandingSystem& sys, const CollisionWitness& w) {
    if (w.word_a.size() != w.word_b.size() || w.word_a == w.word_b || w.word_a.empty()) return false;
    for (const Word* word : {&w.word_a, &w.word_b})
        for (int d : *word)
            if (d < 0 || static_cast<std::size_t>(d) >= sys.digit_count()) return false;
    if (sys.exact()) return word_value_exact(sys, w.word_a) == word_value_exact(sys, w.word_b);
    return (word_value(sys, w.word_a) - word_value(sys, w.word_b)).lpNorm<Eigen::Infinity>() <= sys.tau();
}

namespace {

CollisionWitness make_witness(const ExpandingSystem& sys, Word a, Word b) {
    CollisionWitness w;
    w.depth = static_cast<int>(a.size());
    w.word_a = std::move(a);
    w.word_b = std::move(b);
    w.value_a = word_value(sys, w.word_a);
    w.value_b = word_value(sys, w.word_b);
    w.exact = sys.exact().has_value();
    w.distance = w.exact ? 0.0 : (w.value_a - w.value_b).norm();
    return w;
}

OscVerdict automaton(const ExpandingSystem& sys, const OscOptions& opts) {
    const auto& ex = *sys.exact();
    const int n = sys.dim();
    const std::size_t nd = ex.digits.size();

    std::vector<IVec> delta;
    for (std::size_t a = 0; a < nd; ++a)
        for (std::size_t b = 0; b < nd; ++b) delta.push_back(ex.digits[a] - ex.digits[b]);
    std::sort(delta.begin(), delta.end(), [&](const IVec& x, const IVec& y) { return lex_less(x.data(), y.data(), n); });
    delta.erase(std::unique(delta.begin(), delta.end(), IVecEq{}), delta.end());

    auto to_vec = [&](const IVec& t) { return Vec(t.cast<double>()); };
    double cmax = 0.0;
    for (const IVec& c : delta) cmax = std::max(cmax, sys.norm()(to_vec(c)));
    const double bound = sys.norm().inverse_tail_sum() * cmax * (1.0 + 1e-9);

    OscVerdict v;
    v.method = "automaton";
    v.state_bound = bound;

    std::vector<IVec> states;
    std::vector<std::ptrdiff_t> parent;
    std::vector<std::size_t> via;  // delta index used to enter the state
    std::vector<int> level;
    std::unordered_map<IVec, std::size_t, IVecHash, IVecEq> seen;
    std::deque<std::size_t> queue;
    auto add = [&](const IVec& t, std::ptrdiff_t par, std::size_t c, int lv) {
        if (seen.count(t)) return;
        if (states.size() >= opts.state_budget)
            throw Error(ErrorCode::StateBudgetExceeded,
                        fmt::format("more than {} difference states", opts.state_budget));
        seen.emplace(t, states.size());
        queue.push_back(states.size());
        states.push_back(t);
        parent.push_back(par);
        via.push_back(c);
        level.push_back(lv);
    };
    for (std::size_t c = 0; c < delta.size(); ++c) {
        if ((delta[c].array() == 0).all()) continue;
        if (sys.norm()(to_vec(delta[c])) <= bound) add(delta[c], -1, c, 1);
    }
    while (!queue.empty()) {
        std::size_t s = queue.front();
        queue.pop_front();
        IVec at = checked_apply(ex.matrix, states[s]);
        for (std::size_t c = 0; c < delta.size(); ++c) {
            IVec u = at + delta[c];
            if ((u.array() == 0).all()) {
                // chain of differences from the top position down to position 0
                std::vector<std::size_t> chain{c};
                for (std::ptrdiff_t p = static_cast<std::ptrdiff_t>(s); p >= 0; p = parent[p]) chain.push_back(via[p]);
                const int depth = static_cast<int>(chain.size());
                Word wa(depth), wb(depth);
                for (int j = 0; j < depth; ++j) {
                    const IVec& diff = delta[chain[j]];
                    bool done = false;
                    for (std::size_t a = 0; a < nd && !done; ++a)
                        for (std::size_t b = 0; b < nd && !done; ++b)
                            if (ex.digits[a] - ex.digits[b] == diff) {
                                wa[j] = static_cast<int>(a);
                                wb[j] = static_cast<int>(b);
                                done = true;
                            }
                }
                v.status = OscStatus::Fails;
                v.depth_reached = depth;
                v.witness = make_witness(sys, wa, wb);
                v.discreteness_delta = 0.0;
                return v;
            }
            if (sys.norm()(to_vec(u)) <= bound) add(u, static_cast<std::ptrdiff_t>(s), c, level[s] + 1);
        }
    }
    v.status = OscStatus::Holds;
    v.depth_reached = level.empty() ? 0 : *std::max_element(level.begin(), level.end());
    v.reachable_states = states;
    std::sort(v.reachable_states.begin(), v.reachable_states.end(),
              [&](const IVec& x, const IVec& y) { return lex_less(x.data(), y.data(), n); });
    v.discreteness_delta = 1.0 / static_cast<double>(ex.denominator);
    return v;
}

}  // namespace

OscVerdict decide_osc(const ExpandingSystem& sys, const OscOptions& opts) {
    if (sys.exact()) return automaton(sys, opts);
    OscVerdict v;
    v.method = "enumeration";
    ExpansionSet e = initial_set(sys);
    for (int m = 1; m <= opts.max_depth; ++m) {
        if (word_count(sys.digit_count(), m) > opts.point_budget) break;
        e = refine(sys, e, opts.point_budget);
        v.depth_reached = m;
        TrendRow row;
        row.depth = m;
        row.words = word_count(sys.digit_count(), m);
        row.distinct = e.size();
        row.min_separation = min_separation(e);
        v.trend.push_back(row);
        if (e.collision) {
            const auto& c = *e.collision;
            Word wa = decode_word(c.code_a, sys.digit_count(), c.depth);
            Word wb = decode_word(c.code_b, sys.digit_count(), c.depth);
            v.status = OscStatus::Fails;
            v.witness = make_witness(sys, wa, wb);
            v.discreteness_delta = 0.0;
            return v;
        }
        v.discreteness_delta = row.min_separation;
    }
    v.status = OscStatus::Unknown;
    return v;
}

Amplification collision_amplify(const ExpandingSystem& sys, const CollisionWitness& witness, int folds,
                                std::uint64_t budget) {
    if (!verify_witness(sys, witness)) throw Error(ErrorCode::InvalidWitness, "witness words do not coincide");
    if (folds < 0 || folds > 62) throw Error(ErrorCode::Config, "fold count must lie in [0, 62]");
    const int m = witness.depth;
    const int n = sys.dim();
    Amplification out;
    out.folds = folds;
    out.multiplicity_bound = std::uint64_t{1} << folds;

    Mat am = sys.matrix().power(m);
    Vec a = witness.value_a;
    out.point = Vec::Zero(n);
    for (int j = 0; j < folds; ++j) out.point = am * out.point + a;
    if (sys.exact()) {
        IMat iam = checked_power(sys.exact()->matrix, m);
        IVec ia = word_value_exact(sys, witness.word_a);
        IVec p = IVec::Zero(n);
        for (int j = 0; j < folds; ++j) {
            p = checked_apply(iam, p);
            for (int i = 0; i < n; ++i) p[i] = checked_add(p[i], ia[i]);
        }
        out.exact_point = p;
    }

    // rebuild all 2^k words explicitly: block j is word_a or word_b
    if (folds <= 16) {
        const double tol = std::max(sys.tau(), 1e-9 * std::max(1.0, out.point.norm()));
        for (std::uint64_t mask = 0; mask < out.multiplicity_bound; ++mask) {
            Word w(static_cast<std::size_t>(folds) * m);
            for (int j = 0; j < folds; ++j) {
                const Word& blk = (mask >> j) & 1u ? witness.word_b : witness.word_a;
                std::copy(blk.begin(), blk.end(), w.begin() + static_cast<std::ptrdiff_t>(j) * m);
            }
            bool ok = sys.exact() ? word_value_exact(sys, w) == *out.exact_point
                                  : (word_value(sys, w) - out.point).norm() <= tol;
            if (!ok) throw Error(ErrorCode::InvalidWitness, "amplified word does not reach a_k");
            ++out.words_checked;
        }
    }

    if (word_count(sys.digit_count(), folds * m) <= budget) {
        ExpansionSet e = enumerate_DM(sys, folds * m, budget);
        for (std::size_t i = 0; i < e.size(); ++i) {
            bool hit;
            if (e.exact) {
                hit = true;
                for (int a = 0; a < n && hit; ++a) hit = e.keys[i * n + a] == (*out.exact_point)[a];
            } else {
                hit = (e.points.point(i) - out.point).lpNorm<Eigen::Infinity>() <= std::max(sys.tau(), 1e-9);
            }
            if (hit) {
                out.enumerated_weight = e.multiplicity[i];
                break;
            }
        }
        if (!out.enumerated_weight) out.enumerated_weight = 0;
    }
    return out;
}

ExpandingSystem nondiscrete_vector_gen(int t, double tau) {
    if (t < 0) throw Error(ErrorCode::Config, "template parameter must be non-negative");
    Mat a(1, 1);
    a << 2.0;
    std::vector<Vec> digits{Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)};
    if (t > 0) digits.push_back(Vec::Constant(1, 1.0 + std::ldexp(std::numbers::sqrt2 - 1.0, -t)));
    return ExpandingSystem::create(spectral_data(a), digits, ArithmeticMode::Float, tau);
}

NondiscreteCluster nondiscrete_cluster(const ExpandingSystem& sys, int k, int max_depth, std::uint64_t budget) {
    if (k < 1 || k > 20) throw Error(ErrorCode::Config, "cluster order must lie in [1, 20]");
    const double anorm = sys.matrix().op_norm(1);
    std::vector<ExpansionSet> levels{initial_set(sys)};
    std::vector<std::pair<double, std::pair<Vec, Vec>>> closest{{std::numeric_limits<double>::infinity(), {}}};
    auto level = [&](int m) -> const std::pair<double, std::pair<Vec, Vec>>& {
        while (static_cast<int>(levels.size()) <= m) {
            levels.push_back(refine(sys, levels.back(), budget));
            const ExpansionSet& e = levels.back();
            if (e.size() < 2) {
                closest.push_back({std::numeric_limits<double>::infinity(), {}});
                continue;
            }
            auto [d, pr] = closest_pair(e.points);
            closest.push_back({d, {e.points.point(pr.first), e.points.point(pr.second)}});
        }
        return closest[m];
    };
    std::vector<Vec> xs, ys;
    std::vector<int> shifts;
    int s = 0, last_m = 0;
    for (int i = 1; i <= k; ++i) {
        double target = 1.0 / (std::ldexp(1.0, i) * std::pow(anorm, s));
        int found = -1;
        for (int m = 1; m <= max_depth; ++m) {
            const auto& c = level(m);
            if (c.first > 0.0 && c.first < target) {
                found = m;
                break;
            }
        }
        if (found < 0)
            throw Error(ErrorCode::BudgetExceeded,
                        fmt::format("no pair closer than {:.3g} up to depth {}", target, max_depth));
        xs.push_back(level(found).second.first);
        ys.push_back(level(found).second.second);
        shifts.push_back(s);
        s += found;
        last_m = found;
    }
    NondiscreteCluster out;
    out.depth = shifts.back() + last_m;
    const int n = sys.dim();
    out.center = Vec::Zero(n);
    for (int i = 0; i < k; ++i) out.center += sys.matrix().power(shifts[i]) * xs[i];
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
        Vec z = Vec::Zero(n);
        for (int i = 0; i < k; ++i) z += sys.matrix().power(shifts[i]) * ((mask >> i) & 1u ? ys[i] : xs[i]);
        out.max_offset = std::max(out.max_offset, (z - out.center).norm());
        out.members.push_back(z);
    }
    return out;
}

}  // namespace selfaffine
