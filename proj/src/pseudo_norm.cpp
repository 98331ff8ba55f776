#include "selfaffine/pseudo_norm.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/legendre.hpp>
#include <fmt/format.h>

#include "selfaffine/binary_io.hpp"

namespace selfaffine {

namespace {

constexpr char kGridMagic[8] = {'S', 'A', 'P', 'N', 'G', 'R', 'I', 'D'};
constexpr std::uint32_t kGridVersion = 1;

int default_grid_points(int n) {
    switch (n) {
        case 1: return 2049;
        case 2: return 161;
        case 3: return 49;
        case 4: return 17;
        default: return 9;
    }
}

int default_quad_nodes(int n) { return n <= 2 ? 32 : 12; }

double bump(double r2, double delta) {
    double d2 = delta * delta;
    if (r2 >= d2) return 0.0;
    return std::exp(-d2 / (d2 - r2));
}

Vec gaussian_vector(StreamRng& rng, int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) {
        double u1 = 1.0 - rng.uniform();
        double u2 = rng.uniform();
        v[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    return v;
}

/// sup of l.u over the renormed unit ball.
double support_bound(const ExpandingMatrix& a, const RenormedNorm& nrm, const Vec& l) {
    double best = l.norm() / nrm.lower_equivalence();
    for (int k = 0; k < nrm.window(); ++k) {
        Vec t = a.power(-k).transpose() * l;
        best = std::min(best, nrm.normalization() * std::pow(nrm.theta(), k) * t.norm());
    }
    return best * (1.0 + 1e-12);
}

using binio::get;
using binio::put;

std::vector<std::size_t> strides_of(const std::vector<int>& dims) {
    std::vector<std::size_t> s(dims.size(), 1);
    for (int a = static_cast<int>(dims.size()) - 2; a >= 0; --a) s[a] = s[a + 1] * static_cast<std::size_t>(dims[a + 1]);
    return s;
}

}  // namespace

const char* to_string(NormVariant v) {
    switch (v) {
        case NormVariant::Mollified: return "mollified";
        case NormVariant::Step: return "step";
        case NormVariant::ExactSimilarity: return "exact-similarity";
    }
    return "mollified";
}

NormVariant parse_norm_variant(const std::string& s) {
    if (s == "mollified") return NormVariant::Mollified;
    if (s == "step") return NormVariant::Step;
    if (s == "exact-similarity" || s == "exact") return NormVariant::ExactSimilarity;
    throw Error(ErrorCode::Config, fmt::format("unknown norm variant '{}'", s));
}

double HGrid::operator()(const Vec& z) const {
    std::size_t base = 0;
    double frac[kMaxDim];
    std::size_t stride[kMaxDim];
    std::size_t s = 1;
    for (int a = n - 1; a >= 0; --a) {
        stride[a] = s;
        s *= static_cast<std::size_t>(dims[a]);
    }
    for (int a = 0; a < n; ++a) {
        double t = (z[a] - lo[a]) / spacing(a);
        if (!(t >= 0.0) || t > dims[a] - 1) return 0.0;
        int i = std::min(static_cast<int>(t), dims[a] - 2);
        frac[a] = t - i;
        base += static_cast<std::size_t>(i) * stride[a];
    }
    double sum = 0.0;
    for (unsigned corner = 0; corner < (1u << n); ++corner) {
        double wgt = 1.0;
        std::size_t idx = base;
        for (int a = 0; a < n; ++a) {
            if (corner & (1u << a)) {
                wgt *= frac[a];
                idx += stride[a];
            } else {
                wgt *= 1.0 - frac[a];
            }
        }
        if (wgt != 0.0) sum += wgt * values[idx];
    }
    return sum;
}

void write_grid_file(std::ostream& os, const GridFile& g) {
    os.write(kGridMagic, 8);
    put<std::uint32_t>(os, kGridVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(g.variant));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(g.grid.n));
    put<double>(os, g.delta);
    put<double>(os, g.theta);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(g.m));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(g.quad_nodes));
    for (int a = 0; a < g.grid.n; ++a) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(g.grid.dims[a]));
        put<double>(os, g.grid.lo[a]);
        put<double>(os, g.grid.hi[a]);
    }
    put<std::uint64_t>(os, g.grid.values.size());
    for (double v : g.grid.values) put<double>(os, v);
    if (!os) throw Error(ErrorCode::Io, "failed writing grid file");
}

GridFile read_grid_file(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kGridMagic, 8) != 0) throw Error(ErrorCode::Io, "not a grid file");
    if (get<std::uint32_t>(is) != kGridVersion) throw Error(ErrorCode::Io, "unsupported grid file version");
    GridFile g;
    g.variant = static_cast<NormVariant>(get<std::uint32_t>(is));
    g.grid.n = static_cast<int>(get<std::uint32_t>(is));
    if (g.grid.n < 1 || g.grid.n > kMaxDim) throw Error(ErrorCode::Io, "bad grid dimension");
    g.delta = get<double>(is);
    g.theta = get<double>(is);
    g.m = static_cast<int>(get<std::uint32_t>(is));
    g.quad_nodes = static_cast<int>(get<std::uint32_t>(is));
    g.grid.lo.resize(g.grid.n);
    g.grid.hi.resize(g.grid.n);
    std::size_t expect = 1;
    for (int a = 0; a < g.grid.n; ++a) {
        g.grid.dims.push_back(static_cast<int>(get<std::uint32_t>(is)));
        g.grid.lo[a] = get<double>(is);
        g.grid.hi[a] = get<double>(is);
        if (g.grid.dims.back() < 2) throw Error(ErrorCode::Io, "bad grid axis");
        expect *= static_cast<std::size_t>(g.grid.dims.back());
    }
    auto count = get<std::uint64_t>(is);
    if (count != expect) throw Error(ErrorCode::Io, "grid payload size mismatch");
    g.grid.values.resize(count);
    for (auto& v : g.grid.values) v = get<double>(is);
    return g;
}

void save_grid_file(const std::string& path, const GridFile& g) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path));
    write_grid_file(os, g);
}

GridFile load_grid_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path));
    return read_grid_file(is);
}

PseudoNorm PseudoNorm::build(const ExpandingSystem& sys, NormVariant variant, const PseudoNormParams& params,
                             const HGrid* cached_grid) {
    PseudoNorm w;
    w.variant_ = variant;
    w.a_ = sys.matrix();
    w.renorm_ = sys.norm();
    w.params_ = params;
    const int n = w.dim();
    w.scale_ = std::pow(w.q(), 1.0 / n);
    NormConstants& c = w.constants_;

    if (variant == NormVariant::ExactSimilarity) {
        Mat ata = w.a_.entries().transpose() * w.a_.entries();
        Mat target = Mat::Identity(n, n) * (w.scale_ * w.scale_);
        double dev = (ata - target).cwiseAbs().maxCoeff();
        if (dev > params.similarity_tol * std::max(1.0, w.scale_ * w.scale_))
            throw Error(ErrorCode::NotSimilarity, fmt::format("A^T A deviates from q^(2/n) I by {:.3g}", dev));
        c.p = 1;
        c.alpha = 1.0;
        c.w_min_V = 1.0;
        c.w_max_V = w.scale_;
        c.w_hi_V = w.scale_ * (1.0 + 1e-12);
        c.lipschitz_V = 1.0;
        return w;
    }
    if (variant == NormVariant::Step) {
        c.p = 1;
        c.alpha = c.w_min_V = c.w_max_V = c.w_hi_V = 1.0;
        c.lipschitz_V = std::numeric_limits<double>::infinity();
        return w;
    }

    const double delta = params.delta;
    if (!(delta > 0.0 && delta < 0.5)) throw Error(ErrorCode::Config, "mollifier radius must lie in (0, 1/2)");
    const int quad_n = params.quad_nodes > 0 ? params.quad_nodes : default_quad_nodes(n);
    w.params_.quad_nodes = quad_n;

    // mollifier nodes
    if (n <= 3) {
        auto zeros = boost::math::legendre_p_zeros<double>(quad_n);
        std::vector<double> x1, w1;
        for (double z : zeros) {
            double dp = boost::math::legendre_p_prime(quad_n, z);
            double wt = 2.0 / ((1.0 - z * z) * dp * dp);
            if (z == 0.0) {
                x1.push_back(0.0);
                w1.push_back(wt);
            } else {
                x1.push_back(z);
                w1.push_back(wt);
                x1.push_back(-z);
                w1.push_back(wt);
            }
        }
        const std::size_t k1 = x1.size();
        std::size_t total = 1;
        for (int a = 0; a < n; ++a) total *= k1;
        for (std::size_t flat = 0; flat < total; ++flat) {
            Vec t(n);
            double wt = 1.0;
            std::size_t r = flat;
            for (int a = 0; a < n; ++a) {
                std::size_t i = r % k1;
                r /= k1;
                t[a] = delta * x1[i];
                wt *= delta * w1[i];
            }
            double phi = bump(t.squaredNorm(), delta);
            if (phi > 0.0) w.quad_.emplace_back(t, wt * phi);
        }
    } else {
        StreamRng rng(params.seed, 0xB0B, 0);
        while (static_cast<int>(w.quad_.size()) < params.mc_nodes) {
            Vec t(n);
            for (int a = 0; a < n; ++a) t[a] = rng.uniform(-delta, delta);
            double phi = bump(t.squaredNorm(), delta);
            if (phi > 0.0) {
                w.quad_.emplace_back(t, phi);
                w.quad_.emplace_back(-t, phi);
            }
        }
    }
    double wsum = 0.0;
    for (const auto& nd : w.quad_) wsum += nd.second;
    for (auto& nd : w.quad_) nd.second /= wsum;

    // grid over V + B_delta
    if (cached_grid) {
        w.grid_ = *cached_grid;
    } else {
        HGrid g;
        g.n = n;
        const int pts = params.grid_points > 0 ? (params.grid_points | 1) : default_grid_points(n);
        g.dims.assign(n, pts);
        g.lo.resize(n);
        g.hi.resize(n);
        for (int a = 0; a < n; ++a) {
            Vec row = w.a_.entries().row(a).transpose();
            double half = support_bound(w.a_, w.renorm_, row) + delta * 1.0001;
            g.lo[a] = -half;
            g.hi[a] = half;
        }
        std::size_t total = 1;
        for (int d : g.dims) total *= static_cast<std::size_t>(d);
        g.values.assign(total, 0.0);
        const auto strides = strides_of(g.dims);
        const long long total_ll = static_cast<long long>(total);
#pragma omp parallel for schedule(dynamic, 64)
        for (long long flat = 0; flat < total_ll; ++flat) {
            Vec z(n);
            for (int a = 0; a < n; ++a) {
                std::size_t i = (static_cast<std::size_t>(flat) / strides[a]) % static_cast<std::size_t>(g.dims[a]);
                z[a] = g.lo[a] + g.spacing(a) * static_cast<double>(i);
            }
            g.values[static_cast<std::size_t>(flat)] = w.h_direct(z);
        }
        for (std::size_t i = 0; i < total / 2; ++i) {
            double avg = 0.5 * (g.values[i] + g.values[total - 1 - i]);
            g.values[i] = g.values[total - 1 - i] = avg;
        }
        w.grid_ = std::move(g);
    }
    const HGrid& g = *w.grid_;
    if (g.n != n) throw Error(ErrorCode::Io, "cached grid dimension mismatch");

    // evaluation window for points of V
    double diag = 0.0;
    for (int a = 0; a < n; ++a) diag += g.spacing(a) * g.spacing(a);
    const double dprime = delta + std::sqrt(diag);
    if (dprime >= 1.0) throw Error(ErrorCode::GridTooCoarse, "grid spacing too large for the annulus");
    const double theta = w.renorm_.theta();
    const double r_v = w.renorm_.forward_power_bound(1);
    c.j_hi = 0;
    while (std::pow(theta, c.j_hi + 1) < r_v + dprime) ++c.j_hi;
    c.j_lo = 0;
    while (w.renorm_.inverse_power_bound(-c.j_lo) > 1.0 - dprime) --c.j_lo;
    c.p = c.j_hi - c.j_lo + 1;
    for (int j = c.j_lo; j <= c.j_hi; ++j) w.window_powers_.push_back(w.a_.power(j));

    // Lipschitz bound of the interpolant and lower bound on V
    const auto strides = strides_of(g.dims);
    double grad2 = 0.0;
    for (int a = 0; a < n; ++a) {
        double gmax = 0.0;
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            std::size_t ia = (i / strides[a]) % static_cast<std::size_t>(g.dims[a]);
            if (ia + 1 >= static_cast<std::size_t>(g.dims[a])) continue;
            gmax = std::max(gmax, std::abs(g.values[i + strides[a]] - g.values[i]));
        }
        gmax /= g.spacing(a);
        grad2 += gmax * gmax;
    }
    const double lip_h = std::sqrt(grad2);
    const double vmax = *std::max_element(g.values.begin(), g.values.end());
    c.lipschitz_V = 0.0;
    c.w_hi_V = 0.0;
    for (int j = c.j_lo; j <= c.j_hi; ++j) {
        c.lipschitz_V += std::pow(w.scale_, -j) * lip_h * w.a_.op_norm(j);
        c.w_hi_V += std::pow(w.scale_, -j) * vmax;
    }
    c.lipschitz_V *= 1.0 + 1e-9;
    c.w_hi_V *= 1.0 + 1e-12;

    const double b1 = w.renorm_.inverse_power_bound(1);
    double alpha = std::numeric_limits<double>::infinity();
    std::size_t cells = 1;
    for (int d : g.dims) cells *= static_cast<std::size_t>(d - 1);
    const double half_diag = 0.5 * std::sqrt(diag);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        std::size_t r = cell;
        std::size_t base = 0;
        Vec center(n);
        for (int a = n - 1; a >= 0; --a) {
            std::size_t i = r % static_cast<std::size_t>(g.dims[a] - 1);
            r /= static_cast<std::size_t>(g.dims[a] - 1);
            base += i * strides[a];
            center[a] = g.lo[a] + g.spacing(a) * (static_cast<double>(i) + 0.5);
        }
        if (w.renorm_(center) + half_diag <= 1.0) continue;
        Vec inv = w.a_.power(-1) * center;
        if (w.renorm_(inv) - b1 * half_diag > 1.0) continue;
        for (unsigned corner = 0; corner < (1u << n); ++corner) {
            std::size_t idx = base;
            for (int a = 0; a < n; ++a)
                if (corner & (1u << a)) idx += strides[a];
            alpha = std::min(alpha, g.values[idx]);
        }
    }
    c.alpha = alpha;
    if (!(alpha > 0.0)) throw Error(ErrorCode::GridTooCoarse, "interpolated h vanishes somewhere on V");

    // interpolation error and sampled extremes on V
    StreamRng rng(params.seed, 0xC4EC, 0);
    double err = 0.0;
    for (int i = 0; i < params.interp_checks; ++i) {
        Vec z = w.sample_V(rng);
        for (int a = 0; a < n; ++a) z[a] += rng.uniform(-delta, delta);
        err = std::max(err, std::abs(g(z) - w.h_direct(z)));
    }
    c.interp_error = err;
    if (err > params.interp_cap)
        throw Error(ErrorCode::GridTooCoarse,
                    fmt::format("interpolation error {:.3g} exceeds cap {:.3g}", err, params.interp_cap));

    c.w_min_V = std::numeric_limits<double>::infinity();
    c.w_max_V = 0.0;
    for (int i = 0; i < 4096; ++i) {
        Vec y = w.sample_V(rng);
        double v = w.window_sum(y);
        c.w_min_V = std::min(c.w_min_V, v);
        c.w_max_V = std::max(c.w_max_V, v);
    }
    return w;
}

GridFile PseudoNorm::grid_file() const {
    if (!grid_) throw Error(ErrorCode::Config, "norm variant has no grid");
    GridFile f;
    f.variant = variant_;
    f.delta = params_.delta;
    f.theta = renorm_.theta();
    f.m = renorm_.window();
    f.quad_nodes = params_.quad_nodes;
    f.grid = *grid_;
    return f;
}

void PseudoNorm::set_calibration(double beta_hat, std::vector<std::pair<double, double>> lambda_eps) {
    constants_.beta_hat = beta_hat;
    constants_.lambda_eps = std::move(lambda_eps);
}

double PseudoNorm::k_scale(int k) const { return std::pow(scale_, k); }

int PseudoNorm::annulus_index(const Vec& x) const {
    double nx = renorm_(x);
    if (!(nx > 0.0)) throw Error(ErrorCode::Config, "annulus index of the zero vector");
    int k = static_cast<int>(std::floor(std::log(nx) / std::log(scale_)));
    k = std::clamp(k, -4000, 4000);
    auto u = [&](int j) { return renorm_(a_.power(-j) * x); };
    while (u(k) <= 1.0) --k;
    while (u(k + 1) > 1.0) ++k;
    return k;
}

bool PseudoNorm::in_V(const Vec& z) const { return renorm_(z) > 1.0 && renorm_(a_.power(-1) * z) <= 1.0; }

Vec PseudoNorm::sample_V(StreamRng& rng) const {
    Vec y;
    for (int attempt = 0; attempt < 16; ++attempt) {
        Vec z = gaussian_vector(rng, dim());
        if (z.norm() == 0.0) continue;
        y = a_.power(-annulus_index(z)) * z;
        if (in_V(y)) return y;
    }
    return y;
}

double HGrid::max_over(const Vec& blo, const Vec& bhi, std::size_t cap) const {
    std::array<int, kMaxDim> i0{}, i1{};
    std::size_t count = 1;
    for (int a = 0; a < n; ++a) {
        double t0 = (blo[a] - lo[a]) / spacing(a), t1 = (bhi[a] - lo[a]) / spacing(a);
        if (t1 < 0.0 || t0 > dims[a] - 1) return 0.0;
        i0[a] = std::max(0, static_cast<int>(std::floor(t0)));
        i1[a] = std::min(dims[a] - 1, static_cast<int>(std::ceil(t1)));
        count *= static_cast<std::size_t>(i1[a] - i0[a] + 1);
        if (count > cap) return std::numeric_limits<double>::infinity();
    }
    const auto strides = strides_of(dims);
    double best = 0.0;
    std::array<int, kMaxDim> idx = i0;
    for (;;) {
        std::size_t flat = 0;
        for (int a = 0; a < n; ++a) flat += static_cast<std::size_t>(idx[a]) * strides[a];
        best = std::max(best, values[flat]);
        int a = n - 1;
        while (a >= 0 && ++idx[a] > i1[a]) {
            idx[a] = i0[a];
            --a;
        }
        if (a < 0) break;
    }
    return best;
}

double PseudoNorm::h(const Vec& z) const { return grid_ ? (*grid_)(z) : 0.0; }

double PseudoNorm::h_direct(const Vec& z) const {
    if (variant_ != NormVariant::Mollified) return in_V(z) ? 1.0 : 0.0;
    const double delta = params_.delta;
    const double b1 = renorm_.inverse_power_bound(1);
    const Mat inv = a_.power(-1);
    double nz = renorm_(z);
    double ninv = renorm_(inv * z);
    if (nz + delta <= 1.0) return 0.0;
    if (ninv - b1 * delta > 1.0) return 0.0;
    if (nz - delta > 1.0 && ninv + b1 * delta <= 1.0) return 1.0;
    double s = 0.0;
    for (const auto& [t, wt] : quad_) {
        Vec y = z - t;
        if (renorm_(y) > 1.0 && renorm_(inv * y) <= 1.0) s += wt;
    }
    return s;
}

double PseudoNorm::window_sum(const Vec& y) const {
    double s = 0.0;
    const HGrid& g = *grid_;
    for (std::size_t i = 0; i < window_powers_.size(); ++i) {
        int j = constants_.j_lo + static_cast<int>(i);
        double hv = g(window_powers_[i] * y);
        if (hv != 0.0) s += std::pow(scale_, -j) * hv;
    }
    return s;
}

double PseudoNorm::operator()(const Vec& x) const {
    int first = -1;
    for (int i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) {
            first = i;
            break;
        }
    }
    if (first < 0) return 0.0;
    Vec v = x[first] < 0.0 ? Vec(-x) : x;
    if (variant_ == NormVariant::ExactSimilarity) return v.norm();
    int k = annulus_index(v);
    if (variant_ == NormVariant::Step) return k_scale(k);
    Vec y = a_.power(-k) * v;
    return k_scale(k) * window_sum(y);
}

int PseudoNorm::k_lower(double rho) const {
    double a = renorm_.lower_equivalence() * rho;
    if (a > 1.0) {
        int k = 0;
        while (k < 100000 && a / renorm_.forward_power_bound(k + 1) > 1.0) ++k;
        return k;
    }
    const double theta = renorm_.theta();
    int j = std::max(1, static_cast<int>(std::floor(-std::log(a) / std::log(theta))));
    while (j > 1 && a * std::pow(theta, j - 1) > 1.0) --j;
    while (a * std::pow(theta, j) <= 1.0) ++j;
    return -j;
}

int PseudoNorm::k_upper(double rho) const {
    auto upper = [&](int k) {
        return k >= 0 ? rho * renorm_.inverse_power_bound(k) : rho * renorm_.forward_power_bound(-k);
    };
    int k = 0;
    if (upper(0) > 1.0) {
        while (upper(k) > 1.0) ++k;
    } else {
        while (k > -100000 && upper(k - 1) <= 1.0) --k;
    }
    return k - 1;
}

double PseudoNorm::lower_bound_at_euclid(double rho) const {
    if (!(rho > 0.0)) return 0.0;
    if (variant_ == NormVariant::ExactSimilarity) return rho;
    return k_scale(k_lower(rho)) * constants_.alpha;
}

double PseudoNorm::upper_bound_at_euclid(double rho) const {
    if (!(rho > 0.0)) return 0.0;
    if (variant_ == NormVariant::ExactSimilarity) return rho;
    return k_scale(k_upper(rho)) * constants_.w_hi_V;
}

double PseudoNorm::grid_bound(const Vec& clo, const Vec& chi, int klo, int khi) const {
    double bound = 0.0;
    for (int k = klo; k <= khi; ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < window_powers_.size(); ++i) {
            int j = constants_.j_lo + static_cast<int>(i);
            Mat m = window_powers_[i] * a_.power(-k);
            // bounding box of the image parallelotope
            Vec c = m * (0.5 * (clo + chi));
            Vec r = m.cwiseAbs() * (0.5 * (chi - clo));
            double hv = grid_->max_over(c - r, c + r, 4096);
            if (!std::isfinite(hv)) return hv;
            sum += std::pow(scale_, -j) * hv;
        }
        bound = std::max(bound, k_scale(k) * sum);
    }
    return bound;
}

double PseudoNorm::cell_bound(const Vec& clo, const Vec& chi, double corner_max) const {
    const int n = dim();
    Vec nearest = Vec::Zero(n).cwiseMax(clo).cwiseMin(chi);
    double dmin = nearest.norm();
    double dmax = clo.cwiseAbs().cwiseMax(chi.cwiseAbs()).norm();
    double bound = upper_bound_at_euclid(dmax);
    if (dmin > 0.0 && std::isfinite(constants_.lipschitz_V)) {
        // ||A^-j x||' is convex in x, so the largest annulus index sits at a corner
        int khi = std::numeric_limits<int>::min();
        for (unsigned corner = 0; corner < (1u << n); ++corner) {
            Vec z = clo;
            for (int a = 0; a < n; ++a)
                if (corner & (1u << a)) z[a] = chi[a];
            khi = std::max(khi, annulus_index(z));
        }
        Vec center = 0.5 * (clo + chi);
        Vec half = 0.5 * (chi - clo);
        int klo = k_lower(dmin);
        for (int j = khi; j > klo; --j) {
            if (renorm_(a_.apply_power(-j, center)) - a_.op_norm(-j) * half.norm() > 1.0) {
                klo = j;
                break;
            }
        }
        double growth = 0.0;
        for (int k = klo; k <= khi; ++k) {
            Mat inv = a_.power(-k);
            double reach = 0.0;
            for (unsigned sgn = 0; sgn < (1u << n); ++sgn) {
                Vec d = half;
                for (int a = 0; a < n; ++a)
                    if (sgn & (1u << a)) d[a] = -d[a];
                reach = std::max(reach, (inv * d).norm());
            }
            growth = std::max(growth, k_scale(k) * reach);
        }
        bound = std::min(bound, corner_max + constants_.lipschitz_V * growth);
        if (grid_) bound = std::min(bound, grid_bound(clo, chi, klo, khi));
    }
    return std::max(bound, corner_max);
}

Bracket PseudoNorm::refine_sup(const Vec& e) const {
    // branch and bound over [-e, e]: split the cell with the largest bound
    // until every bound is within tolerance of the best sampled value
    const int n = dim();
    struct Cell {
        Vec lo, hi;
        double corner_max, bound;
        bool operator<(const Cell& o) const { return bound < o.bound; }
    };
    unsigned active = 0;
    for (int a = 0; a < n; ++a)
        if (e[a] > 0.0) active |= 1u << a;
    double best = 0.0;
    auto make = [&](const Vec& lo, const Vec& hi) {
        double cm = 0.0;
        for (unsigned corner = 0; corner < (1u << n); ++corner) {
            if (corner & ~active) continue;
            Vec z = lo;
            for (int a = 0; a < n; ++a)
                if (corner & (1u << a)) z[a] = hi[a];
            cm = std::max(cm, (*this)(z));
        }
        best = std::max(best, cm);
        return Cell{lo, hi, cm, cell_bound(lo, hi, cm)};
    };
    const int res = n == 1 ? 64 : n == 2 ? 16 : n == 3 ? 6 : 2;
    std::vector<Cell> heap;
    std::vector<int> dims(n);
    std::size_t total = 1;
    for (int a = 0; a < n; ++a) {
        dims[a] = e[a] > 0.0 ? res : 1;
        total *= static_cast<std::size_t>(dims[a]);
    }
    for (std::size_t flat = 0; flat < total; ++flat) {
        Vec lo(n), hi(n);
        std::size_t r = flat;
        for (int a = n - 1; a >= 0; --a) {
            std::size_t i = r % static_cast<std::size_t>(dims[a]);
            r /= static_cast<std::size_t>(dims[a]);
            double step = 2.0 * e[a] / dims[a];
            lo[a] = -e[a] + step * static_cast<double>(i);
            hi[a] = i + 1 == static_cast<std::size_t>(dims[a]) ? e[a] : lo[a] + step;
        }
        heap.push_back(make(lo, hi));
    }
    std::make_heap(heap.begin(), heap.end());
    const auto budget = static_cast<std::size_t>(std::max(0, params_.diam_splits));
    std::size_t splits = 0;
    while (!heap.empty() && heap.front().bound > best * (1.0 + params_.diam_tol) && splits < budget) {
        std::pop_heap(heap.begin(), heap.end());
        Cell c = std::move(heap.back());
        heap.pop_back();
        int axis = 0;
        (c.hi - c.lo).maxCoeff(&axis);
        double mid = 0.5 * (c.lo[axis] + c.hi[axis]);
        Vec h1 = c.hi, l2 = c.lo;
        h1[axis] = mid;
        l2[axis] = mid;
        for (Cell child : {make(c.lo, h1), make(l2, c.hi)}) {
            heap.push_back(std::move(child));
            std::push_heap(heap.begin(), heap.end());
        }
        ++splits;
    }
    double hi = best;
    for (const Cell& c : heap) hi = std::max(hi, c.bound);
    return {best, hi};
}

Bracket PseudoNorm::diam_extent(const Vec& e) const {
    const int n = dim();
    if (e.size() != n) throw Error(ErrorCode::Config, "extent dimension mismatch");
    if ((e.array() < 0.0).any()) throw Error(ErrorCode::EmptySet, "box with negative extent");
    if ((e.array() == 0.0).all()) return {0.0, 0.0};
    if (variant_ == NormVariant::ExactSimilarity) {
        double v = e.norm();
        return {v, v};
    }
    if (variant_ == NormVariant::Step) {
        int best = std::numeric_limits<int>::min();
        for (unsigned s = 0; s < (1u << n); ++s) {
            Vec v = e;
            for (int a = 0; a < n; ++a)
                if (s & (1u << a)) v[a] = -v[a];
            if (v.norm() == 0.0) continue;
            best = std::max(best, annulus_index(v));
        }
        double v = k_scale(best);
        return {v, v};
    }
    return refine_sup(e);
}

Bracket PseudoNorm::diam_box(const Box& b) const {
    if (b.empty()) throw Error(ErrorCode::EmptySet, "empty box");
    return diam_extent(b.extent());
}

double PseudoNorm::diam_points(const PointSet& pts) const {
    const std::size_t count = pts.size();
    if (count == 0) throw Error(ErrorCode::EmptySet, "empty point cloud");
    const int n = pts.n;
    if (count <= 4096) {
        std::vector<double> row(count, 0.0);
        const long long cnt = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 16)
        for (long long i = 0; i < cnt; ++i) {
            Vec xi = pts.point(static_cast<std::size_t>(i));
            double best = 0.0;
            for (std::size_t j = static_cast<std::size_t>(i) + 1; j < count; ++j)
                best = std::max(best, (*this)(xi - pts.point(j)));
            row[static_cast<std::size_t>(i)] = best;
        }
        return *std::max_element(row.begin(), row.end());
    }
    // cell-pair pruning: a pair of cells is skipped when the largest w any of
    // its pairs can reach is below the current best
    Box bb = pts.bbox();
    const int per_axis = std::max(2, static_cast<int>(std::pow(static_cast<double>(count), 1.0 / n) / 4.0));
    std::vector<int> dims(n, per_axis);
    Vec cell = bb.extent() / per_axis;
    for (int a = 0; a < n; ++a)
        if (cell[a] == 0.0) cell[a] = 1.0;
    std::size_t ncells = 1;
    for (int d : dims) ncells *= static_cast<std::size_t>(d);
    std::vector<std::vector<std::size_t>> members(ncells);
    std::vector<Box> cbox(ncells, Box{Vec::Constant(n, std::numeric_limits<double>::infinity()),
                                      Vec::Constant(n, -std::numeric_limits<double>::infinity())});
    for (std::size_t i = 0; i < count; ++i) {
        Vec x = pts.point(i);
        std::size_t idx = 0;
        for (int a = 0; a < n; ++a) {
            int c = std::clamp(static_cast<int>((x[a] - bb.lo[a]) / cell[a]), 0, per_axis - 1);
            idx = idx * per_axis + static_cast<std::size_t>(c);
        }
        members[idx].push_back(i);
        cbox[idx].lo = cbox[idx].lo.cwiseMin(x);
        cbox[idx].hi = cbox[idx].hi.cwiseMax(x);
    }
    std::vector<std::size_t> live;
    for (std::size_t c = 0; c < ncells; ++c)
        if (!members[c].empty()) live.push_back(c);
    double best = 0.0;
    for (std::size_t a = 0; a < live.size(); ++a) {
        for (std::size_t b = a; b < live.size(); ++b) {
            const Box& ba = cbox[live[a]];
            const Box& bb2 = cbox[live[b]];
            Vec far = (ba.hi - bb2.lo).cwiseAbs().cwiseMax((bb2.hi - ba.lo).cwiseAbs());
            if (upper_bound_at_euclid(far.norm()) < best) continue;
            for (std::size_t i : members[live[a]])
                for (std::size_t j : members[live[b]])
                    if (i < j || a != b) best = std::max(best, (*this)(pts.point(i) - pts.point(j)));
        }
    }
    return best;
}

Bracket PseudoNorm::diam_ball(double t, int k) const {
    if (!(t > 0.0)) return {0.0, 0.0};
    const double rho = 2.0 * t;
    const double sk = k_scale(k);
    if (variant_ == NormVariant::ExactSimilarity) return {sk * rho, sk * rho};
    const int n = dim();
    std::vector<Vec> dirs;
    if (n == 1) {
        dirs.push_back(Vec::Constant(1, 1.0));
    } else if (n == 2) {
        for (int i = 0; i < 256; ++i) {
            double ang = std::numbers::pi * i / 256.0;
            Vec d(2);
            d << std::cos(ang), std::sin(ang);
            dirs.push_back(d);
        }
    } else {
        StreamRng rng(params_.seed, 0xBA11, static_cast<std::uint64_t>(n));
        for (int i = 0; i < 1024; ++i) dirs.push_back(gaussian_vector(rng, n));
    }
    double lo = 0.0;
    for (const Vec& d : dirs) {
        double nd = renorm_(d);
        if (!(nd > 0.0)) continue;
        for (double frac : {1.0, 0.8, 0.6}) {
            if (variant_ == NormVariant::Step && frac != 1.0) break;
            lo = std::max(lo, (*this)(d * (rho * frac / nd)));
        }
    }
    double hi = k_scale(k_upper(rho)) * constants_.w_hi_V;
    return {sk * lo, sk * std::max(lo, hi)};
}

}  // namespace selfaffine
