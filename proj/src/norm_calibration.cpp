#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "selfaffine/pseudo_norm.hpp"

namespace selfaffine {

namespace {

constexpr int kAnnulusSpan = 16;

Vec random_point(const PseudoNorm& w, StreamRng& rng, int k) {
    Vec y = w.sample_V(rng);
    if (rng.below(2)) y = -y;
    return w.matrix().power(k) * y;
}

double slope(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 2) return 0.0;
    double mx = 0, my = 0;
    for (auto [x, y] : xy) {
        mx += x;
        my += y;
    }
    mx /= xy.size();
    my /= xy.size();
    double sxy = 0, sxx = 0;
    for (auto [x, y] : xy) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace

double estimate_beta(const PseudoNorm& w, int samples, std::uint64_t seed) {
    double best = 1.0;  // pairs (x, 0)
    for (int i = 0; i < samples; ++i) {
        StreamRng rng(seed, 0xBE7A, static_cast<std::uint64_t>(i));
        int k1 = static_cast<int>(rng.between(-kAnnulusSpan, kAnnulusSpan));
        Vec x = random_point(w, rng, k1);
        Vec y = (i % 3 == 0) ? x : random_point(w, rng, k1 + static_cast<int>(rng.between(-2, 2)));
        double m = std::max(w(x), w(y));
        if (m > 0.0) best = std::max(best, w(x + y) / m);
    }
    return best;
}

double estimate_lambda_eps(const PseudoNorm& w, double eps, int samples, std::uint64_t seed) {
    if (!(eps > 0.0)) throw Error(ErrorCode::Config, "eps must be positive");
    const auto& c = w.constants();
    double probe = 4.0 * (1.0 + 1.0 / eps) * c.w_hi_V / c.alpha;
    int dmax = static_cast<int>(std::ceil(w.dim() * std::log(probe) / std::log(w.q()))) + 2;
    dmax = std::clamp(dmax, 2, 60);
    double lambda = 1.0;
    for (int i = 0; i < samples; ++i) {
        StreamRng rng(seed, 0x1A4B, static_cast<std::uint64_t>(i));
        int k1 = static_cast<int>(rng.between(-kAnnulusSpan, kAnnulusSpan));
        int d = static_cast<int>(rng.between(-2, dmax));
        Vec x1 = random_point(w, rng, k1);
        Vec x2 = random_point(w, rng, k1 + d);
        double w1 = w(x1), w2 = w(x2);
        if (w1 <= 0.0) continue;
        if (w(x1 + x2) >= (1.0 + eps) * w2) lambda = std::max(lambda, w2 / w1);
    }
    return lambda;
}

ComparabilityFit comparability_fit(const PseudoNorm& w, double eps, int samples, std::uint64_t seed, double c_cap) {
    const auto& a = w.matrix();
    if (!(eps > 0.0 && eps < a.lambda_min() - 1.0))
        throw Error(ErrorCode::Config, fmt::format("eps must lie in (0, {:g})", a.lambda_min() - 1.0));
    const int n = w.dim();
    ComparabilityFit fit;
    fit.exponent_lo = std::log(w.q()) / (n * std::log(a.lambda_max() + eps));
    fit.exponent_hi = std::log(w.q()) / (n * std::log(a.lambda_min() - eps));
    std::vector<std::pair<double, double>> small, large;
    double c = 0.0;
    for (int i = 0; i < samples; ++i) {
        StreamRng rng(seed, 0xC0FF, static_cast<std::uint64_t>(i));
        Vec d(n);
        for (int k = 0; k < n; ++k) d[k] = rng.uniform(-1.0, 1.0);
        if (d.norm() == 0.0) continue;
        double mag = (i % 64 == 0) ? 1.0 : std::pow(10.0, rng.uniform(-3.0, 3.0));
        Vec x = d * (mag / d.norm());
        double r = x.norm();
        double wx = w(x);
        if (!(wx > 0.0)) throw Error(ErrorCode::FitViolation, "pseudo norm vanished at a non-zero point");
        double e_low = r > 1.0 ? fit.exponent_lo : fit.exponent_hi;
        double e_up = r > 1.0 ? fit.exponent_hi : fit.exponent_lo;
        c = std::max({c, std::pow(r, e_low) / wx, wx / std::pow(r, e_up)});
        (r > 1.0 ? large : small).emplace_back(std::log(r), std::log(wx));
        ++fit.samples;
    }
    fit.c_est = c;
    fit.slope_small = slope(small);
    fit.slope_large = slope(large);
    if (c > c_cap)
        throw Error(ErrorCode::FitViolation, fmt::format("envelope constant {:.4g} exceeds cap {:.4g}", c, c_cap));
    return fit;
}

void calibrate(PseudoNorm& w, int samples, std::uint64_t seed, const std::vector<double>& eps_list) {
    double beta = estimate_beta(w, samples, seed);
    std::vector<std::pair<double, double>> table;
    for (double eps : eps_list) table.emplace_back(eps, estimate_lambda_eps(w, eps, samples, seed + 1));
    w.set_calibration(beta, std::move(table));
}

}  // namespace selfaffine
