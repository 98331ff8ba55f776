#include "selfaffine/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <fmt/format.h>

#include "selfaffine/rng.hpp"

namespace selfaffine {

namespace {

double singular_max(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

double singular_min(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

Mat power_by_squaring(Mat base, unsigned e) {
    Mat result = Mat::Identity(base.rows(), base.cols());
    while (e) {
        if (e & 1u) result = result * base;
        base = base * base;
        e >>= 1u;
    }
    return result;
}

bool is_integral(const Rational& r) { return boost::multiprecision::denominator(r) == 1; }

std::int64_t to_int64(const Rational& r, const char* what) {
    boost::multiprecision::cpp_int v = boost::multiprecision::numerator(r);
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
        throw Error(ErrorCode::Config, fmt::format("{} does not fit in 64-bit integers", what));
    return static_cast<std::int64_t>(v);
}

}  // namespace

ExpandingMatrix spectral_data(const Mat& m, const SpectralOptions& opts) {
    if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorCode::Config, "matrix must be square and non-empty");
    if (m.rows() > kMaxDim) throw Error(ErrorCode::UnsupportedDimension, fmt::format("dimension {} exceeds {}", m.rows(), kMaxDim));
    if (!m.allFinite()) throw Error(ErrorCode::Config, "matrix has non-finite entries");

    ExpandingMatrix out;
    out.a_ = m;
    out.n_ = static_cast<int>(m.rows());
    Eigen::MatrixXd dyn = m;
    double det = dyn.fullPivLu().determinant();
    if (det == 0.0 || !std::isfinite(det)) throw Error(ErrorCode::Singular, "matrix is singular");
    out.q_ = std::abs(det);

    Eigen::EigenSolver<Eigen::MatrixXd> es(dyn, false);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::Config, "eigenvalue solver did not converge");
    for (int i = 0; i < out.n_; ++i) out.moduli_.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(out.moduli_.begin(), out.moduli_.end());
    out.lambda_min_ = out.moduli_.front();
    out.lambda_max_ = out.moduli_.back();
    if (out.lambda_min_ <= 1.0 + opts.eps_spec)
        throw Error(ErrorCode::NotExpanding,
                    fmt::format("eigenvalue modulus {:.12g} is not greater than 1 + {:g}", out.lambda_min_, opts.eps_spec));

    out.horizon_ = opts.horizon;
    auto cache = std::make_shared<ExpandingMatrix::Cache>();
    Mat inv = dyn.inverse();
    Mat id = Mat::Identity(out.n_, out.n_);
    cache->pos.push_back(id);
    cache->neg.push_back(id);
    for (int k = 1; k <= opts.horizon; ++k) {
        cache->pos.push_back(cache->pos.back() * m);
        cache->neg.push_back(cache->neg.back() * inv);
    }
    for (int k = 0; k <= opts.horizon; ++k) {
        Eigen::JacobiSVD<Mat> sp(cache->pos[k]);
        cache->norm_pos.push_back(sp.singularValues()(0));
        cache->smin_pos.push_back(sp.singularValues()(out.n_ - 1));
        cache->norm_neg.push_back(singular_max(cache->neg[k]));
    }
    out.cache_ = std::move(cache);
    return out;
}

ExpandingMatrix spectral_data_exact(int n, const std::vector<Rational>& entries, const SpectralOptions& opts) {
    if (n <= 0 || entries.size() != static_cast<std::size_t>(n) * n)
        throw Error(ErrorCode::Config, "matrix entry count does not match dimension");
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = entries[i * n + j].convert_to<double>();
    ExpandingMatrix out = spectral_data(m, opts);
    out.exact_ = entries;
    return out;
}

Mat ExpandingMatrix::power(int k) const {
    if (std::abs(k) <= horizon_) return k >= 0 ? cache_->pos[k] : cache_->neg[-k];
    unsigned e = static_cast<unsigned>(std::abs(k));
    return power_by_squaring(k >= 0 ? cache_->pos[1] : cache_->neg[1], e);
}

double ExpandingMatrix::op_norm(int k) const {
    if (std::abs(k) <= horizon_) return k >= 0 ? cache_->norm_pos[k] : cache_->norm_neg[-k];
    return singular_max(power(k));
}

double ExpandingMatrix::min_singular(int k) const {
    if (k >= 0 && k <= horizon_) return cache_->smin_pos[k];
    return singular_min(power(k));
}

Vec ExpandingMatrix::apply_power(int k, const Vec& x) const { return power(k) * x; }

bool ExpandingMatrix::is_integer() const {
    if (exact_) return std::all_of(exact_->begin(), exact_->end(), is_integral);
    return (a_.array() == a_.array().round()).all() && (a_.array().abs() < 9.0e15).all();
}

IMat ExpandingMatrix::integer_entries() const {
    if (!is_integer()) throw Error(ErrorCode::Config, "matrix is not integral");
    IMat out(n_, n_);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
            out(i, j) = exact_ ? to_int64((*exact_)[i * n_ + j], "matrix entry") : static_cast<std::int64_t>(a_(i, j));
    return out;
}

Vec matrix_power_apply(const ExpandingMatrix& a, int k, const Vec& x) {
    if (x.size() != a.dim()) throw Error(ErrorCode::Config, "vector dimension mismatch");
    if (k == 0) return x;
    return a.apply_power(k, x);
}

std::vector<Rational> matrix_power_apply_exact(const ExpandingMatrix& a, int k, const std::vector<Rational>& x) {
    const int n = a.dim();
    if (static_cast<int>(x.size()) != n) throw Error(ErrorCode::Config, "vector dimension mismatch");
    std::vector<Rational> entries;
    if (a.exact_entries()) {
        entries = *a.exact_entries();
    } else {
        entries.reserve(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) entries.emplace_back(a.entries()(i, j));
    }
    std::vector<Rational> v = x;
    if (k >= 0) {
        for (int step = 0; step < k; ++step) {
            std::vector<Rational> next(n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) next[i] += entries[i * n + j] * v[j];
            v = std::move(next);
        }
        return v;
    }
    for (int step = 0; step < -k; ++step) {
        // Gauss-Jordan on [A | v]
        std::vector<Rational> m = entries;
        std::vector<Rational> rhs = v;
        for (int col = 0; col < n; ++col) {
            int piv = col;
            while (piv < n && m[piv * n + col] == 0) ++piv;
            if (piv == n) throw Error(ErrorCode::Singular, "matrix is singular");
            if (piv != col) {
                for (int j = 0; j < n; ++j) std::swap(m[piv * n + j], m[col * n + j]);
                std::swap(rhs[piv], rhs[col]);
            }
            Rational p = m[col * n + col];
            for (int r = 0; r < n; ++r) {
                if (r == col || m[r * n + col] == 0) continue;
                Rational f = m[r * n + col] / p;
                for (int j = col; j < n; ++j) m[r * n + j] -= f * m[col * n + j];
                rhs[r] -= f * rhs[col];
            }
        }
        for (int i = 0; i < n; ++i) rhs[i] /= m[i * n + i];
        v = std::move(rhs);
    }
    return v;
}

RenormedNorm RenormedNorm::build(const ExpandingMatrix& a, double theta, std::uint64_t verify_seed) {
    if (theta <= 0.0) theta = 0.5 * (1.0 + a.lambda_min());
    if (!(theta > 1.0 && theta < a.lambda_min()))
        throw Error(ErrorCode::Config, fmt::format("theta {:g} must lie in (1, {:g})", theta, a.lambda_min()));

    RenormedNorm out;
    out.theta_ = theta;
    const int cap = 64;
    int m = 0;
    for (int k = 1; k <= cap; ++k) {
        if (a.min_singular(k) >= std::pow(theta, k)) {
            m = k;
            break;
        }
    }
    if (m == 0) throw Error(ErrorCode::HorizonExceeded, fmt::format("no renorming window m <= {} for theta {:g}", cap, theta));
    out.m_ = m;

    double c = 0.0, c_lo = 0.0;
    for (int k = 0; k < m; ++k) {
        c += std::pow(theta, -k) * a.op_norm(k);
        c_lo += std::pow(theta, -k) * a.min_singular(k);
    }
    out.c_ = c;
    out.c_lo_ = c_lo / c * (1.0 - 1e-12);
    for (int k = 0; k < m; ++k) out.terms_.push_back(a.power(k) * (std::pow(theta, -k) / c));

    // ||A^-i||' <= ||A^-i||_2 because A^-i commutes with every A^k in the sum.
    const int h = a.horizon();
    out.inv_bounds_.assign(h + 1, 1.0);
    out.fwd_bounds_.assign(h + 1, 1.0);
    for (int i = 1; i <= h; ++i) {
        double b = std::min(a.op_norm(-i) * (1.0 + 1e-12), std::pow(theta, -i));
        for (int j = 1; j < i; ++j) b = std::min(b, out.inv_bounds_[j] * out.inv_bounds_[i - j]);
        out.inv_bounds_[i] = b;
        out.fwd_bounds_[i] = a.op_norm(i) * (1.0 + 1e-12);
    }
    double tail = 0.0;
    for (int i = 1; i <= h; ++i) tail += out.inv_bounds_[i];
    tail += out.inv_bounds_[h] / (theta - 1.0);
    out.tail_sum_ = tail * (1.0 + 1e-10);

    StreamRng rng(verify_seed, 0x5EED, 0);
    for (int t = 0; t < 256; ++t) {
        Vec x(a.dim());
        for (int i = 0; i < a.dim(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        if (out(a.entries() * x) < theta * out(x) * (1.0 - 1e-12))
            throw Error(ErrorCode::HorizonExceeded, "renormed norm failed the expansivity check");
    }
    return out;
}

double RenormedNorm::operator()(const Vec& x) const {
    double s = 0.0;
    for (const Mat& t : terms_) s += (t * x).norm();
    return s;
}

double RenormedNorm::inverse_power_bound(int i) const {
    if (i < 0) return forward_power_bound(-i);
    const int h = static_cast<int>(inv_bounds_.size()) - 1;
    if (i <= h) return inv_bounds_[i];
    return inv_bounds_[h] * inverse_power_bound(i - h);
}

double RenormedNorm::forward_power_bound(int k) const {
    if (k < 0) return inverse_power_bound(-k);
    const int h = static_cast<int>(fwd_bounds_.size()) - 1;
    if (k <= h) return fwd_bounds_[k];
    return fwd_bounds_[h] * forward_power_bound(k - h);
}

const char* to_string(ArithmeticMode mode) {
    switch (mode) {
        case ArithmeticMode::ExactInteger: return "exact-integer";
        case ArithmeticMode::ExactRational: return "exact-rational";
        case ArithmeticMode::Float: return "float";
    }
    return "float";
}

ArithmeticMode parse_arithmetic_mode(const std::string& s) {
    if (s == "exact-integer") return ArithmeticMode::ExactInteger;
    if (s == "exact-rational") return ArithmeticMode::ExactRational;
    if (s == "float") return ArithmeticMode::Float;
    throw Error(ErrorCode::Config, fmt::format("unknown arithmetic mode '{}'", s));
}

ExpandingSystem ExpandingSystem::create(const ExpandingMatrix& a, std::vector<Vec> digits, ArithmeticMode mode,
                                        double tau, double theta) {
    if (mode != ArithmeticMode::Float) {
        const int n = a.dim();
        std::vector<Rational> entries;
        if (a.exact_entries()) {
            entries = *a.exact_entries();
        } else {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) entries.emplace_back(a.entries()(i, j));
        }
        std::vector<std::vector<Rational>> rd;
        for (const Vec& d : digits) {
            if (d.size() != n) throw Error(ErrorCode::Config, "digit dimension mismatch");
            std::vector<Rational> r;
            for (int i = 0; i < n; ++i) r.emplace_back(d[i]);
            rd.push_back(std::move(r));
        }
        SpectralOptions opts;
        opts.horizon = a.horizon();
        return create_exact(n, entries, rd, mode, tau, theta, opts);
    }
    ExpandingSystem sys;
    sys.a_ = a;
    sys.digits_ = std::move(digits);
    sys.mode_ = mode;
    sys.tau_ = tau;
    sys.validate();
    sys.norm_ = RenormedNorm::build(sys.a_, theta);
    return sys;
}

ExpandingSystem ExpandingSystem::create_exact(int n, const std::vector<Rational>& matrix,
                                              const std::vector<std::vector<Rational>>& digits, ArithmeticMode mode,
                                              double tau, double theta, const SpectralOptions& opts) {
    ExpandingSystem sys;
    sys.a_ = spectral_data_exact(n, matrix, opts);
    sys.mode_ = mode;
    sys.tau_ = tau;
    for (const auto& d : digits) {
        if (static_cast<int>(d.size()) != n) throw Error(ErrorCode::Config, "digit dimension mismatch");
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = d[i].convert_to<double>();
        sys.digits_.push_back(v);
    }

    if (mode != ArithmeticMode::Float) {
        if (!std::all_of(matrix.begin(), matrix.end(), is_integral))
            throw Error(ErrorCode::Config, fmt::format("{} mode requires an integer matrix", to_string(mode)));
        boost::multiprecision::cpp_int lcm = 1;
        for (const auto& d : digits) {
            for (const Rational& x : d) {
                if (mode == ArithmeticMode::ExactInteger && !is_integral(x))
                    throw Error(ErrorCode::Config, "exact-integer mode requires integer digits");
                lcm = boost::multiprecision::lcm(lcm, boost::multiprecision::denominator(x));
            }
        }
        ExactDigits ex;
        ex.matrix = sys.a_.integer_entries();
        ex.denominator = to_int64(Rational(lcm), "digit denominator");
        for (const auto& d : digits) {
            IVec v(n);
            for (int i = 0; i < n; ++i) v[i] = to_int64(d[i] * Rational(lcm), "scaled digit");
            ex.digits.push_back(v);
        }
        for (std::size_t i = 0; i < ex.digits.size(); ++i)
            for (std::size_t j = i + 1; j < ex.digits.size(); ++j)
                if (ex.digits[i] == ex.digits[j]) throw Error(ErrorCode::Config, "digits must be pairwise distinct");
        if (std::none_of(ex.digits.begin(), ex.digits.end(), [](const IVec& v) { return (v.array() == 0).all(); }))
            throw Error(ErrorCode::Config, "digit set must contain 0");
        sys.exact_ = std::move(ex);
    }
    sys.validate();
    sys.norm_ = RenormedNorm::build(sys.a_, theta);
    return sys;
}

void ExpandingSystem::validate() {
    const int n = a_.dim();
    if (!(tau_ >= 0.0)) throw Error(ErrorCode::Config, "tau must be non-negative");
    if (digits_.size() < 2) throw Error(ErrorCode::Config, "digit set needs at least two digits");
    for (const Vec& d : digits_)
        if (d.size() != n || !d.allFinite()) throw Error(ErrorCode::Config, "digit dimension mismatch");
    if (mode_ == ArithmeticMode::Float) {
        bool zero = std::any_of(digits_.begin(), digits_.end(),
                                [&](const Vec& d) { return d.lpNorm<Eigen::Infinity>() <= tau_; });
        if (!zero) throw Error(ErrorCode::Config, "digit set must contain 0");
        for (std::size_t i = 0; i < digits_.size(); ++i)
            for (std::size_t j = i + 1; j < digits_.size(); ++j)
                if ((digits_[i] - digits_[j]).lpNorm<Eigen::Infinity>() <= tau_)
                    throw Error(ErrorCode::Config, "digits must be pairwise distinct");
    }
}

double ExpandingSystem::similarity_dimension() const {
    return dim() * std::log(static_cast<double>(digits_.size())) / std::log(q());
}

double ExpandingSystem::contraction_ratio() const { return std::pow(q(), -1.0 / dim()); }

double ExpandingSystem::digit_radius() const {
    double r = 0.0;
    for (const Vec& d : digits_) r = std::max(r, norm_(d));
    return r;
}

}  // namespace selfaffine
