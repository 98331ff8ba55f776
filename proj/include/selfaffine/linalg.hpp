#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "selfaffine/types.hpp"

namespace selfaffine {

using Rational = boost::multiprecision::cpp_rational;

struct SpectralOptions {
    double eps_spec = 1e-9;  // eigenvalue moduli must exceed 1 + eps_spec
    int horizon = 64;        // cached powers A^k, |k| <= horizon
};

/// An expanding matrix with cached powers and spectral data. Copies share
/// the immutable cache.
class ExpandingMatrix {
  public:
    ExpandingMatrix() = default;

    int dim() const { return n_; }
    const Mat& entries() const { return a_; }
    double q() const { return q_; }
    double lambda_min() const { return lambda_min_; }
    double lambda_max() const { return lambda_max_; }
    const std::vector<double>& eigen_moduli() const { return moduli_; }
    int horizon() const { return horizon_; }

    /// A^k for any integer k.
    Mat power(int k) const;
    /// Euclidean operator norm of A^k.
    double op_norm(int k) const;
    /// Smallest singular value of A^k.
    double min_singular(int k) const;
    Vec apply_power(int k, const Vec& x) const;

    /// Row-major exact entries, present when the matrix was given exactly.
    const std::optional<std::vector<Rational>>& exact_entries() const { return exact_; }
    bool is_integer() const;
    /// Integer entries; only valid when is_integer().
    IMat integer_entries() const;

  private:
    friend ExpandingMatrix spectral_data(const Mat& m, const SpectralOptions& opts);

    struct Cache {
        std::vector<Mat> pos;  // A^0 .. A^H
        std::vector<Mat> neg;  // A^0 .. A^-H
        std::vector<double> norm_pos, norm_neg, smin_pos;
    };

    Mat a_;
    int n_ = 0;
    double q_ = 0, lambda_min_ = 0, lambda_max_ = 0;
    std::vector<double> moduli_;
    int horizon_ = 0;
    std::shared_ptr<const Cache> cache_;
    std::optional<std::vector<Rational>> exact_;

    friend ExpandingMatrix spectral_data_exact(int n, const std::vector<Rational>& entries,
                                               const SpectralOptions& opts);
};

/// Validates that m is square, non-singular and expanding; caches powers.
/// Throws Error{Singular} or Error{NotExpanding}.
ExpandingMatrix spectral_data(const Mat& m, const SpectralOptions& opts = {});
ExpandingMatrix spectral_data_exact(int n, const std::vector<Rational>& entries, const SpectralOptions& opts = {});

Vec matrix_power_apply(const ExpandingMatrix& a, int k, const Vec& x);

/// Exact A^k x for matrices given exactly; negative k solves A y = x exactly.
std::vector<Rational> matrix_power_apply_exact(const ExpandingMatrix& a, int k, const std::vector<Rational>& x);

/// The norm ||x||' = c^-1 * sum_{k<m} theta^-k ||A^k x|| in which A expands
/// by at least theta. The constant c is chosen so that ||x||' <= ||x||_2.
class RenormedNorm {
  public:
    RenormedNorm() = default;

    /// theta <= 0 selects the default (1 + lambda_min) / 2.
    /// Throws Error{HorizonExceeded} when no window m <= 64 works.
    static RenormedNorm build(const ExpandingMatrix& a, double theta = 0.0, std::uint64_t verify_seed = 1);

    double theta() const { return theta_; }
    int window() const { return m_; }
    /// c above: sum_k theta^-k ||A^k||_2.
    double normalization() const { return c_; }
    /// Certified constant with ||x||' >= lower_equivalence() * ||x||_2.
    double lower_equivalence() const { return c_lo_; }

    double operator()(const Vec& x) const;

    /// Certified upper bound of the ||.||' operator norm of A^-i, i >= 0.
    double inverse_power_bound(int i) const;
    /// Certified upper bound of the ||.||' operator norm of A^k, k >= 0.
    double forward_power_bound(int k) const;
    /// sum_{i>=1} inverse_power_bound(i), tail included.
    double inverse_tail_sum() const { return tail_sum_; }

  private:
    std::vector<Mat> terms_;  // theta^-k A^k / c
    std::vector<double> inv_bounds_;
    std::vector<double> fwd_bounds_;
    double theta_ = 0, c_ = 1, c_lo_ = 1, tail_sum_ = 0;
    int m_ = 0;
};

enum class ArithmeticMode { ExactInteger, ExactRational, Float };

const char* to_string(ArithmeticMode mode);
ArithmeticMode parse_arithmetic_mode(const std::string& s);

/// Integer data for the exact modes: digits are scaled by a common
/// denominator so that every expansion value is an integer vector.
struct ExactDigits {
    IMat matrix;
    std::vector<IVec> digits;  // numerators, digit / denominator is the true digit
    std::int64_t denominator = 1;
};

/// The pair (A, D) with its derived constants.
class ExpandingSystem {
  public:
    ExpandingSystem() = default;

    static ExpandingSystem create(const ExpandingMatrix& a, std::vector<Vec> digits, ArithmeticMode mode,
                                  double tau = 1e-9, double theta = 0.0);
    static ExpandingSystem create_exact(int n, const std::vector<Rational>& matrix,
                                        const std::vector<std::vector<Rational>>& digits, ArithmeticMode mode,
                                        double tau = 1e-9, double theta = 0.0,
                                        const SpectralOptions& opts = {});

    const ExpandingMatrix& matrix() const { return a_; }
    const RenormedNorm& norm() const { return norm_; }
    const std::vector<Vec>& digits() const { return digits_; }
    int dim() const { return a_.dim(); }
    std::size_t digit_count() const { return digits_.size(); }
    double q() const { return a_.q(); }
    /// Pseudo similarity dimension n ln N / ln q.
    double similarity_dimension() const;
    /// q^{-1/n}.
    double contraction_ratio() const;
    ArithmeticMode mode() const { return mode_; }
    double tau() const { return tau_; }
    const std::optional<ExactDigits>& exact() const { return exact_; }

    /// max_d ||d||'.
    double digit_radius() const;
    /// Certified bound on sup_{x in K} ||x||'.
    double attractor_radius() const { return norm_.inverse_tail_sum() * digit_radius(); }
    /// #D > q, where the measure identity is outside its classical range.
    bool digit_count_exceeds_q() const { return static_cast<double>(digits_.size()) > q() * (1 + 1e-12); }

  private:
    void validate();

    ExpandingMatrix a_;
    RenormedNorm norm_;
    std::vector<Vec> digits_;
    ArithmeticMode mode_ = ArithmeticMode::Float;
    double tau_ = 1e-9;
    std::optional<ExactDigits> exact_;
};

}  // namespace selfaffine
