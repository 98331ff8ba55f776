#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selfaffine/linalg.hpp"
#include "selfaffine/rng.hpp"

namespace selfaffine {

enum class NormVariant { Mollified, Step, ExactSimilarity };

const char* to_string(NormVariant v);
NormVariant parse_norm_variant(const std::string& s);

struct PseudoNormParams {
    double delta = 0.25;
    int grid_points = 0;  // per axis, 0 = by dimension (2049, 161, 49, ...)
    int quad_nodes = 0;   // Gauss-Legendre nodes per axis, 0 = by dimension
    int mc_nodes = 20000; // Monte Carlo nodes above dimension 3
    double interp_cap = 0.05;
    int interp_checks = 256;
    double diam_tol = 0.02;  // relative gap targeted by diam brackets
    int diam_splits = 20000; // refinement budget per bracket
    double similarity_tol = 1e-9;
    std::uint64_t seed = 1;
};

/// Samples of h on a regular grid; multilinear interpolation, zero outside.
struct HGrid {
    int n = 0;
    std::vector<int> dims;
    Vec lo, hi;
    std::vector<double> values;  // row-major, last axis fastest

    double spacing(int axis) const { return (hi[axis] - lo[axis]) / (dims[axis] - 1); }
    std::size_t size() const { return values.size(); }
    double operator()(const Vec& z) const;
    /// Max of the samples whose cells meet [blo, bhi], a bound of the
    /// interpolant there; infinity when more than cap nodes would be read.
    double max_over(const Vec& blo, const Vec& bhi, std::size_t cap) const;
};

struct GridFile {
    NormVariant variant = NormVariant::Mollified;
    double delta = 0.0;
    double theta = 0.0;
    int m = 0;
    int quad_nodes = 0;
    HGrid grid;
};

void write_grid_file(std::ostream& os, const GridFile& g);
GridFile read_grid_file(std::istream& is);
void save_grid_file(const std::string& path, const GridFile& g);
GridFile load_grid_file(const std::string& path);

struct NormConstants {
    int p = 1;              // certified bound on the number of non-zero terms
    int j_lo = 0, j_hi = 0; // evaluation window for points of V
    double alpha = 1.0;     // lower bound of w on V
    double w_min_V = 1.0;   // sampled extremes of w on V
    double w_max_V = 1.0;
    double w_hi_V = 1.0;    // upper bound of w on V
    double lipschitz_V = 0.0; // Euclidean Lipschitz bound of the window sum (mollified)
    double interp_error = 0.0;  // sampled max of the interpolation error, capped by interp_cap
    double beta_hat = 0.0;  // 0 until calibrated
    std::vector<std::pair<double, double>> lambda_eps;  // (eps, lambda) pairs
};

/// The homogeneous gauge w with w(Ax) = q^{1/n} w(x).
class PseudoNorm {
  public:
    PseudoNorm() = default;

    /// Throws NotSimilarity, GridTooCoarse. A grid loaded from a cache file
    /// may be passed to skip quadrature.
    static PseudoNorm build(const ExpandingSystem& sys, NormVariant variant, const PseudoNormParams& params = {},
                            const HGrid* cached_grid = nullptr);

    NormVariant variant() const { return variant_; }
    bool smooth() const { return variant_ != NormVariant::Step; }
    int dim() const { return a_.dim(); }
    double q() const { return a_.q(); }
    /// q^{1/n}.
    double scale() const { return scale_; }
    const ExpandingMatrix& matrix() const { return a_; }
    const RenormedNorm& renorm() const { return renorm_; }
    const PseudoNormParams& params() const { return params_; }
    const NormConstants& constants() const { return constants_; }
    const std::optional<HGrid>& grid() const { return grid_; }
    GridFile grid_file() const;

    double operator()(const Vec& x) const;
    double eval(const Vec& x) const { return (*this)(x); }

    /// The k with x in A^k V, x != 0.
    int annulus_index(const Vec& x) const;
    bool in_V(const Vec& z) const;
    /// A point of V obtained by reducing a Gaussian vector.
    Vec sample_V(StreamRng& rng) const;
    /// Interpolated h; zero for the step and exact variants.
    double h(const Vec& z) const;
    /// Quadrature value of h at z (mollified only).
    double h_direct(const Vec& z) const;

    /// sup of w over the symmetric box [-e, e], i.e. diam_w of any box with extent e.
    Bracket diam_extent(const Vec& e) const;
    Bracket diam_box(const Box& b) const;
    /// Exact max of w(x - y) over pairs of the cloud.
    double diam_points(const PointSet& pts) const;
    /// diam_w of x + A^k(t B_1) for the renormed unit ball B_1.
    Bracket diam_ball(double t, int k) const;

    /// inf of w over ||z||_2 >= rho.
    double lower_bound_at_euclid(double rho) const;
    /// sup of w over ||z||_2 <= rho.
    double upper_bound_at_euclid(double rho) const;

    void set_calibration(double beta_hat, std::vector<std::pair<double, double>> lambda_eps);

  private:
    double window_sum(const Vec& y) const;
    int k_lower(double rho) const;
    int k_upper(double rho) const;
    double k_scale(int k) const;
    double cell_bound(const Vec& clo, const Vec& chi, double corner_max) const;
    double grid_bound(const Vec& clo, const Vec& chi, int klo, int khi) const;
    Bracket refine_sup(const Vec& e) const;

    NormVariant variant_ = NormVariant::ExactSimilarity;
    ExpandingMatrix a_;
    RenormedNorm renorm_;
    PseudoNormParams params_;
    NormConstants constants_;
    std::optional<HGrid> grid_;
    std::vector<std::pair<Vec, double>> quad_;  // mollifier nodes and normalized weights
    std::vector<Mat> window_powers_;            // A^j for j in [j_lo, j_hi]
    double scale_ = 1.0;
};

/// Largest sampled w(x+y)/max(w(x), w(y)); a lower estimate of beta.
double estimate_beta(const PseudoNorm& w, int samples, std::uint64_t seed);

/// Smallest sampled lambda such that every sampled pair with
/// w(x2) > lambda w(x1) has w(x1 + x2) < (1 + eps) w(x2).
double estimate_lambda_eps(const PseudoNorm& w, double eps, int samples, std::uint64_t seed);

struct ComparabilityFit {
    double c_est = 0.0;
    double exponent_lo = 0.0;  // ln q / (n ln(lambda_max + eps))
    double exponent_hi = 0.0;  // ln q / (n ln(lambda_min - eps))
    double slope_small = 0.0;  // fitted log-log slope for ||x|| <= 1
    double slope_large = 0.0;  // fitted log-log slope for ||x|| > 1
    int samples = 0;
};

/// Throws FitViolation when no C <= c_cap puts every sample between the envelopes.
ComparabilityFit comparability_fit(const PseudoNorm& w, double eps, int samples, std::uint64_t seed,
                                   double c_cap = 1e6);

/// Fills beta_hat and the lambda_eps table on w.
void calibrate(PseudoNorm& w, int samples, std::uint64_t seed, const std::vector<double>& eps_list = {0.5, 0.25, 0.1});

}  // namespace selfaffine
