#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfaffine/attractor.hpp"
#include "selfaffine/digits.hpp"
#include "selfaffine/pseudo_norm.hpp"

namespace selfaffine {

enum class WindowFamily { Boxes, Balls, Both };

const char* to_string(WindowFamily f);
WindowFamily parse_window_family(const std::string& s);

/// Window sweep schedule. Level k stands for windows the size of A^k K;
/// each level is split into `substeps` geometric sub-scales.
struct SweepOptions {
    WindowFamily family = WindowFamily::Both;
    int substeps = 4;
    int levels = 8;                    // levels below the depth that are swept
    int periods = 2;                   // top levels entering the best estimate
    std::size_t max_anchors = 0;       // 0 = 4096 in dimension 1, 256 above
    std::size_t max_ball_anchors = 128;
    std::size_t max_windows = 20000;   // cylinder windows per level
    std::size_t ball_visit_cap = 4096; // balls catching more points are skipped
    double diam_grid = 1.0 / 32.0;     // log2 step of cached mollified diameters
};

struct DensityRow {
    double scale = 0.0;  // nominal diam_w of the windows
    std::string family;  // cylinder, box, cube, ball
    int level = 0;
    int substep = 0;
    std::size_t windows = 0;
    double sup_ratio = 0.0;      // mass(W) / diam_hi(W)^s
    double sup_beyond = 0.0;     // max of sup_ratio over rows at scale >= this one
    double sup_certified = 0.0;  // mass / diam_hi(hull + unit piece)^s
};

struct DensityEstimate {
    double s = 0.0;
    int depth = 0;
    WindowFamily family = WindowFamily::Both;
    std::vector<DensityRow> rows;
    double best = 0.0;       // max sup_ratio over the top `periods` levels
    double certified = 0.0;  // max sup_certified over all rows
    double lo_side = 0.0;    // max neighbour-inclusive ratio on the small-window range
    std::size_t windows = 0;
};

/// Window sweep over the weighted points of D_M (weights = multiplicities).
DensityEstimate upper_density_estimate(const ExpandingSystem& sys, const PseudoNorm& w, double s, int depth,
                                       const SweepOptions& opts = {}, std::uint64_t budget = kDefaultPointBudget);
/// The same from a precomputed D_M.
DensityEstimate upper_density_estimate(const ExpandingSystem& sys, const PseudoNorm& w, double s,
                                       const ExpansionSet& dm, const SweepOptions& opts = {});

/// The same sweep over an arbitrary weighted cloud; `piece` is the box added
/// around each point for the certified column (a zero box disables it).
DensityEstimate density_sweep(const ExpandingSystem& sys, const PseudoNorm& w, double s, int depth,
                              const PointSet& mass, const Box& piece, const SweepOptions& opts = {});

/// mass(W) / diam_hi(W)^s by direct counting.
double window_ratio(const ExpandingSystem& sys, const PseudoNorm& w, double s, const PointSet& mass,
                    const ConvexWindow& win);

struct AmplifiedDensity {
    int folds = 0;
    Vec point;
    double multiplicity = 0.0;  // certified lower bound on the weight at point
    double window_diam = 0.0;   // diam_hi of the box around point
    double ratio = 0.0;         // multiplicity / window_diam^s
    double piece_diam = 0.0;    // diam_hi of the root box
};

AmplifiedDensity amplified_density(const ExpandingSystem& sys, const PseudoNorm& w, double s,
                                   const CollisionWitness& witness, int folds, double half_width = 0.5,
                                   std::uint64_t budget = kDefaultPointBudget);

struct MeasureOptions {
    SweepOptions sweep;
    OscOptions osc;
    int amplify_folds = 10;
    double amplify_half_width = 0.5;
    double rounding = 1e-9;  // relative outward rounding of both ends
    std::uint64_t budget = kDefaultPointBudget;
};

struct MeasureBracket {
    double s = 0.0;
    int depth = 0;
    double H_lo = 0.0, H_hi = 0.0;
    std::string lo_method, hi_method;
    OscStatus verdict = OscStatus::Unknown;
    Bracket root_diam;
    DensityEstimate density;
    std::optional<CollisionWitness> witness;
    std::optional<AmplifiedDensity> amplified;
    std::vector<std::string> warnings;
};

/// `dm`, when given, must be D_depth of sys.
MeasureBracket measure_estimate(const ExpandingSystem& sys, const PseudoNorm& w, int depth,
                                const MeasureOptions& opts = {}, const ExpansionSet* dm = nullptr);

struct TraceEntry {
    double radius = 0.0;
    Bracket value;          // sup over windows of the bracketed H-mass ratio
    std::size_t windows = 0;
    int cylinder_depth = 0;
};

struct ConvexDensityTrace {
    Vec x;
    double s = 0.0;
    std::vector<TraceEntry> entries;
};

struct TraceOptions {
    std::vector<double> offsets = {0.0, 0.25, 0.5, 0.75, 1.0};  // per axis, relative
    std::vector<double> fractions = {1.0, 0.75, 0.5};           // of the largest admissible size
    double cylinder_ratio = 0.02;  // cylinder diam relative to the radius
    std::uint64_t budget = 4'000'000;
    int bisection_steps = 30;
};

/// Throws PointNotOnAttractor when x is farther than the cloud error from K.
ConvexDensityTrace convex_density_trace(const ExpandingSystem& sys, const PseudoNorm& w, const Vec& x, double s,
                                        const std::vector<double>& radii, const MeasureBracket& h,
                                        const TraceOptions& opts = {});

struct DimEstimate {
    int depth = 0;
    double s_w_hat = 0.0;
    double euclid_dim_hat = 0.0;
    double bound_lo = 0.0, bound_hi = 0.0;  // euclid range implied by s_w_hat
    bool inside = false;                    // within tol of [bound_lo, bound_hi]
    std::vector<std::pair<double, double>> w_fit;  // (log scale, log count)
    std::vector<std::pair<double, double>> e_fit;
};

DimEstimate dim_estimate(const ExpandingSystem& sys, const PseudoNorm& w, int depth, double tol = 0.05,
                         std::uint64_t budget = kDefaultPointBudget);

struct ConvolutionReport {
    std::size_t samples = 0;
    double lhs = 0.0, lhs_se = 0.0;  // sigma(A^-M W)
    double rhs = 0.0, rhs_se = 0.0;  // N^-M (mu_M * sigma)(W)
    double z = 0.0;
    double density_mu = 0.0;    // sweep on mu_M
    double density_conv = 0.0;  // sweep on mu_M * sigma samples
};

/// With w given, also compares the sweeps on mu_M and mu_M * sigma.
ConvolutionReport convolution_check(const ExpandingSystem& sys, int depth, const ConvexWindow& win,
                                    std::size_t samples, std::uint64_t seed, const PseudoNorm* w = nullptr,
                                    const SweepOptions& sweep = {});

}  // namespace selfaffine
