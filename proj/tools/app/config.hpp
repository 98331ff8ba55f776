#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfaffine/attractor.hpp"
#include "selfaffine/digits.hpp"
#include "selfaffine/linalg.hpp"
#include "selfaffine/measure_density.hpp"
#include "selfaffine/pseudo_norm.hpp"

namespace selfaffine::cli {

/// Fully resolved run configuration. Every field has a value after parsing;
/// absent keys take the defaults below.
struct RunConfig {
    // [system]
    int dim = 0;
    std::vector<Rational> matrix;              // row-major
    std::vector<std::vector<Rational>> digits;
    ArithmeticMode mode = ArithmeticMode::ExactInteger;
    double tau = 1e-9;
    double theta = 0.0;  // 0 = (1 + lambda_min) / 2
    double eps_spec = 1e-9;

    // [norm]
    NormVariant variant = NormVariant::Mollified;
    PseudoNormParams norm;  // norm.seed mirrors the run seed
    int calibration_samples = 2000;
    std::vector<double> lambda_eps = {0.5, 0.25, 0.1};
    double fit_eps = 0.1;
    int fit_samples = 2000;
    double fit_cap = 1e3;

    // [budget]
    int max_depth = 12;
    std::uint64_t point_budget = kDefaultPointBudget;
    std::uint64_t state_budget = 10'000'000;

    // [measure]
    int depth = 8;
    SweepOptions sweep;
    int amplify_folds = 10;
    double amplify_half_width = 0.5;
    double rounding = 1e-9;

    // [density]
    std::vector<Vec> trace_points;
    std::vector<double> trace_radii = {0.5, 0.25, 0.125};
    int dim_depth = 0;  // 0 = measure depth
    double dim_tol = 0.05;
    int conv_depth = 2;
    std::uint64_t conv_samples = 100000;
    std::vector<Box> conv_windows;  // empty = the root box

    // [render]
    int render_depth = 8;
    std::string render_source = "cloud";  // cloud | chaos
    std::uint64_t render_samples = 200000;
    int width = 512;
    int height = 512;
    std::string format = "pgm";  // pgm | ppm
    bool raster = true;

    // [probe]
    std::string points_file;     // resolved path, empty = samples of V
    std::string points_digest;   // SHA-256 of the points file
    int v_samples = 64;
    bool pairs = true;

    // [run]
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = runtime default
    std::string out = "out";
};

/// Parses INI text. Relative paths resolve against base_dir.
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

/// The resolved configuration as INI text in a fixed key order. The output
/// directory and thread count are left out: they never change results.
std::string canonical_text(const RunConfig& cfg);

/// First 16 hex digits of the SHA-256 of canonical_text.
std::string config_hash(const RunConfig& cfg);

std::string sha256_hex(const std::string& data);

/// Validates A and D and builds the system; throws Config-class errors.
ExpandingSystem build_system(const RunConfig& cfg);

/// Exact decimal or fraction literal: "3", "-1/2", "0.125", "1e-3".
Rational parse_rational(const std::string& s);

}  // namespace selfaffine::cli
