#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace selfaffine {

inline constexpr int kMaxDim = 8;

// Dynamic size with a fixed upper bound keeps vectors on the stack in hot loops.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using IVec = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using IMat = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

enum class ErrorCode {
    Config,
    NotExpanding,
    Singular,
    HorizonExceeded,
    NotSimilarity,
    GridTooCoarse,
    BudgetExceeded,
    StateBudgetExceeded,
    InvalidWitness,
    FitViolation,
    EmptySet,
    PointNotOnAttractor,
    UnsupportedDimension,
    Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

inline bool is_budget_error(ErrorCode code) {
    return code == ErrorCode::BudgetExceeded || code == ErrorCode::StateBudgetExceeded;
}

/// Closed axis-aligned box [lo, hi].
struct Box {
    Vec lo;
    Vec hi;

    int dim() const { return static_cast<int>(lo.size()); }
    Vec extent() const { return hi - lo; }
    Vec center() const { return 0.5 * (lo + hi); }
    bool contains(const Vec& x) const {
        return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
    }
    bool empty() const { return (hi.array() < lo.array()).any(); }

    static Box around(const Vec& c, const Vec& half) { return {c - half, c + half}; }
    Box inflated(double pad) const { return {lo.array() - pad, hi.array() + pad}; }
    Box translated(const Vec& t) const { return {lo + t, hi + t}; }
    /// Minkowski sum with another box.
    Box plus(const Box& other) const { return {lo + other.lo, hi + other.hi}; }
    Box hull(const Box& other) const { return {lo.cwiseMin(other.lo), hi.cwiseMax(other.hi)}; }
    bool intersects(const Box& other) const {
        return (lo.array() <= other.hi.array()).all() && (other.lo.array() <= hi.array()).all();
    }
    /// Difference set {x - y : x, y in this box}.
    Box difference() const {
        Vec e = extent();
        return {-e, e};
    }
};

/// Closed interval enclosing a scalar quantity.
struct Bracket {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Row-major flat point storage: point i occupies coords[i*n .. i*n+n).
struct PointSet {
    int n = 0;
    std::vector<double> coords;
    std::vector<double> weights;

    std::size_t size() const { return n == 0 ? 0 : coords.size() / static_cast<std::size_t>(n); }
    Vec point(std::size_t i) const {
        return Eigen::Map<const Eigen::VectorXd>(coords.data() + i * n, n);
    }
    std::span<const double> span(std::size_t i) const { return {coords.data() + i * n, static_cast<std::size_t>(n)}; }
    double total_weight() const;
    Box bbox() const;
};

}  // namespace selfaffine
