#include "selfaffine/types.hpp"

#include <limits>
#include <numeric>

namespace selfaffine {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config: return "Config";
        case ErrorCode::NotExpanding: return "NotExpanding";
        case ErrorCode::Singular: return "Singular";
        case ErrorCode::HorizonExceeded: return "HorizonExceeded";
        case ErrorCode::NotSimilarity: return "NotSimilarity";
        case ErrorCode::GridTooCoarse: return "GridTooCoarse";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::StateBudgetExceeded: return "StateBudgetExceeded";
        case ErrorCode::InvalidWitness: return "InvalidWitness";
        case ErrorCode::FitViolation: return "FitViolation";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::PointNotOnAttractor: return "PointNotOnAttractor";
        case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

double PointSet::total_weight() const {
    if (weights.empty()) return static_cast<double>(size());
    return std::accumulate(weights.begin(), weights.end(), 0.0);
}

Box PointSet::bbox() const {
    if (size() == 0) throw Error(ErrorCode::EmptySet, "bounding box of an empty point set");
    Box b{Vec::Constant(n, std::numeric_limits<double>::infinity()),
          Vec::Constant(n, -std::numeric_limits<double>::infinity())};
    for (std::size_t i = 0; i < size(); ++i) {
        for (int k = 0; k < n; ++k) {
            double v = coords[i * n + k];
            b.lo[k] = std::min(b.lo[k], v);
            b.hi[k] = std::max(b.hi[k], v);
        }
    }
    return b;
}

}  // namespace selfaffine
