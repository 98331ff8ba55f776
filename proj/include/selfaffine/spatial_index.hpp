#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selfaffine/types.hpp"

namespace selfaffine {

struct CellKey {
    std::array<std::int64_t, kMaxDim> c{};
    bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept;
};

/// Uniform hash grid over a point set for neighbour queries.
class SpatialGrid {
  public:
    SpatialGrid(const PointSet& pts, double cell);

    double cell() const { return cell_; }
    CellKey key_of(const double* x) const;
    const std::vector<std::uint32_t>* bucket(const CellKey& k) const;

    /// Calls f(i) for every point i in cells within `reach` cells of x.
    template <class F>
    void visit_neighbourhood(const double* x, int reach, F&& f) const {
        CellKey base = key_of(x);
        const int n = pts_->n;
        int side = 2 * reach + 1;
        int total = 1;
        for (int a = 0; a < n; ++a) total *= side;
        for (int t = 0; t < total; ++t) {
            CellKey k = base;
            int r = t;
            for (int a = 0; a < n; ++a) {
                k.c[a] += r % side - reach;
                r /= side;
            }
            if (const auto* b = bucket(k))
                for (std::uint32_t i : *b) f(i);
        }
    }

  private:
    const PointSet* pts_;
    double cell_;
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> buckets_;
};

/// Euclidean closest pair by grid search with cell doubling. Returns the
/// distance and the pair (i < j). Requires at least two points.
std::pair<double, std::pair<std::size_t, std::size_t>> closest_pair(const PointSet& pts);

/// Weighted range counting in closed axis boxes: a dense cell grid with a
/// prefix-sum table for fully covered cells and point checks on the rim.
class BoxCounter {
  public:
    BoxCounter() = default;
    explicit BoxCounter(const PointSet& pts, int target_per_cell = 4);

    double count(const Box& b) const;
    int dim() const { return n_; }
    /// Calls f(i) for every point i in the closed box.
    template <class F>
    void visit(const Box& b, F&& f) const {
        std::array<long, kMaxDim> i0{}, i1{};
        for (int a = 0; a < n_; ++a) {
            if (b.hi[a] < lo_[a] || b.lo[a] > hi_[a]) return;
            i0[a] = std::clamp(static_cast<long>(std::floor((b.lo[a] - lo_[a]) / cell_[a])), 0L, dims_[a] - 1);
            i1[a] = std::clamp(static_cast<long>(std::floor((b.hi[a] - lo_[a]) / cell_[a])), 0L, dims_[a] - 1);
        }
        std::array<long, kMaxDim> idx = i0;
        for (;;) {
            std::size_t c = flat(idx);
            for (std::size_t m = start_[c]; m < start_[c + 1]; ++m) {
                std::uint32_t i = members_[m];
                const double* x = pts_->coords.data() + static_cast<std::size_t>(i) * n_;
                bool in = true;
                for (int a = 0; a < n_ && in; ++a) in = x[a] >= b.lo[a] && x[a] <= b.hi[a];
                if (in) f(i);
            }
            int a = n_ - 1;
            while (a >= 0 && ++idx[a] > i1[a]) {
                idx[a] = i0[a];
                --a;
            }
            if (a < 0) return;
        }
    }

  private:
    double prefix_sum(const std::array<long, kMaxDim>& lo, const std::array<long, kMaxDim>& hi) const;
    std::size_t flat(const std::array<long, kMaxDim>& idx) const;

    const PointSet* pts_ = nullptr;
    int n_ = 0;
    Vec lo_, hi_, cell_;
    std::array<long, kMaxDim> dims_{};
    std::vector<std::size_t> start_;     // CSR offsets per cell
    std::vector<std::uint32_t> members_;
    std::vector<double> prefix_;         // inclusive prefix sums over cells, padded by one
    std::array<std::size_t, kMaxDim> pstride_{};
};

}  // namespace selfaffine
