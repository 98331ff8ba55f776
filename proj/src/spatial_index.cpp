#include "selfaffine/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "selfaffine/rng.hpp"

namespace selfaffine {

std::size_t CellKeyHash::operator()(const CellKey& k) const noexcept {
    std::uint64_t h = 0x9E3779B97F4A7C15ULL;
    for (std::int64_t v : k.c) h = mix64(h ^ static_cast<std::uint64_t>(v));
    return static_cast<std::size_t>(h);
}

SpatialGrid::SpatialGrid(const PointSet& pts, double cell) : pts_(&pts), cell_(cell) {
    if (!(cell > 0.0)) throw Error(ErrorCode::Config, "grid cell size must be positive");
    for (std::size_t i = 0; i < pts.size(); ++i)
        buckets_[key_of(pts.coords.data() + i * pts.n)].push_back(static_cast<std::uint32_t>(i));
}

CellKey SpatialGrid::key_of(const double* x) const {
    CellKey k;
    for (int a = 0; a < pts_->n; ++a) {
        double c = std::floor(x[a] / cell_);
        k.c[a] = static_cast<std::int64_t>(std::clamp(c, -4.0e18, 4.0e18));
    }
    return k;
}

const std::vector<std::uint32_t>* SpatialGrid::bucket(const CellKey& k) const {
    auto it = buckets_.find(k);
    return it == buckets_.end() ? nullptr : &it->second;
}

std::pair<double, std::pair<std::size_t, std::size_t>> closest_pair(const PointSet& pts) {
    const std::size_t count = pts.size();
    if (count < 2) throw Error(ErrorCode::EmptySet, "closest pair needs two points");
    const int n = pts.n;
    Box bb = pts.bbox();
    double ext = bb.extent().maxCoeff();
    if (ext == 0.0) return {0.0, {0, 1}};
    double vol = 1.0;
    int live = 0;
    for (int a = 0; a < n; ++a) {
        if (bb.extent()[a] > 0.0) {
            vol *= bb.extent()[a];
            ++live;
        }
    }
    double s = std::pow(vol / static_cast<double>(count), 1.0 / live);
    if (!(s > 0.0)) s = ext / static_cast<double>(count);
    for (;;) {
        SpatialGrid grid(pts, s);
        auto best = std::make_tuple(std::numeric_limits<double>::infinity(), std::size_t{0}, std::size_t{0});
        for (std::size_t i = 0; i < count; ++i) {
            const double* xi = pts.coords.data() + i * n;
            grid.visit_neighbourhood(xi, 1, [&](std::uint32_t j) {
                if (j <= i) return;
                const double* xj = pts.coords.data() + static_cast<std::size_t>(j) * n;
                double d2 = 0.0;
                for (int a = 0; a < n; ++a) d2 += (xi[a] - xj[a]) * (xi[a] - xj[a]);
                auto cand = std::make_tuple(std::sqrt(d2), i, static_cast<std::size_t>(j));
                if (cand < best) best = cand;
            });
        }
        if (std::get<0>(best) <= s || s > 2.0 * ext * std::sqrt(static_cast<double>(n)))
            return {std::get<0>(best), {std::get<1>(best), std::get<2>(best)}};
        s *= 2.0;
    }
}

BoxCounter::BoxCounter(const PointSet& pts, int target_per_cell) : pts_(&pts), n_(pts.n) {
    const std::size_t count = pts.size();
    if (count == 0) throw Error(ErrorCode::EmptySet, "range counter over an empty set");
    Box bb = pts.bbox();
    lo_ = bb.lo;
    hi_ = bb.hi;
    cell_.resize(n_);
    int live = 0;
    for (int a = 0; a < n_; ++a)
        if (bb.extent()[a] > 0.0) ++live;
    double cells_total = std::max(1.0, static_cast<double>(count) / target_per_cell);
    long g = live ? std::max(1L, static_cast<long>(std::ceil(std::pow(cells_total, 1.0 / live)))) : 1;
    std::size_t ncells = 1;
    for (int a = 0; a < n_; ++a) {
        dims_[a] = bb.extent()[a] > 0.0 ? g : 1;
        cell_[a] = bb.extent()[a] > 0.0 ? bb.extent()[a] / static_cast<double>(g) : 1.0;
        ncells *= static_cast<std::size_t>(dims_[a]);
    }
    std::vector<std::size_t> cell_of(count);
    std::vector<std::size_t> counts(ncells + 1, 0);
    std::vector<double> wsum(ncells, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        std::array<long, kMaxDim> idx{};
        for (int a = 0; a < n_; ++a) {
            long c = static_cast<long>(std::floor((pts.coords[i * n_ + a] - lo_[a]) / cell_[a]));
            idx[a] = std::clamp(c, 0L, dims_[a] - 1);
        }
        cell_of[i] = flat(idx);
        ++counts[cell_of[i] + 1];
        wsum[cell_of[i]] += pts.weights.empty() ? 1.0 : pts.weights[i];
    }
    for (std::size_t c = 0; c < ncells; ++c) counts[c + 1] += counts[c];
    start_ = counts;
    members_.resize(count);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < count; ++i) members_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);

    // padded inclusive prefix sums
    std::size_t psize = 1;
    for (int a = n_ - 1; a >= 0; --a) {
        pstride_[a] = psize;
        psize *= static_cast<std::size_t>(dims_[a] + 1);
    }
    prefix_.assign(psize, 0.0);
    for (std::size_t c = 0; c < ncells; ++c) {
        std::size_t r = c, p = 0;
        for (int a = n_ - 1; a >= 0; --a) {
            std::size_t i = r % static_cast<std::size_t>(dims_[a]);
            r /= static_cast<std::size_t>(dims_[a]);
            p += (i + 1) * pstride_[a];
        }
        prefix_[p] = wsum[c];
    }
    for (int a = 0; a < n_; ++a) {
        for (std::size_t p = 0; p < psize; ++p) {
            std::size_t ia = (p / pstride_[a]) % static_cast<std::size_t>(dims_[a] + 1);
            if (ia > 0) prefix_[p] += prefix_[p - pstride_[a]];
        }
    }
}

std::size_t BoxCounter::flat(const std::array<long, kMaxDim>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < n_; ++a) f = f * static_cast<std::size_t>(dims_[a]) + static_cast<std::size_t>(idx[a]);
    return f;
}

double BoxCounter::prefix_sum(const std::array<long, kMaxDim>& lo, const std::array<long, kMaxDim>& hi) const {
    double s = 0.0;
    for (unsigned corner = 0; corner < (1u << n_); ++corner) {
        std::size_t p = 0;
        int sign = 1;
        for (int a = 0; a < n_; ++a) {
            long i = (corner & (1u << a)) ? lo[a] : hi[a] + 1;
            if (corner & (1u << a)) sign = -sign;
            p += static_cast<std::size_t>(i) * pstride_[a];
        }
        s += sign * prefix_[p];
    }
    return s;
}

double BoxCounter::count(const Box& b) const {
    std::array<long, kMaxDim> i0{}, i1{}, j0{}, j1{};
    bool inner_empty = false;
    for (int a = 0; a < n_; ++a) {
        double top = lo_[a] + cell_[a] * static_cast<double>(dims_[a]);
        if (b.hi[a] < lo_[a] || b.lo[a] > top) return 0.0;
        auto idx = [&](double x) {
            return std::clamp(static_cast<long>(std::floor((x - lo_[a]) / cell_[a])), 0L, dims_[a] - 1);
        };
        i0[a] = b.lo[a] <= lo_[a] ? 0 : idx(b.lo[a]);
        i1[a] = idx(b.hi[a]);
        // a slab c is certainly inside when its nominal range is inside with margin
        double margin = 1e-12 * (std::abs(lo_[a]) + cell_[a] * dims_[a]);
        j0[a] = i0[a];
        while (j0[a] <= i1[a]) {
            double slo = j0[a] == 0 ? lo_[a] : lo_[a] + cell_[a] * j0[a] - margin;
            if (slo >= b.lo[a]) break;
            ++j0[a];
        }
        j1[a] = i1[a];
        while (j1[a] >= j0[a]) {
            double shi = j1[a] == dims_[a] - 1 ? hi_[a] : lo_[a] + cell_[a] * (j1[a] + 1) + margin;
            if (shi <= b.hi[a]) break;
            --j1[a];
        }
        if (j1[a] < j0[a]) inner_empty = true;
    }
    double total = inner_empty ? 0.0 : prefix_sum(j0, j1);

    auto check_cell = [&](const std::array<long, kMaxDim>& idx) {
        std::size_t c = flat(idx);
        double s = 0.0;
        for (std::size_t m = start_[c]; m < start_[c + 1]; ++m) {
            std::uint32_t i = members_[m];
            const double* x = pts_->coords.data() + static_cast<std::size_t>(i) * n_;
            bool in = true;
            for (int a = 0; a < n_ && in; ++a) in = x[a] >= b.lo[a] && x[a] <= b.hi[a];
            if (in) s += pts_->weights.empty() ? 1.0 : pts_->weights[i];
        }
        return s;
    };

    // rim cells: every cell of [i0, i1] outside [j0, j1]
    std::array<long, kMaxDim> idx = i0;
    const int last = n_ - 1;
    for (;;) {
        bool prefix_inner = !inner_empty;
        for (int a = 0; a < last && prefix_inner; ++a) prefix_inner = idx[a] >= j0[a] && idx[a] <= j1[a];
        for (long c = i0[last]; c <= i1[last]; ++c) {
            if (prefix_inner && c >= j0[last] && c <= j1[last]) {
                c = j1[last];
                continue;
            }
            idx[last] = c;
            total += check_cell(idx);
        }
        int a = last - 1;
        while (a >= 0) {
            if (++idx[a] <= i1[a]) break;
            idx[a] = i0[a];
            --a;
        }
        if (a < 0) break;
    }
    return total;
}

}  // namespace selfaffine
