#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "selfaffine/digits.hpp"
#include "selfaffine/pseudo_norm.hpp"
#include "selfaffine/spatial_index.hpp"

namespace selfaffine {

/// Points sum_{j=1}^{M} A^-j d_j, one per distinct value, weighted by the
/// number of words reaching it.
struct AttractorCloud {
    int depth = 0;
    PointSet points;
    double err_radius = 0.0;  // Euclidean Hausdorff distance bound to K
};

AttractorCloud attractor_cloud(const ExpandingSystem& sys, int depth, std::uint64_t budget = kDefaultPointBudget);

/// Euclidean bound on sup_{y in K} ||A^-m y||.
double tail_radius(const ExpandingSystem& sys, int m);

/// Bounding box of A^-m K from its support function, tight up to a
/// certified truncation tail.
Box attractor_bbox(const ExpandingSystem& sys, int m = 0);

/// Smallest J with tail_radius(sys, J) <= eps.
int chaos_truncation(const ExpandingSystem& sys, double eps);

/// Samples sum_{j=1}^{J} A^-j d_j with uniform digits. Sample i depends only
/// on (seed, stream, i).
PointSet chaos_game(const ExpandingSystem& sys, std::size_t count, int truncation, std::uint64_t seed,
                    std::uint64_t stream = 0);

/// A compact convex test set: an axis box, or the pseudo ball
/// center + A^k (t B_1) with B_1 the renormed unit ball.
struct ConvexWindow {
    enum class Kind { Box, Ball };
    Kind kind = Kind::Box;
    Box box;
    Vec center;
    int k = 0;
    double t = 0.0;

    static ConvexWindow axis_box(Box b);
    static ConvexWindow pseudo_ball(Vec center, int k, double t);

    bool contains(const ExpandingSystem& sys, const Vec& x) const;
    Box bounding_box(const ExpandingSystem& sys) const;
    /// The image under x -> A x; boxes need a diagonal A.
    ConvexWindow mapped(const ExpandingSystem& sys) const;
    /// Enclosure of diam_w.
    Bracket diam(const PseudoNorm& w) const;
};

/// Depth-M cylinders K_i = A^-M (v_i + K): anchors A^-M v_i for v_i in D_M
/// and a common shape box, so cylinder box i is anchor_i + shape.
class CylinderDecomposition {
  public:
    CylinderDecomposition(const ExpandingSystem& sys, int depth, std::uint64_t budget = kDefaultPointBudget);

    int depth() const { return depth_; }
    const PointSet& anchors() const { return *anchors_; }
    const Box& shape() const { return shape_; }
    double unit_mass() const { return unit_mass_; }
    std::size_t cylinders() const { return anchors_->size(); }
    Box cylinder_box(std::size_t i) const;
    /// Anchors whose boxes touch a window boundary within the slack.
    std::uint64_t grazing(const ConvexWindow& win) const { return bracket_counts(win).grazing; }

    /// [N^-M #{box inside}, N^-M #{box meets}] with multiplicities.
    Bracket sigma(const ConvexWindow& win) const;

  private:
    struct Counts {
        double inside = 0.0, meets = 0.0;
        std::uint64_t grazing = 0;
    };
    Counts bracket_counts(const ConvexWindow& win) const;

    const ExpandingSystem* sys_;
    int depth_;
    std::shared_ptr<PointSet> anchors_;
    Box shape_;
    double unit_mass_;
    double slack_;
    BoxCounter counter_;
};

/// Convenience form building the decomposition on the fly.
Bracket sigma_bracket(const ExpandingSystem& sys, const ConvexWindow& win, int depth,
                      std::uint64_t budget = kDefaultPointBudget);

/// Hausdorff distance with respect to w between two clouds.
double pseudo_hausdorff_distance(const PseudoNorm& w, const PointSet& p, const PointSet& q);

}  // namespace selfaffine
