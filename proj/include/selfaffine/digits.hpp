#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfaffine/linalg.hpp"
#include "selfaffine/pseudo_norm.hpp"

namespace selfaffine {

inline constexpr std::uint64_t kDefaultPointBudget = 10'000'000;

/// A digit word d_0 d_1 ... d_{M-1} stored as digit indices; position j
/// carries the coefficient A^j.
using Word = std::vector<int>;

/// The multiset D_M of values sum_{j<M} A^j d_j, deduplicated with integer
/// multiplicities. Points are sorted, which makes the content deterministic.
struct ExpansionSet {
    int n = 0;
    int depth = 0;
    std::size_t digit_count = 0;
    PointSet points;                        // weights hold the multiplicities
    std::vector<std::uint64_t> multiplicity;
    std::vector<std::uint64_t> word_code;   // smallest word reaching each point, sum idx_j N^j
    std::vector<std::int64_t> keys;         // exact modes: values times the digit denominator
    std::int64_t denominator = 1;
    bool exact = false;
    double tau = 0.0;
    /// First coincidence met while building: two word codes of the given depth.
    struct Coincidence {
        int depth = 0;
        std::uint64_t code_a = 0, code_b = 0;
    };
    std::optional<Coincidence> collision;

    std::size_t size() const { return multiplicity.size(); }
    std::uint64_t total_weight() const;
    bool all_distinct() const;
};

Word decode_word(std::uint64_t code, std::size_t digit_count, int depth);
std::uint64_t encode_word(const Word& w, std::size_t digit_count);

/// D_M; throws BudgetExceeded when N^M exceeds the budget.
ExpansionSet enumerate_DM(const ExpandingSystem& sys, int depth, std::uint64_t budget = kDefaultPointBudget);
/// One refinement step D_{M+1} = D_M + A^M D.
ExpansionSet refine(const ExpandingSystem& sys, const ExpansionSet& prev, std::uint64_t budget = kDefaultPointBudget);

/// Minimal Euclidean distance between distinct points, 0 if a weight exceeds 1.
double min_separation(const ExpansionSet& eset);
/// Minimal w(x - y) over distinct points, 0 if a weight exceeds 1.
double min_separation(const ExpansionSet& eset, const PseudoNorm& w);

/// Float value of a word.
Vec word_value(const ExpandingSystem& sys, const Word& w);
/// Exact value of a word scaled by the digit denominator (exact modes only).
IVec word_value_exact(const ExpandingSystem& sys, const Word& w);

struct CollisionWitness {
    int depth = 0;
    Word word_a, word_b;
    Vec value_a, value_b;
    double distance = 0.0;  // Euclidean, 0 for exact coincidences
    bool exact = false;
};

enum class OscStatus { Holds, Fails, Unknown };
const char* to_string(OscStatus s);

struct TrendRow {
    int depth = 0;
    std::uint64_t words = 0;
    std::size_t distinct = 0;
    double min_separation = 0.0;
};

struct OscOptions {
    int max_depth = 12;
    std::uint64_t point_budget = kDefaultPointBudget;
    std::uint64_t state_budget = 10'000'000;
};

struct OscVerdict {
    OscStatus status = OscStatus::Unknown;
    std::string method;  // "automaton" or "enumeration"
    int depth_reached = 0;
    std::optional<CollisionWitness> witness;
    std::vector<IVec> reachable_states;  // Holds certificate, scaled integer coordinates
    double state_bound = 0.0;            // renormed-norm bound on difference states
    double discreteness_delta = 0.0;
    std::vector<TrendRow> trend;
};

/// Exact reachability decision in the exact modes; enumeration evidence in
/// float mode, where Holds is never returned.
OscVerdict decide_osc(const ExpandingSystem& sys, const OscOptions& opts = {});

/// Re-evaluates a witness; true when the two words are distinct and their
/// values coincide (exactly, or within tau in float mode).
bool verify_witness(const ExpandingSystem& sys, const CollisionWitness& w);

struct Amplification {
    int folds = 0;
    Vec point;                        // a_k = sum_{j<k} A^{Mj} a
    std::optional<IVec> exact_point;  // scaled by the digit denominator
    std::uint64_t multiplicity_bound = 1;
    std::uint64_t words_checked = 0;  // explicitly rebuilt words with value a_k
    std::optional<std::uint64_t> enumerated_weight;
};

/// Throws InvalidWitness.
Amplification collision_amplify(const ExpandingSystem& sys, const CollisionWitness& witness, int folds,
                                 std::uint64_t budget = kDefaultPointBudget);

/// A = 2 in one dimension with D = {0, 1, 1 + 2^-t (sqrt 2 - 1)}, or D = {0, 1}
/// for t = 0. Expansions stay distinct while D_infinity is not uniformly discrete.
ExpandingSystem nondiscrete_vector_gen(int t, double tau = 1e-12);

struct NondiscreteCluster {
    int depth = 0;             // S_k + M_k
    Vec center;                // w_k
    std::vector<Vec> members;  // F_k, 2^k values
    double max_offset = 0.0;   // max ||z - w_k||
};

/// The cluster F_k around w_k built from near pairs x_i, y_i with
/// ||x_i - y_i|| < 1 / (2^i ||A||^{S_i}); every member is within 1 of w_k.
NondiscreteCluster nondiscrete_cluster(const ExpandingSystem& sys, int k, int max_depth = 16,
                                       std::uint64_t budget = kDefaultPointBudget);

}  // namespace selfaffine
