#pragma once

#include "optkit/optcore.hpp"
#include "optkit/theories.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace optkit {

// ---- conditioning ------------------------------------------------------------------

// Base instrument T over X and one branch instrument per outcome of T. Branches with
// fewer outcomes are padded with null events up to the largest outcome count.
struct ConditionalSpec {
    Instrument base;
    std::vector<Instrument> branches;
};

// Events G^(x)_y T_x, labelled "x.y".
Instrument condition(const ConditionalSpec& spec);

// One instrument per set partition of the outcomes (at most max_outcomes outcomes).
std::vector<Instrument> all_coarse_grainings(const Instrument& i, std::size_t max_outcomes = 8);

struct Family {
    std::vector<Instrument> instruments;
    bool truncated = false;
    std::string report;
};

// Instruments in -> out built as conditional chains of at most k+1 generator
// instruments (depth k), flattened and deduplicated by exact event lists.
// Optionally closed under coarse-graining.
Family close_depth(const std::vector<Instrument>& generators, const SystemType& in, const SystemType& out, int k,
                   std::size_t max_family = 20000, bool coarse_grainings = false);

// Jellyfish round on M: prepare a deterministic state of P after M, then measure the leaves
// `measured` of M P with the discriminating test. Events are labelled by measured outcomes.
Instrument jellyfish_round(const SystemType& m, const StateVec& prep, const std::vector<std::size_t>& measured);

// Deterministic channels in -> out of the minimal strongly causal policy: full coarse-grainings
// of depth-h.depth chains of jellyfish rounds with grid preparations. Bounded by max_family.
ChannelFamily sc_channel_family(const TheoryHandle& h, const SystemType& in, const SystemType& out,
                                std::size_t max_family = 20000);

// ---- exhaustive chain search ----------------------------------------------------------
//
// Searches every conditional chain of depth+1 jellyfish rounds from A, with every
// intermediate, prepared and measured system of dimension <= ancilla_bound and leaf
// dimensions <= max_leaf_dim. Preparations are vertex states and measurements are
// discriminating tests; coarser or mixed tests are coarse-grainings or vertex-resolved
// refinements of these, and refinement preserves every goal below.
//
// The events of all ext maps are nonnegative, so a chain event can only contribute to a
// goal if it is dominated by it; each branch is therefore completed independently.

enum class SearchGoal {
    IdentityDecomposition,  // events summing to id_A, one of them not proportional to id
    Broadcasting,           // channel A -> AA with both marginals equal to id_A
    Reversible,             // channels equal to a permutation of the ext vertices of A
};

std::string to_string(SearchGoal g);

struct SearchBudget {
    int depth = 2;
    std::size_t ancilla_bound = 8;
    int max_leaf_dim = 0;  // 0: largest leaf of the target
    Catalogue catalogue = Catalogue::AllDims;
    std::size_t node_limit = 2000000;
    std::size_t signature_limit = 4096;
};

struct SearchStats {
    std::size_t nodes = 0;      // distinct branch states (up to leaf order and scale)
    std::size_t choices = 0;    // rounds tried
    std::size_t rejected = 0;   // rounds rejected because outcome branches mix ext vertices
};

// One node of a witness chain, keyed by its outcome path. The leaves of M are first
// reordered by `frame`; then either the round is applied or the chain ends with
// the output leaf order `output`.
struct ChainRound {
    SystemType prepared;               // may be trivial
    std::size_t vertex = 0;            // vertex of `prepared`
    std::vector<std::size_t> measured; // leaf positions in M P
};

struct WitnessNode {
    std::vector<std::string> path;
    SystemType m;
    std::vector<std::size_t> frame;
    bool final = false;
    ChainRound round;
    std::vector<std::size_t> output;
};

struct SearchResult {
    SearchGoal goal = SearchGoal::IdentityDecomposition;
    bool found = false;
    bool truncated = false;
    // Identity/Broadcasting witness: the conditional chain's events (labels are dotted round outcomes).
    Instrument witness;
    std::vector<std::string> witness_steps;
    std::vector<WitnessNode> witness_plan;
    // Reversible goal: every ext-vertex permutation realised as a channel.
    std::vector<std::vector<int>> permutations;
    SearchStats stats;
};

SearchResult search_chains(const SystemType& a, SearchGoal goal, const SearchBudget& b);

// Rebuilds a witness plan with dense maps (jellyfish rounds and wire permutations).
// Zero events are dropped; throws if a nonzero branch is missing from the plan.
Instrument recompose_dense(const SystemType& a, const std::vector<WitnessNode>& plan);

// Applies rounds chosen per branch: `plan(path, leaves)` returns the round for the branch reached
// through the outcome path; an empty optional ends the chain on that branch. Result: events A -> M
// of the final branches, with dotted outcome labels.
struct ExplicitChain {
    std::vector<std::string> outcomes;
    std::vector<TransfMap> events;
};
ExplicitChain run_chain(const SystemType& a,
                        const std::function<std::optional<ChainRound>(const std::vector<std::string>& path,
                                                                      const SystemType& m)>& plan,
                        const std::function<std::vector<std::size_t>(const std::vector<std::string>& path,
                                                                     const SystemType& m)>& output_order);

}  // namespace optkit
