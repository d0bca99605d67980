#pragma once

#include "optkit/optcore.hpp"

#include <optional>
#include <string>
#include <vector>

namespace optkit {

enum class Policy { Full, Minimal, MinimalSC };
// AllDims: one elementary system per dimension. OddOnly: elementary systems of odd dimension only.
enum class Catalogue { AllDims, OddOnly };

std::string to_string(Policy p);
Policy parse_policy(const std::string& s);
std::string to_string(Catalogue c);
Catalogue parse_catalogue(const std::string& s);

struct TheoryHandle {
    Theory theory = Theory::BCT;
    Policy policy = Policy::MinimalSC;
    int depth = 2;
    std::size_t ancilla_bound = 8;
    Catalogue catalogue = Catalogue::AllDims;
    int grid = 3;  // preparation weights k / 2^grid
};

std::string describe(const TheoryHandle& h);

// Throws if a leaf dimension is not in the catalogue.
SystemType make_system(Theory th, std::vector<int> dims, Catalogue cat = Catalogue::AllDims);
// Decomposition of a total dimension into catalogue leaves (nondecreasing, fewest leaves first).
std::optional<SystemType> system_of_dimension(Theory th, std::size_t dim, Catalogue cat);
bool in_catalogue(int leaf_dim, Catalogue cat);

// Canonical (left-associated) labels in index order. CT labels carry '+' signs only.
std::vector<PureLabel> pure_states(const SystemType& s);
// Dual-basis observation test; outcome names are label texts.
Instrument discriminating_test(const SystemType& s);

// Marginal of a state on the leaves `keep` (in the given order), by the deterministic effect on the others.
StateVec marginal(const StateVec& r, const std::vector<std::size_t>& keep);
// True when the vertex is the product of its marginals over some bipartition of the leaves.
bool is_product_vertex(const SystemType& s, std::size_t index);

struct SpanReport {
    bool spanning = false;
    std::size_t entangled = 0;
    std::size_t rank = 0;
    std::size_t dimension = 0;
};
SpanReport entangled_spanning(const SystemType& s);

// Preparation grid: vertices and two-vertex mixtures with weights k / 2^grid.
std::vector<StateVec> grid_states(const SystemType& s, int grid);

// Channels S2 (|rho)(u| (x) id_E) S1 with A' -> B' erased and prepared and E kept.
// Only the minimal policy is enumerable; Full throws.
struct ChannelFamily {
    std::vector<TransfMap> channels;
    std::size_t generated = 0;  // before exact deduplication
    std::string note;
};
ChannelFamily channel_family(const TheoryHandle& h, const SystemType& in, const SystemType& out);

// Exact membership test for the minimal canonical channel form (any preparation state).
bool is_minimal_channel(const TransfMap& t);

// Ext matrix of the leaf permutation, if t is one.
std::optional<std::vector<std::size_t>> as_wire_permutation(const TransfMap& t);

struct PolicyError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace optkit
