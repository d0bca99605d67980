#pragma once

#include "optkit/labelcalc.hpp"
#include "optkit/ratlin.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace optkit {

enum class Theory { CT, BCT };

std::string to_string(Theory t);
Theory parse_theory(const std::string& s);

// Ordered list of elementary leaves; the empty list is the trivial system.
struct SystemType {
    Theory theory = Theory::BCT;
    std::vector<int> dims;

    bool trivial() const { return dims.empty(); }
    std::size_t leaves() const { return dims.size(); }
    std::size_t dimension() const;
    friend bool operator==(const SystemType&, const SystemType&) = default;
};

std::string to_string(const SystemType& s);
SystemType compose_systems(const SystemType& a, const SystemType& b);

struct TheoryMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---- pure-state labels as packed keys ------------------------------------
//
// A key stores one value per leaf (4 bits each, leaf 0 lowest) and, for BCT,
// one sign bit per leaf above bit 48. Canonical keys have the sign bit of leaf
// 0 cleared. Limits: 12 leaves, leaf dimension 15.

using LabelKey = std::uint64_t;
constexpr std::size_t kMaxLeaves = 12;
constexpr int kMaxLeafDim = 15;

inline int key_val(LabelKey k, std::size_t leaf) { return static_cast<int>((k >> (4 * leaf)) & 0xF); }
inline int key_eps(LabelKey k, std::size_t leaf) { return static_cast<int>((k >> (48 + leaf)) & 1); }
LabelKey make_key(const std::vector<int>& vals, const std::vector<int>& eps_bits);
LabelKey canonical_key(LabelKey k, std::size_t leaves);

// Index of a canonical key in the lexicographic label order of the system.
std::size_t label_index(const SystemType& s, LabelKey k);
LabelKey label_key(const SystemType& s, std::size_t index);
PureLabel key_to_label(const SystemType& s, LabelKey k);  // left-associated
LabelKey label_to_key(const SystemType& s, const PureLabel& l);
std::string label_text(const SystemType& s, std::size_t index);
std::vector<LabelKey> all_keys(const SystemType& s);

// ---- vectors and maps ------------------------------------------------------

struct StateVec {
    SystemType system;
    RatVec x;
};

struct EffectVec {
    SystemType system;
    RatVec x;
};

StateVec vertex_state(const SystemType& s, std::size_t index);
StateVec product_state(const StateVec& a, const StateVec& b);
EffectVec deterministic_effect(const SystemType& s);
Rat pair(const EffectVec& e, const StateVec& r);
bool is_admissible_state(const StateVec& r);
bool is_deterministic_state(const StateVec& r);

enum class AdmissibilityKind { Unchecked, AdmissibleUpTo, Canonical };

struct Admissibility {
    AdmissibilityKind kind = AdmissibilityKind::Unchecked;
    std::size_t ancilla_bound = 0;
    std::string form;
};

// Transformation stored by its action on the system extended by a sign probe:
// one extra leaf of dimension one appended after the last leaf (BCT only).
// BCT is not locally tomographic, and the probe carries the single relative
// sign between the transformed block and any environment. For CT the stored
// matrix is the local one.
struct TransfMap {
    SystemType in, out;
    RatMat ext;
    Admissibility admissibility;

    RatMat local() const;
    friend bool operator==(const TransfMap& a, const TransfMap& b) {
        return a.in == b.in && a.out == b.out && a.ext == b.ext;
    }
};

SystemType probe_extended(const SystemType& s);

TransfMap identity_map(const SystemType& s);
TransfMap zero_map(const SystemType& in, const SystemType& out);
TransfMap state_map(const StateVec& r);
TransfMap effect_map(const EffectVec& e);
// Output leaf k is input leaf perm[k].
TransfMap permutation_map(const SystemType& in, const std::vector<std::size_t>& perm);
TransfMap scaled(const Rat& c, const TransfMap& t);
TransfMap sum(const TransfMap& a, const TransfMap& b);

TransfMap seq_compose(const TransfMap& g, const TransfMap& t);  // g after t
TransfMap par_compose(const TransfMap& t, const TransfMap& g);

bool is_deterministic(const TransfMap& t);
bool is_proportional_to_identity(const TransfMap& t);
bool is_vertex_permutation(const TransfMap& t);

// Action of t on the leaves `positions` of a larger pure label; output leaves
// are inserted at `insert_at` among the remaining leaves.
using SparseCombo = std::unordered_map<LabelKey, Rat>;

class Lifted {
public:
    Lifted(const TransfMap& t);
    const TransfMap& map() const { return *t_; }
    // The label has `leaves` leaves; at least one leaf must stay outside `positions` for BCT.
    void apply(LabelKey key, std::size_t leaves, const std::vector<std::size_t>& positions, std::size_t insert_at,
               const Rat& coef, SparseCombo& out) const;

private:
    struct Entry {
        LabelKey vals;       // output values packed from leaf 0
        std::uint32_t rel;   // bit k: sign of output leaf k relative to output leaf 0
        int t;               // sign bit of output leaf 0 relative to the probe side
        Rat c;
    };
    const TransfMap* t_;
    std::vector<std::vector<Entry>> cols_;
};

// Applies t to the given leaves of every basis label of `whole` (probe included for BCT).
SparseCombo apply_to_label(const TransfMap& t, const SystemType& whole_with_probe, LabelKey key,
                           const std::vector<std::size_t>& positions, std::size_t insert_at);

// ---- instruments ------------------------------------------------------------

struct Instrument {
    SystemType in, out;
    std::vector<std::string> outcomes;
    std::vector<TransfMap> events;

    std::size_t size() const { return events.size(); }
};

Instrument make_instrument(std::vector<std::string> outcomes, std::vector<TransfMap> events);
TransfMap full_coarse_graining(const Instrument& i);
// Blocks list outcome positions; every outcome must occur exactly once.
Instrument coarse_grain(const Instrument& i, const std::vector<std::vector<std::size_t>>& partition);
bool is_instrument(const Instrument& i);  // coarse-graining deterministic

struct PartitionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---- admissibility and norms --------------------------------------------------

// Ancilla systems of total dimension <= bound (nondecreasing leaf lists, trivial included).
std::vector<SystemType> ancillas(Theory th, std::size_t bound, int max_leaf_dim = 0);

struct EffectCheck {
    bool admissible = true;
    std::size_t ancillas_checked = 0;
    std::string failure;
};

EffectCheck check_effect(const EffectVec& e, std::size_t ancilla_bound);
bool is_admissible_effect(const EffectVec& e, std::size_t ancilla_bound);

// Base norm by linear programming: min u(a)+u(b) with x = a - b, a,b >= 0.
Rat base_norm(const StateVec& x);
Rat l1_norm(const RatVec& x);
// Maximum over vertices of A(x)E, E up to the bound, of the base norm of (t (x) id_E) v.
Rat op_norm_transf(const TransfMap& t, std::size_t ancilla_bound);
Rat instrument_norm(const Instrument& i, std::size_t ancilla_bound);

// Action of t (x) id_E on an explicit state of A(x)E (E appended after A).
StateVec apply_with_ancilla(const TransfMap& t, const SystemType& env, const StateVec& r);

}  // namespace optkit
