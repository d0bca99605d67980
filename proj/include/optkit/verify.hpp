#pragma once

#include "optkit/closure.hpp"
#include "optkit/theories.hpp"

#include <json.hpp>

#include <random>
#include <string>
#include <vector>

namespace optkit {

using Json = nlohmann::json;

// Verdicts: "witness", "exhausted", "feasible", "infeasible", "holds", "fails",
// "strict", "counterexample", "rejected", "not-applicable".
// Nonexistence verdicts are relative to the budget recorded in `provenance`.
struct Certificate {
    std::string claim;
    std::string verdict;
    Json witness = Json::object();
    Json provenance = Json::object();
    std::string note;
};

Json to_json(const Certificate& c);
Certificate certificate_from_json(const Json& j);
// Replays the stored witness by exact substitution (LP points, Farkas vectors,
// maps against their defining equations); exhaustion reports rerun their search.
bool reverify(const Certificate& c);

Json rat_json(const Rat& r);
Rat rat_from(const Json& j);
Json mat_json(const RatMat& m);
RatMat mat_from(const Json& j);
Json system_json(const SystemType& s);
SystemType system_from(const Json& j);
Json map_json(const TransfMap& t);
TransfMap map_from(const Json& j);
Json instrument_json(const Instrument& i);
Instrument instrument_from(const Json& j);
Json lp_json(const LPProblem& p);
LPProblem lp_from(const Json& j);

// ---- broadcasting ---------------------------------------------------------------------

// sum_i |i)|i) (e_i| over the vertices of a, with the parallel product of the two copies.
TransfMap copy_map(const SystemType& a);

struct BroadcastCheck {
    bool local = false;  // marginals equal id on local states only
    bool full = false;   // marginals equal id including correlations with ancillas up to the bound
};
BroadcastCheck broadcast_conditions(const TransfMap& b, std::size_t ancilla_bound);

Certificate check_broadcasting_cone(const SystemType& a, std::size_t ancilla_bound);
Certificate check_broadcasting_family(const TheoryHandle& h, const SystemType& a);
// The label-copying map: passes the local conditions, fails the full ones on BCT.
Certificate check_local_broadcast(const SystemType& a, std::size_t ancilla_bound);

// ---- compatibility --------------------------------------------------------------------

// Observation test with outcome weights drawn per vertex (a randomised coarse-graining
// of the discriminating test).
Instrument random_observation_test(std::mt19937& rng, const SystemType& s, std::size_t outcomes);
Certificate check_compatibility(const Instrument& a, const Instrument& b, std::size_t ancilla_bound);

// ---- exclusion ------------------------------------------------------------------------

// Does t exclude target? LP over post-processing instruments P_{x,y} in the cone with
// sum_x P_{x,y} t_x = target_y. Feasible: does not exclude (witness). Infeasible: Farkas.
Certificate check_excludes(const Instrument& t, const Instrument& target);

// ---- identity decompositions ----------------------------------------------------------

enum class Decomposition { None, Trivial, Nontrivial };
Decomposition classify_identity_decomposition(const Instrument& i);
Certificate identity_decompositions(const std::vector<Instrument>& family);
Certificate find_identity_decompositions(const TheoryHandle& h, const SystemType& a);

// ---- reversibles ----------------------------------------------------------------------

Certificate check_reversibles_are_permutations(const TheoryHandle& h, const SystemType& a);

// ---- purification ---------------------------------------------------------------------

// Vertices v1, v2 of A B with equal A marginals and no permutation of B's leaves mapping one to the other.
Certificate purification_counterexample(const SystemType& a, const SystemType& b, std::size_t v1, std::size_t v2);
// Default pair: (1,1;+) and (1,1;-) for BCT.
Certificate purification_counterexample(const SystemType& a, const SystemType& b);

// ---- no programming -------------------------------------------------------------------

Certificate no_universal_simulator_probe(const TheoryHandle& h, const SystemType& a, std::size_t program_bound);

// ---- inclusions -----------------------------------------------------------------------

// A channel of the conditional family at h.depth that the depth-0 family lacks.
Certificate inclusion_minimal_in_conditional(const TheoryHandle& h, const SystemType& a);
// Every function channel of a classical system is in the conditional family.
Certificate function_channels_reached(const TheoryHandle& h, const SystemType& a);
// A deterministic cone map that no chain at the budget realises (probe sign flip).
Certificate inclusion_family_in_cone(const TheoryHandle& h, const SystemType& a);

// ---- norm laws ------------------------------------------------------------------------

Certificate check_norm_laws(std::uint32_t seed, std::size_t count, std::size_t ancilla_bound);

}  // namespace optkit
