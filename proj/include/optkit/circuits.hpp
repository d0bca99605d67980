#pragma once

#include "optkit/optcore.hpp"

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace optkit {

struct CircuitError : std::runtime_error {
    std::size_t line = 0, column = 0;
    CircuitError(const std::string& msg, std::size_t l = 0, std::size_t c = 0)
        : std::runtime_error(l ? "line " + std::to_string(l) + ", column " + std::to_string(c) + ": " + msg : msg),
          line(l),
          column(c) {}
};

// A named preparation or observation test. Vectors are states (prep) or effects in
// the dual basis (obs), one per outcome.
struct TestDef {
    std::string name;
    bool prep = true;
    std::vector<std::string> signature;  // declared system names
    SystemType system;
    bool discriminating = false;
    std::vector<std::string> outcomes;
    std::vector<RatVec> vectors;

    friend bool operator==(const TestDef&, const TestDef&) = default;
};

enum class BoxKind { Prep, Obs, Swap, Id, Null };

struct Box {
    BoxKind kind = BoxKind::Id;
    std::string test;
    std::vector<std::string> wires;
    std::size_t id = 0;

    friend bool operator==(const Box&, const Box&) = default;
};

struct SystemDecl {
    std::string name;
    std::vector<int> dims;

    friend bool operator==(const SystemDecl&, const SystemDecl&) = default;
};

// Circuit over the minimal generators. Every wire carries one elementary system.
// Boxes in a slice act on distinct wires; preparations append their wires at the end,
// observations remove theirs, swaps exchange two positions.
struct Diagram {
    Theory theory = Theory::BCT;
    std::vector<SystemDecl> systems;
    std::vector<TestDef> tests;
    std::vector<std::pair<std::string, std::string>> inputs;  // wire, system
    std::vector<std::vector<Box>> slices;
    bool has_output = false;
    std::vector<std::string> outputs;

    friend bool operator==(const Diagram&, const Diagram&) = default;
};

Diagram parse_diagram(const std::string& text);
std::string print_diagram(const Diagram& d);

SystemType input_system(const Diagram& d);
SystemType output_system(const Diagram& d);

// Exact instrument. Outcomes are the outcome names of the prep, obs and null boxes
// dotted in box-id order ("-" when there are none).
Instrument eval(const Diagram& d);

struct JellyfishForm {
    std::vector<int> a_prime, e, c, b_prime;  // leaf dims
    std::vector<std::size_t> s1;              // input leaves -> A' E
    std::vector<std::size_t> s2;              // E B' -> output leaves
    Instrument prep;                          // I -> C B'
    Instrument obs;                           // C A' -> I
    std::vector<std::size_t> prep_ids, obs_ids;
    Diagram diagram;                          // the same form as a diagram, box ids kept
};

// Slides every preparation to the front and every observation behind them; swaps are
// collected into the two outer permutations and one permutation between the tests.
JellyfishForm to_jellyfish(const Diagram& d);
// Dense evaluation of the structured form, labels merged in box-id order.
Instrument eval_jellyfish(const JellyfishForm& j);

// d2 after d1 (d2's inputs bound to d1's outputs), and side by side.
Diagram compose_seq(const Diagram& d1, const Diagram& d2);
Diagram compose_par(const Diagram& d1, const Diagram& d2);

// Leaf permutation of a diagram made of swaps and identities only (output leaf k = input leaf p[k]).
std::vector<std::size_t> induced_permutation(const Diagram& d);

struct RandomDiagramOptions {
    Theory theory = Theory::BCT;
    std::size_t max_wires = 4;
    std::size_t max_slices = 6;
    std::vector<int> leaf_dims{1, 2};
    std::size_t max_outcomes = 2;
};
Diagram random_diagram(std::mt19937& rng, const RandomDiagramOptions& o = {});

// ---- permutations and canonical channels ----------------------------------------------

// p permutes the leaves of A B (output leaf k = input leaf p[k]); the output is split as
// C D with C the first nc leaves. Recomposition: (S4 (x) S2)(id_A' (x) swap(A'',B') (x) id_B'')(S3 (x) S1).
struct PermDecomposition {
    std::vector<int> a, b;
    std::size_t nc = 0;
    std::vector<std::size_t> s3;  // A -> A' A''
    std::vector<std::size_t> s1;  // B -> B' B''
    std::vector<std::size_t> s4;  // A' B' -> C
    std::vector<std::size_t> s2;  // A'' B'' -> D
    std::vector<int> a1, a2, b1, b2;
};
PermDecomposition decompose_permutation(const std::vector<int>& a, const std::vector<int>& b,
                                        const std::vector<std::size_t>& p, std::size_t nc, Theory th = Theory::BCT);
TransfMap recompose(const PermDecomposition& d, Theory th = Theory::BCT);

// |rho)(u|
TransfMap erase_and_prepare(const SystemType& in, const StateVec& rho);
// S2 ((|rho)(u| on the first `erased` leaves after S1) (x) id_E) S1; rho is prepared in front of E.
TransfMap canonical_channel(const SystemType& in, const std::vector<std::size_t>& s1, std::size_t erased,
                            const StateVec& rho, const std::vector<std::size_t>& s2);

}  // namespace optkit
