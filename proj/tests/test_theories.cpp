#include "doctest.h"
#include "optkit/closure.hpp"
#include "optkit/theories.hpp"

#include <set>

using namespace optkit;

namespace {

SystemType bct(std::vector<int> d) { return SystemType{Theory::BCT, std::move(d)}; }
SystemType ct(std::vector<int> d) { return SystemType{Theory::CT, std::move(d)}; }

FormalCombo as_combo(const StateVec& r) {
    FormalCombo f;
    for (std::size_t i = 0; i < r.x.size(); ++i)
        if (sgn(r.x[i]) != 0) f.add(key_to_label(r.system, label_key(r.system, i)), r.x[i]);
    return f;
}

// measure-and-prepare channel sending vertex a to vertex f[a]
TransfMap function_channel(const SystemType& s, const std::vector<std::size_t>& f) {
    TransfMap t = zero_map(s, s);
    for (std::size_t a = 0; a < s.dimension(); ++a) {
        EffectVec e{s, RatVec(s.dimension())};
        e.x[a] = 1;
        t = sum(t, seq_compose(state_map(vertex_state(s, f[a])), effect_map(e)));
    }
    return t;
}

bool contains(const std::vector<TransfMap>& v, const TransfMap& t) {
    return std::find(v.begin(), v.end(), t) != v.end();
}

}  // namespace

TEST_CASE("catalogues") {
    CHECK(in_catalogue(2, Catalogue::AllDims));
    CHECK_FALSE(in_catalogue(2, Catalogue::OddOnly));
    CHECK_THROWS_AS(make_system(Theory::BCT, {2}, Catalogue::OddOnly), std::invalid_argument);
    CHECK(system_of_dimension(Theory::BCT, 8, Catalogue::AllDims)->dims == std::vector<int>{8});
    CHECK(system_of_dimension(Theory::BCT, 8, Catalogue::OddOnly)->dims == std::vector<int>{1, 1, 1, 1});
    // a bit in the odd catalogue is two trivial leaves
    CHECK(system_of_dimension(Theory::BCT, 2, Catalogue::OddOnly)->dims == std::vector<int>{1, 1});
    CHECK(system_of_dimension(Theory::CT, 6, Catalogue::AllDims)->dims == std::vector<int>{6});
    CHECK(parse_policy(to_string(Policy::MinimalSC)) == Policy::MinimalSC);
    CHECK(parse_catalogue("odd") == Catalogue::OddOnly);
    CHECK_THROWS(parse_policy("strong"));
}

TEST_CASE("pure states and the discriminating test") {
    CHECK(pure_states(bct({2, 2})).size() == 8);
    CHECK(pure_states(ct({2, 2})).size() == 4);
    auto labels = pure_states(bct({2, 3}));
    CHECK(std::set<PureLabel>(labels.begin(), labels.end()).size() == 12);
    for (const auto& s : {bct({2, 2}), ct({3}), bct({1, 1, 2})}) {
        Instrument d = discriminating_test(s);
        CHECK(d.size() == s.dimension());
        CHECK(is_instrument(d));
        CHECK(full_coarse_graining(d) == effect_map(deterministic_effect(s)));
        for (std::size_t i = 0; i < s.dimension(); ++i)
            for (std::size_t j = 0; j < s.dimension(); ++j)
                CHECK(seq_compose(d.events[i], state_map(vertex_state(s, j))).ext(0, 0) == Rat(i == j ? 1 : 0));
    }
}

TEST_CASE("marginals of composite vertices are sign independent") {
    solve_sign_rule(left_assoc({2, 3}));
    for (const auto& s : {bct({2, 2}), bct({2, 3})}) {
        for (std::size_t v = 0; v < s.dimension(); ++v) {
            StateVec r = vertex_state(s, v);
            LabelKey k = label_key(s, v);
            StateVec m0 = marginal(r, {0}), m1 = marginal(r, {1});
            CHECK(m0.x == vertex_state(bct({s.dims[0]}), std::size_t(key_val(k, 0))).x);
            CHECK(m1.x == vertex_state(bct({s.dims[1]}), std::size_t(key_val(k, 1))).x);
            // oracle: delete the other leaf with every dual effect and add up
            FormalCombo f = as_combo(r), d0, d1;
            for (int x = 0; x < s.dims[1]; ++x) d0 += delete_leaf(f, 1, x);
            for (int x = 0; x < s.dims[0]; ++x) d1 += delete_leaf(f, 0, x);
            CHECK(as_combo(m0) == d0);
            CHECK(as_combo(m1) == d1);
        }
    }
    // keep order is respected
    StateVec r = vertex_state(bct({2, 3, 2}), 5);
    CHECK(marginal(r, {2, 0}).system == bct({2, 2}));
}

TEST_CASE("entangled spanning sets") {
    SpanReport a = entangled_spanning(bct({2, 2}));
    CHECK(a.spanning);
    CHECK(a.entangled == 8);
    CHECK(a.rank == 8);
    SpanReport b = entangled_spanning(bct({2, 3}));
    CHECK(b.spanning);
    CHECK(b.rank == 12);
    SpanReport c = entangled_spanning(ct({2, 2}));
    CHECK_FALSE(c.spanning);
    CHECK(c.entangled == 0);
    CHECK_FALSE(entangled_spanning(bct({2})).spanning);
    // product of single-leaf vertices is an equal mixture of the two signs
    StateVec p = product_state(vertex_state(bct({2}), 0), vertex_state(bct({2}), 1));
    CHECK(std::count_if(p.x.begin(), p.x.end(), [](const Rat& x) { return x == Rat(1) / Rat(2); }) == 2);
}

TEST_CASE("grid states") {
    for (int g : {1, 3}) {
        auto v = grid_states(bct({2, 2}), g);
        CHECK(v.size() == 8 + 28 * ((std::size_t(1) << g) - 1));
        for (const auto& r : v) CHECK(is_deterministic_state(r));
    }
}

TEST_CASE("minimal channel family") {
    TheoryHandle h;
    h.policy = Policy::Minimal;
    h.grid = 3;
    const SystemType q = bct({2});
    ChannelFamily f = channel_family(h, q, q);
    // identity plus erase-and-prepare of each grid state
    CHECK(f.channels.size() == 1 + 2 + 7);
    CHECK(contains(f.channels, identity_map(q)));
    for (const auto& t : f.channels) {
        CHECK(is_deterministic(t));
        CHECK(is_minimal_channel(t));
    }
    // swaps on two bits are minimal channels
    TheoryHandle h2 = h;
    h2.grid = 1;
    ChannelFamily f2 = channel_family(h2, bct({2, 2}), bct({2, 2}));
    CHECK(contains(f2.channels, permutation_map(bct({2, 2}), {1, 0})));
    h.policy = Policy::Full;
    CHECK_THROWS_AS(channel_family(h, q, q), PolicyError);
    CHECK_FALSE(is_minimal_channel(function_channel(q, {1, 0})));
}

TEST_CASE("wire permutations") {
    const SystemType s = bct({2, 3, 2});
    TransfMap t = permutation_map(s, {2, 1, 0});
    auto p = as_wire_permutation(t);
    REQUIRE(p);
    CHECK(*p == std::vector<std::size_t>{2, 1, 0});
    // classical NOT permutes vertices but no wires
    TransfMap n = function_channel(ct({2}), {1, 0});
    CHECK(is_vertex_permutation(n));
    CHECK_FALSE(as_wire_permutation(n));
}

TEST_CASE("strongly causal channel family") {
    TheoryHandle h;
    h.policy = Policy::MinimalSC;
    h.grid = 1;
    h.depth = 1;
    h.theory = Theory::CT;
    const SystemType c = ct({2});
    ChannelFamily f = channel_family(h, c, c);
    for (auto img : std::vector<std::vector<std::size_t>>{{0, 1}, {1, 0}, {0, 0}, {1, 1}})
        CHECK(contains(f.channels, function_channel(c, img)));
    for (const auto& t : f.channels) CHECK(is_deterministic(t));

    h.theory = Theory::BCT;
    h.ancilla_bound = 4;
    const SystemType q = bct({2});
    ChannelFamily g = channel_family(h, q, q);
    TransfMap bnot = function_channel(q, {1, 0});
    CHECK(contains(g.channels, bnot));
    // depth 0 holds only minimal channels, and no conditional ones
    h.depth = 0;
    ChannelFamily g0 = channel_family(h, q, q);
    CHECK_FALSE(contains(g0.channels, bnot));
    for (const auto& t : g0.channels) CHECK(is_minimal_channel(t));
}
