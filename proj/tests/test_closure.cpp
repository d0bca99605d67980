#include "doctest.h"
#include "optkit/closure.hpp"

#include <set>

using namespace optkit;

namespace {

SystemType bct(std::vector<int> d) { return SystemType{Theory::BCT, std::move(d)}; }
SystemType ct(std::vector<int> d) { return SystemType{Theory::CT, std::move(d)}; }

Instrument prep(const SystemType& s, std::size_t v) {
    return make_instrument({label_text(s, v)}, {state_map(vertex_state(s, v))});
}

Instrument measure_reprepare(const SystemType& s) {
    Instrument d = discriminating_test(s);
    std::vector<TransfMap> ev;
    for (std::size_t i = 0; i < s.dimension(); ++i) ev.push_back(seq_compose(state_map(vertex_state(s, i)), d.events[i]));
    return make_instrument(d.outcomes, ev);
}

TransfMap function_channel(const SystemType& s, const std::vector<std::size_t>& f) {
    TransfMap t = zero_map(s, s);
    Instrument d = discriminating_test(s);
    for (std::size_t a = 0; a < s.dimension(); ++a) t = sum(t, seq_compose(state_map(vertex_state(s, f[a])), d.events[a]));
    return t;
}

TransfMap total(const Instrument& i) {
    TransfMap t = zero_map(i.in, i.out);
    for (const auto& e : i.events) t = sum(t, e);
    return t;
}

bool nontrivial(const Instrument& i) {
    for (const auto& e : i.events)
        if (!is_proportional_to_identity(e)) return true;
    return false;
}

}  // namespace

TEST_CASE("conditioning a measurement on preparations gives function channels") {
    const SystemType c = ct({2});
    Instrument d = discriminating_test(c);
    for (auto f : std::vector<std::vector<std::size_t>>{{0, 1}, {1, 0}, {0, 0}, {1, 1}}) {
        Instrument r = condition({d, {prep(c, f[0]), prep(c, f[1])}});
        CHECK(r.outcomes[1] == "2." + label_text(c, f[1]));
        CHECK(full_coarse_graining(r) == function_channel(c, f));
        CHECK(is_instrument(r));
    }
}

TEST_CASE("conditioning on equal branches is sequential composition") {
    const SystemType q = bct({2});
    Instrument t = measure_reprepare(q), g = measure_reprepare(q);
    Instrument r = condition({t, {g, g}});
    REQUIRE(r.size() == 4);
    CHECK(r.outcomes[1] == "1.2");
    for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t y = 0; y < 2; ++y) CHECK(r.events[2 * x + y] == seq_compose(g.events[y], t.events[x]));
}

TEST_CASE("conditioning pads short branches with null events") {
    const SystemType q = bct({2});
    Instrument t = measure_reprepare(q);
    Instrument id1 = make_instrument({"id"}, {identity_map(q)});
    Instrument r = condition({t, {measure_reprepare(q), id1}});
    CHECK(r.outcomes == std::vector<std::string>{"1.1", "1.2", "2.id", "2.null1"});
    CHECK(r.events[3] == zero_map(q, q));
    CHECK(is_instrument(r));
    CHECK_THROWS_AS(condition({t, {id1}}), std::invalid_argument);
    CHECK_THROWS_AS(condition({t, {id1, make_instrument({"x"}, {identity_map(bct({3}))})}}), std::invalid_argument);
}

TEST_CASE("measure and re-prepare on two bits forgets correlations") {
    const SystemType s = bct({2, 2});
    Instrument m = measure_reprepare(s);
    TransfMap f = full_coarse_graining(m);
    CHECK(is_deterministic(f));
    CHECK(f.local() == RatMat::identity(8));
    CHECK_FALSE(f == identity_map(s));
}

TEST_CASE("coarse-grainings follow the Bell numbers") {
    const SystemType q = bct({2});
    Instrument two = make_instrument({"a", "b"}, {scaled(Rat(1) / 2, identity_map(q)), scaled(Rat(1) / 2, identity_map(q))});
    CHECK(all_coarse_grainings(two).size() == 2);
    Instrument t = measure_reprepare(bct({2, 1}));
    REQUIRE(t.size() == 4);
    auto cg4 = all_coarse_grainings(t);
    CHECK(cg4.size() == 15);
    Instrument three = coarse_grain(t, {{0}, {1}, {2, 3}});
    CHECK(all_coarse_grainings(three).size() == 5);
    for (const auto& c : cg4) CHECK(is_instrument(c));
    // the branch-summed channel of a conditional instrument is among its coarse-grainings
    Instrument r = condition({discriminating_test(q), {prep(q, 1), prep(q, 0)}});
    bool found = false;
    for (const auto& c : all_coarse_grainings(r)) found = found || (c.size() == 1 && c.events[0] == full_coarse_graining(r));
    CHECK(found);
    CHECK_THROWS_AS(all_coarse_grainings(t, 3), std::invalid_argument);
}

TEST_CASE("depth closure of a classical bit") {
    const SystemType c = ct({2});
    std::vector<Instrument> gens{discriminating_test(c), prep(c, 0), prep(c, 1), make_instrument({"id"}, {identity_map(c)})};
    Family f0 = close_depth(gens, c, c, 0, 1000, true);
    Family f1 = close_depth(gens, c, c, 1, 1000, true);
    CHECK_FALSE(f1.truncated);
    std::set<std::string> chans0, chans1;
    auto channels = [](const Family& f, std::set<std::string>& out) {
        for (const auto& i : f.instruments)
            if (i.size() == 1) {
                std::string s;
                for (const auto& x : i.events[0].ext.data()) s += x.get_str() + ",";
                out.insert(s);
            }
    };
    channels(f0, chans0);
    channels(f1, chans1);
    for (const auto& s : chans0) CHECK(chans1.count(s) == 1);
    for (auto img : std::vector<std::vector<std::size_t>>{{0, 1}, {1, 0}, {0, 0}, {1, 1}}) {
        bool hit = false;
        for (const auto& i : f1.instruments) hit = hit || (i.size() == 1 && i.events[0] == function_channel(c, img));
        CHECK(hit);
    }
    for (const auto& i : f1.instruments) CHECK(is_instrument(i));
    Family tiny = close_depth(gens, c, c, 1, 3);
    CHECK(tiny.truncated);
    CHECK(tiny.report.find("truncated") != std::string::npos);
}

TEST_CASE("conditioning a conditional chain flattens") {
    const SystemType q = bct({2});
    Instrument t1 = measure_reprepare(q), t2 = measure_reprepare(q);
    Instrument g = make_instrument({"id"}, {identity_map(q)});
    Instrument h = condition({t2, {g, t2}});
    Instrument nested = condition({t1, {h, h}});
    Instrument direct = condition({condition({t1, {t2, t2}}), {g, t2, g, t2}});
    // same events; the flattened form pads the identity branches
    std::map<std::string, TransfMap> a, b;
    for (std::size_t k = 0; k < nested.size(); ++k) a.emplace(nested.outcomes[k], nested.events[k]);
    for (std::size_t k = 0; k < direct.size(); ++k) b.emplace(direct.outcomes[k], direct.events[k]);
    for (const auto& [lab, e] : b) {
        std::string l = lab;
        if (l.find("null") != std::string::npos) {
            CHECK(e == zero_map(q, q));
            continue;
        }
        REQUIRE(a.count(l) == 1);
        CHECK(a.at(l) == e);
    }
    CHECK(full_coarse_graining(nested) == full_coarse_graining(direct));
}

TEST_CASE("jellyfish rounds") {
    const SystemType q = bct({2});
    Instrument j = jellyfish_round(q, vertex_state(bct({2}), 1), {0});
    CHECK(j.out == bct({2}));
    CHECK(j.size() == 2);
    CHECK(full_coarse_graining(j) == function_channel(q, {1, 1}));
    Instrument keep = jellyfish_round(q, StateVec{bct({}), RatVec{Rat(1)}}, {});
    CHECK(keep.events.at(0) == identity_map(q));
}

TEST_CASE("identity decompositions within the budget") {
    SearchBudget b;
    for (const auto& s : {bct({2}), bct({2, 2})}) {
        SearchResult r = search_chains(s, SearchGoal::IdentityDecomposition, b);
        CHECK_FALSE(r.found);
        CHECK_FALSE(r.truncated);
        CHECK(r.stats.rejected > 0);
    }

    SearchBudget one;
    one.depth = 1;
    for (const auto& s : {ct({2}), ct({2, 3})}) {
        SearchResult r = search_chains(s, SearchGoal::IdentityDecomposition, one);
        REQUIRE(r.found);
        CHECK(total(r.witness) == identity_map(s));
        CHECK(nontrivial(r.witness));
        Instrument d = recompose_dense(s, r.witness_plan);
        CHECK(d.outcomes == r.witness.outcomes);
        CHECK(d.events == r.witness.events);
    }
}

TEST_CASE("a larger ancilla bound admits a nontrivial decomposition of a bilocal bit") {
    SearchBudget b;
    b.ancilla_bound = 16;
    const SystemType q = bct({2});
    SearchResult r = search_chains(q, SearchGoal::IdentityDecomposition, b);
    REQUIRE(r.found);
    CHECK(total(r.witness) == identity_map(q));
    CHECK(nontrivial(r.witness));
    Instrument d = recompose_dense(q, r.witness_plan);
    CHECK(d.events == r.witness.events);
    // every event keeps the value and its sign relation: a quarter of the value projector
    for (const auto& e : r.witness.events) {
        TransfMap p = scaled(Rat(4), e);
        CHECK(seq_compose(p, p) == p);
        CHECK(!(p.local() == RatMat::identity(2)));
    }
    SearchBudget shallow = b;
    shallow.depth = 1;
    CHECK_FALSE(search_chains(q, SearchGoal::IdentityDecomposition, shallow).found);
}

TEST_CASE("the sign bit of two trivial leaves is measured without disturbance") {
    SearchBudget odd;
    odd.catalogue = Catalogue::OddOnly;
    const SystemType s = bct({1, 1});
    SearchResult r = search_chains(s, SearchGoal::IdentityDecomposition, odd);
    REQUIRE(r.found);
    CHECK(total(r.witness) == identity_map(s));
    CHECK(nontrivial(r.witness));
    CHECK(recompose_dense(s, r.witness_plan).events == r.witness.events);
    Instrument d = discriminating_test(s);
    for (const auto& e : r.witness.events) {
        // each event is a quarter of a sign projector or of the identity
        TransfMap p = scaled(Rat(4), e);
        CHECK(seq_compose(p, p) == p);
        bool proj = is_proportional_to_identity(p);
        for (std::size_t v = 0; v < 2; ++v) {
            bool keeps_v = true;
            for (std::size_t w = 0; w < 2; ++w)
                keeps_v = keeps_v && seq_compose(d.events[w], p) == (w == v ? d.events[v] : zero_map(s, bct({})));
            proj = proj || keeps_v;
        }
        CHECK(proj);
    }
    SearchBudget one = odd;
    one.depth = 1;
    CHECK_FALSE(search_chains(s, SearchGoal::IdentityDecomposition, one).found);
}

TEST_CASE("broadcasting search") {
    SearchBudget b;
    SearchResult r = search_chains(bct({2}), SearchGoal::Broadcasting, b);
    CHECK_FALSE(r.found);
    CHECK_FALSE(r.truncated);
    SearchBudget one;
    one.depth = 1;
    const SystemType c = ct({2});
    SearchResult rc = search_chains(c, SearchGoal::Broadcasting, one);
    REQUIRE(rc.found);
    // the classical copy map
    TransfMap copy = zero_map(c, ct({2, 2}));
    Instrument d = discriminating_test(c);
    for (std::size_t i = 0; i < 2; ++i)
        copy = sum(copy, seq_compose(state_map(vertex_state(ct({2, 2}), 3 * i)), d.events[i]));
    CHECK(total(rc.witness) == copy);
}

TEST_CASE("reversible channels found by search are wire permutations") {
    SearchBudget b;
    SearchResult r = search_chains(bct({2, 2}), SearchGoal::Reversible, b);
    CHECK(r.found);
    CHECK(r.permutations.size() == 2);
    SearchResult r1 = search_chains(bct({2}), SearchGoal::Reversible, b);
    CHECK(r1.permutations.size() == 1);
    SearchBudget one;
    one.depth = 1;
    SearchResult rc = search_chains(ct({2}), SearchGoal::Reversible, one);
    CHECK(rc.permutations.size() == 2);
}

TEST_CASE("explicit chains") {
    const SystemType c = ct({2});
    // measure, then re-prepare the outcome
    auto plan = [&](const std::vector<std::string>& path, const SystemType&) -> std::optional<ChainRound> {
        if (path.empty()) return ChainRound{ct({}), 0, {0}};
        if (path.size() == 1) return ChainRound{c, path[0] == "1" ? 0u : 1u, {}};
        return std::nullopt;
    };
    auto order = [](const std::vector<std::string>&, const SystemType&) { return std::vector<std::size_t>{0}; };
    ExplicitChain e = run_chain(c, plan, order);
    REQUIRE(e.events.size() == 2);
    CHECK(e.outcomes[0] == "1.-");
    TransfMap t = sum(e.events[0], e.events[1]);
    CHECK(t == identity_map(c));
}
