#include "doctest.h"
#include "optkit/circuits.hpp"
#include "optkit/labelcalc.hpp"

#include <algorithm>
#include <map>
#include <numeric>

using namespace optkit;

namespace {

SystemType bct(std::vector<int> d) { return SystemType{Theory::BCT, std::move(d)}; }
SystemType ct(std::vector<int> d) { return SystemType{Theory::CT, std::move(d)}; }

std::map<std::string, RatMat> by_label(const Instrument& i) {
    std::map<std::string, RatMat> m;
    for (std::size_t k = 0; k < i.size(); ++k) m.emplace(i.outcomes[k], i.events[k].ext);
    return m;
}

bool same(const Instrument& a, const Instrument& b) {
    return a.in == b.in && a.out == b.out && a.size() == b.size() && by_label(a) == by_label(b);
}

const char* kBellPair = R"(theory BCT
system Q = BCT [2]
system QQ = BCT [2,2]
prep ij : Q = { a: 1 1 }
prep jj : Q = { b: 1 2 }
obs d : QQ = discriminating
input
slice: prep(ij) on x, prep(jj) on y
slice: obs(d) on x y
)";

}  // namespace

TEST_CASE("evaluation examples") {
    SUBCASE("classical bit prepared and read") {
        Diagram d = parse_diagram(R"(
system C2 = CT [2]
prep one : C2 = { p: 1 1 }
obs e : C2 = { e1: 1 1 | e2: 1 2 }
input
slice: prep(one) on w
slice: obs(e) on w
)");
        Instrument r = eval(d);
        REQUIRE(r.size() == 2);
        CHECK(r.outcomes == std::vector<std::string>{"p.e1", "p.e2"});
        CHECK(r.events[0].ext(0, 0) == 1);
        CHECK(r.events[1].ext(0, 0) == 0);
    }
    SUBCASE("product of two bits splits evenly over the signs") {
        Instrument r = eval(parse_diagram(kBellPair));
        const SystemType qq = bct({2, 2});
        Rat total = 0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            const Rat& p = r.events[k].ext(0, 0);
            total += p;
            const std::string tail = r.outcomes[k].substr(4);
            if (tail == "(1,2;+)" || tail == "(1,2;-)") CHECK(p == Rat(1) / Rat(2));
            else CHECK(p == 0);
        }
        CHECK(total == 1);
        CHECK(r.size() == qq.dimension());
    }
    SUBCASE("swap twice is the identity") {
        Diagram d = parse_diagram(R"(
system Q = BCT [2]
system T = BCT [3]
input a:Q b:T
slice: swap on a b
slice: swap on a b
)");
        Instrument r = eval(d);
        REQUIRE(r.size() == 1);
        CHECK(r.outcomes[0] == "-");
        CHECK(r.events[0] == identity_map(bct({2, 3})));
        Diagram once = d;
        once.slices.pop_back();
        CHECK(eval(once).events[0] == permutation_map(bct({2, 3}), {1, 0}));
    }
}

TEST_CASE("three-bit swaps agree with the direct permutation") {
    Diagram d = parse_diagram(R"(
system Q = BCT [2]
input a:Q b:Q c:Q
slice: swap on a b, id on c
slice: id on b, swap on a c
)");
    // a b c -> b a c -> b c a
    CHECK(induced_permutation(d) == std::vector<std::size_t>{1, 2, 0});
    CHECK(eval(d).events[0] == permutation_map(bct({2, 2, 2}), {1, 2, 0}));
    // a different wiring of the same permutation
    Diagram e = parse_diagram(R"(
system Q = BCT [2]
input a:Q b:Q c:Q
slice: swap on a c
slice: swap on b c
)");
    CHECK(induced_permutation(e) == induced_permutation(d));
    CHECK(eval(e).events[0] == eval(d).events[0]);
}

TEST_CASE("random diagrams evaluate to instruments") {
    std::mt19937 rng(7);
    for (int it = 0; it < 40; ++it) {
        RandomDiagramOptions o;
        o.theory = it % 2 ? Theory::CT : Theory::BCT;
        o.leaf_dims = {1, 2, 3};
        Diagram d = random_diagram(rng, o);
        Instrument r = eval(d);
        bool has_null = false;
        for (const auto& sl : d.slices)
            for (const auto& b : sl) has_null = has_null || b.kind == BoxKind::Null;
        // a null box zeroes every event
        if (has_null) CHECK(full_coarse_graining(r) == zero_map(r.in, r.out));
        else CHECK(is_instrument(r));
    }
    Instrument r = eval(parse_diagram(kBellPair));
    Rat total = 0;
    for (const auto& e : r.events) total += e.ext(0, 0);
    CHECK(total == 1);
}

TEST_CASE("null box") {
    Diagram d = parse_diagram(R"(
system Q = BCT [2]
input a:Q
slice: id on a, null
)");
    Instrument r = eval(d);
    REQUIRE(r.size() == 1);
    CHECK(r.outcomes[0] == "null");
    CHECK(r.events[0] == zero_map(bct({2}), bct({2})));
}

TEST_CASE("parse errors carry positions") {
    auto err = [](const std::string& text) -> CircuitError {
        try {
            parse_diagram(text);
        } catch (const CircuitError& e) {
            return e;
        }
        FAIL("no error");
        return CircuitError("");
    };
    CircuitError e1 = err("system Q = BCT [2]\ninput a:Q\nslice: swap on a b\n");
    CHECK(e1.line == 3);
    CHECK(e1.column == 8);
    // a trit observation on a bit wire
    CircuitError e2 = err("system Q = BCT [2]\nsystem T = BCT [3]\nobs m : T = discriminating\ninput a:Q\nslice: obs(m) on a\n");
    CHECK(e2.line == 5);
    CHECK(std::string(e2.what()).find("dimension") != std::string::npos);
    CircuitError e3 = err("system Q = BCT [2]\ninput a:R\n");
    CHECK(e3.line == 2);
    CHECK(e3.column == 9);
    CHECK(err("system Q = BCT [2]\nprep p : Q = { y: 1/2 1 }\n").line == 2);
    CHECK(err("system Q = BCT [2]\nprep p : Q = { y: 1 3 }\n").line == 2);
    CHECK(err("system Q = BCT [2]\ninput a:Q\nslice: id on a\nslice: id on a, id on a\n").line == 4);
    CHECK(err("system Q = BCT [2]\ninput a:Q\noutput\n").line == 0);
    CHECK(err("sistem Q = BCT [2]\n").column == 1);
}

TEST_CASE("printing round-trips") {
    const std::string text = R"(theory BCT
system Q = BCT [2]
system QQ = BCT [2,2]
prep rho : QQ = { r1: 1/2 (1,2;+) + 1/2 (1,2;-) | r2: 0 }
obs m : Q = { up: 1 1 | down: 1 2 }
obs dd : Q = discriminating
input a:Q b:Q
slice: prep(rho) on c d, swap on a b
slice: obs(m)@5 on a, id on b
slice: obs(dd) on c
output d b
)";
    Diagram d = parse_diagram(text);
    CHECK(print_diagram(d) == text);
    CHECK(parse_diagram(print_diagram(d)) == d);
    std::mt19937 rng(11);
    for (int it = 0; it < 100; ++it) {
        RandomDiagramOptions o;
        o.theory = it % 3 ? Theory::BCT : Theory::CT;
        o.leaf_dims = {1, 2, 3};
        Diagram r = random_diagram(rng, o);
        const std::string t = print_diagram(r);
        Diagram back = parse_diagram(t);
        CHECK(back == r);
        CHECK(print_diagram(back) == t);
    }
}

TEST_CASE("jellyfish form of small diagrams") {
    SUBCASE("identity") {
        Diagram d = parse_diagram("system Q = BCT [2]\ninput a:Q\nslice: id on a\n");
        JellyfishForm j = to_jellyfish(d);
        CHECK(j.a_prime.empty());
        CHECK(j.b_prime.empty());
        CHECK(j.c.empty());
        CHECK(j.e == std::vector<int>{2});
        CHECK(j.s1 == std::vector<std::size_t>{0});
        CHECK(j.s2 == std::vector<std::size_t>{0});
        CHECK(same(eval_jellyfish(j), eval(d)));
    }
    SUBCASE("measure and reprepare") {
        Diagram d = parse_diagram(R"(
system Q = BCT [2]
prep p : Q = { y: 1 1 }
obs m : Q = discriminating
input a:Q
slice: obs(m) on a
slice: prep(p) on b
)");
        JellyfishForm j = to_jellyfish(d);
        CHECK(j.a_prime == std::vector<int>{2});
        CHECK(j.e.empty());
        CHECK(j.c.empty());
        CHECK(j.b_prime == std::vector<int>{2});
        CHECK(j.prep.size() == 1);
        CHECK(j.obs.size() == 2);
        CHECK(same(eval_jellyfish(j), eval(d)));
        CHECK(same(eval(j.diagram), eval(d)));
    }
    SUBCASE("prepared then measured wire lands in C") {
        Diagram d = parse_diagram(R"(
system Q = BCT [2]
system QQ = BCT [2,2]
prep r : QQ = { y: 1/2 (1,2;+) + 1/2 (2,1;-) }
obs m : QQ = discriminating
input a:Q
slice: prep(r) on b c
slice: obs(m) on a b
)");
        JellyfishForm j = to_jellyfish(d);
        CHECK(j.c == std::vector<int>{2});
        CHECK(j.a_prime == std::vector<int>{2});
        CHECK(j.b_prime == std::vector<int>{2});
        CHECK(j.e.empty());
        CHECK(same(eval_jellyfish(j), eval(d)));
        CHECK(same(eval(j.diagram), eval(d)));
    }
}

TEST_CASE("jellyfish soundness on random diagrams") {
    std::mt19937 rng(2024);
    int with_both = 0;
    for (int it = 0; it < 200; ++it) {
        RandomDiagramOptions o;
        o.theory = it % 4 == 3 ? Theory::CT : Theory::BCT;
        Diagram d = random_diagram(rng, o);
        JellyfishForm j = to_jellyfish(d);
        const Instrument ref = eval(d);
        CHECK(same(eval(j.diagram), ref));
        if (!j.prep_ids.empty() && !j.obs_ids.empty()) ++with_both;
        if (probe_extended(ref.in).dimension() * probe_extended(ref.out).dimension() <= 1024)
            CHECK(same(eval_jellyfish(j), ref));
    }
    CHECK(with_both > 20);
}

TEST_CASE("composition re-normalizes") {
    std::mt19937 rng(99);
    int seq_done = 0;
    for (int it = 0; it < 60; ++it) {
        RandomDiagramOptions o;
        o.max_wires = 3;
        o.max_slices = 3;
        o.theory = it % 3 ? Theory::BCT : Theory::CT;
        Diagram a = random_diagram(rng, o), b = random_diagram(rng, o);
        JellyfishForm ja = to_jellyfish(a), jb = to_jellyfish(b);
        // parallel
        Diagram p = compose_par(ja.diagram, jb.diagram);
        JellyfishForm jp = to_jellyfish(p);
        const Instrument ep = eval(p);
        CHECK(same(eval(jp.diagram), ep));
        CHECK(ep.size() == eval(a).size() * eval(b).size());
        // sequential, when the types meet
        if (output_system(a) == input_system(b)) {
            Diagram s = compose_seq(ja.diagram, jb.diagram);
            CHECK(same(eval(to_jellyfish(s).diagram), eval(s)));
            ++seq_done;
        }
    }
    // sequential with matched types, built on purpose
    for (int it = 0; it < 20; ++it) {
        RandomDiagramOptions o;
        o.max_wires = 3;
        o.max_slices = 3;
        Diagram a = random_diagram(rng, o);
        Diagram b = random_diagram(rng, o);
        const SystemType mid = output_system(a);
        b.inputs.clear();
        for (std::size_t k = 0; k < mid.leaves(); ++k) b.inputs.emplace_back("in" + std::to_string(k), "D" + std::to_string(mid.dims[k]));
        b.slices.clear();
        b.has_output = false;
        b.outputs.clear();
        for (std::size_t k = 0; k + 1 < mid.leaves(); k += 2)
            b.slices.push_back({Box{BoxKind::Swap, "", {"in" + std::to_string(k), "in" + std::to_string(k + 1)}, 0}});
        Diagram s = compose_seq(to_jellyfish(a).diagram, b);
        const Instrument es = eval(s);
        CHECK(same(eval(to_jellyfish(s).diagram), es));
        // oracle: compose the two evaluated instruments densely
        const Instrument ea = eval(a);
        const TransfMap tb = eval(b).events[0];
        REQUIRE(ea.size() == es.size());
        for (std::size_t k = 0; k < ea.size(); ++k) CHECK(es.events[k] == seq_compose(tb, ea.events[k]));
        ++seq_done;
    }
    CHECK(seq_done >= 20);
}

TEST_CASE("permutation decomposition") {
    SUBCASE("identity") {
        PermDecomposition d = decompose_permutation({2, 2}, {2, 2}, {0, 1, 2, 3}, 2);
        CHECK(d.a2.empty());
        CHECK(d.b1.empty());
        CHECK(recompose(d) == identity_map(bct({2, 2, 2, 2})));
    }
    SUBCASE("full swap") {
        PermDecomposition d = decompose_permutation({2}, {3, 2}, {1, 2, 0}, 2);
        CHECK(d.a1.empty());
        CHECK(d.b2.empty());
        CHECK(d.a2 == std::vector<int>{2});
        CHECK(d.b1 == std::vector<int>{3, 2});
        CHECK(recompose(d) == permutation_map(bct({2, 3, 2}), {1, 2, 0}));
    }
    SUBCASE("all permutations up to five leaves") {
        std::mt19937 rng(5);
        for (std::size_t n = 1; n <= 5; ++n) {
            std::vector<std::size_t> p(n);
            std::iota(p.begin(), p.end(), 0);
            int count = 0;
            do {
                if (n == 5 && rng() % 6 != 0) continue;
                std::vector<int> dims(n);
                for (auto& x : dims) x = n == 5 ? 2 : int(1 + rng() % 3);
                const std::size_t na = rng() % (n + 1), nc = rng() % (n + 1);
                std::vector<int> a(dims.begin(), dims.begin() + long(na)), b(dims.begin() + long(na), dims.end());
                for (Theory th : {Theory::BCT, Theory::CT}) {
                    if (th == Theory::CT && std::count(dims.begin(), dims.end(), 1)) continue;
                    PermDecomposition d = decompose_permutation(a, b, p, nc, th);
                    CHECK(recompose(d, th) == permutation_map(SystemType{th, dims}, p));
                }
                ++count;
            } while (std::next_permutation(p.begin(), p.end()));
            CHECK(count > 0);
        }
    }
}

TEST_CASE("erase and prepare") {
    const SystemType c = ct({2});
    TransfMap t = erase_and_prepare(c, vertex_state(c, 0));
    CHECK(is_deterministic(t));
    CHECK(t.ext(0, 0) == 1);
    CHECK(t.ext(0, 1) == 1);
    CHECK(t.ext(1, 0) == 0);
    CHECK(t.ext(1, 1) == 0);
    StateVec half{c, RatVec{Rat(1) / Rat(2), Rat(0)}};
    CHECK_THROWS_AS(erase_and_prepare(c, half), std::invalid_argument);

    // nothing erased: just the two permutations
    const SystemType s = bct({2, 3});
    TransfMap id = canonical_channel(s, {1, 0}, 0, StateVec{SystemType{Theory::BCT, {}}, RatVec{Rat(1)}}, {1, 0});
    CHECK(id == identity_map(s));

    // erasing the first bit forgets the sign
    const SystemType qq = bct({2, 2});
    TransfMap k = canonical_channel(qq, {0, 1}, 1, vertex_state(bct({2}), 0), {0, 1});
    CHECK(is_deterministic(k));
    for (std::size_t v = 0; v < qq.dimension(); ++v) {
        const LabelKey key = label_key(qq, v);
        for (std::size_t w = 0; w < qq.dimension(); ++w) {
            const LabelKey other = label_key(qq, w);
            if (key_val(key, 0) == key_val(other, 0) && key_val(key, 1) == key_val(other, 1))
                CHECK(seq_compose(k, state_map(vertex_state(qq, v))) == seq_compose(k, state_map(vertex_state(qq, w))));
        }
    }
}
