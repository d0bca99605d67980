#include "doctest.h"
#include "optkit/optcore.hpp"

#include <random>

using namespace optkit;

namespace {

SystemType bct(std::vector<int> d) { return SystemType{Theory::BCT, std::move(d)}; }
SystemType ct(std::vector<int> d) { return SystemType{Theory::CT, std::move(d)}; }

// State vector as a formal combination of left-associated labels.
FormalCombo as_combo(const StateVec& r) {
    FormalCombo f;
    for (std::size_t i = 0; i < r.x.size(); ++i)
        if (sgn(r.x[i]) != 0) f.add(key_to_label(r.system, label_key(r.system, i)), r.x[i]);
    return f;
}

StateVec from_combo(const SystemType& s, const FormalCombo& f) {
    StateVec r{s, RatVec(s.dimension())};
    for (const auto& [c, l] : f.terms()) r.x[label_index(s, label_to_key(s, canonicalize(l)))] += c;
    return r;
}

StateVec random_state(const SystemType& s, std::mt19937& rng) {
    StateVec r{s, RatVec(s.dimension())};
    Rat t;
    for (auto& x : r.x) {
        x = Rat(int(rng() % 4));
        t += x;
    }
    if (t == 0) r.x[0] = t = 1;
    for (auto& x : r.x) x /= t;
    return r;
}

TransfMap random_channel(const SystemType& in, const SystemType& out, std::mt19937& rng) {
    // convex mixture of "measure a vertex then prepare" maps and permutations
    TransfMap t = zero_map(in, out);
    Rat w(1, 2);
    for (std::size_t j = 0; j < in.dimension(); ++j) {
        EffectVec e{in, RatVec(in.dimension())};
        e.x[j] = 1;
        t = sum(t, scaled(w, seq_compose(state_map(random_state(out, rng)), effect_map(e))));
    }
    if (in == out && in.leaves() > 1) {
        std::vector<std::size_t> p(in.leaves());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = (k + 1) % p.size();
        bool same = true;
        for (std::size_t k = 0; k < p.size(); ++k) same = same && in.dims[k] == in.dims[p[k]];
        if (same) return sum(t, scaled(w, permutation_map(in, p)));
    }
    return sum(t, scaled(w, seq_compose(state_map(random_state(out, rng)), effect_map(deterministic_effect(in)))));
}

}  // namespace

TEST_CASE("dimension rule") {
    CHECK(bct({}).dimension() == 1);
    CHECK(bct({2}).dimension() == 2);
    CHECK(bct({2, 2}).dimension() == 8);
    CHECK(bct({2, 3}).dimension() == 12);
    CHECK(bct({1, 1, 1}).dimension() == 4);
    CHECK(ct({2, 3}).dimension() == 6);
    std::mt19937 rng(11);
    for (int i = 0; i < 20; ++i) {
        SystemType a = bct({}), b = bct({}), c = bct({});
        for (auto* s : {&a, &b, &c})
            for (int k = int(rng() % 3); k > 0; --k) s->dims.push_back(1 + int(rng() % 4));
        auto ab = compose_systems(a, b);
        auto expect = a.trivial() ? b.dimension() : b.trivial() ? a.dimension() : 2 * a.dimension() * b.dimension();
        CHECK(ab.dimension() == expect);
        CHECK(compose_systems(ab, c) == compose_systems(a, compose_systems(b, c)));
    }
    CHECK_THROWS_AS(compose_systems(bct({2}), ct({2})), TheoryMismatch);
}

TEST_CASE("label keys round-trip") {
    for (const auto& s : {bct({2, 3}), bct({2, 1, 2}), ct({3, 2}), bct({3})}) {
        for (std::size_t i = 0; i < s.dimension(); ++i) {
            LabelKey k = label_key(s, i);
            CHECK(label_index(s, k) == i);
            CHECK(label_to_key(s, key_to_label(s, k)) == k);
        }
    }
    CHECK(label_text(bct({2, 2}), 1) == "(1,1;-)");
    CHECK(label_text(bct({}), 0) == "I");
    CHECK(label_text(ct({2, 2}), 3) == "[2,2]");
}

TEST_CASE("product states agree with the label calculus") {
    std::mt19937 rng(3);
    for (auto [a, b] : {std::pair{bct({2}), bct({2})}, {bct({2, 2}), bct({3})}, {bct({2}), bct({1, 2})}}) {
        StateVec ra = random_state(a, rng), rb = random_state(b, rng);
        StateVec p = product_state(ra, rb);
        CHECK(is_deterministic_state(p));
        CHECK(p.x == from_combo(p.system, expand_product(as_combo(ra), as_combo(rb))).x);
    }
}

TEST_CASE("deleting a leaf with a dual effect agrees with the label calculus") {
    solve_sign_rule(left_assoc({2, 2, 2}));
    const SystemType a = bct({2}), env = bct({2, 2});
    std::mt19937 rng(5);
    for (int v = 0; v < 2; ++v) {
        EffectVec e{a, RatVec(2)};
        e.x[v] = 1;
        StateVec r = random_state(compose_systems(a, env), rng);
        StateVec got = apply_with_ancilla(effect_map(e), env, r);
        CHECK(got.x == from_combo(env, delete_leaf(as_combo(r), 0, v)).x);
    }
}

TEST_CASE("swap maps follow the swap display") {
    const SystemType ab = bct({2, 2});
    TransfMap sw = permutation_map(ab, {1, 0});
    CHECK(is_vertex_permutation(sw));
    CHECK(seq_compose(sw, sw) == identity_map(ab));
    StateVec r = vertex_state(ab, label_index(ab, label_to_key(ab, with_dims(parse_label("(1,2;-)"), {2, 2}))));
    StateVec o{ab, sw.local() * r.x};
    CHECK(to_text(as_combo(o)) == "1 (2,1;-)");
    // with an environment: ((1,2;-),3;+) -> ((2,1;-),3;-)
    const SystemType abc = bct({2, 2, 3});
    TransfMap big = par_compose(sw, identity_map(bct({3})));
    auto l = with_dims(parse_label("((1,2;-),3;+)"), {2, 2, 3});
    StateVec v = vertex_state(abc, label_index(abc, label_to_key(abc, l)));
    CHECK(to_text(as_combo(StateVec{abc, big.local() * v.x})) == "1 ((2,1;-),3;-)");
    // every adjacent swap on three leaves matches apply_swap through rebracketing
    for (std::size_t q = 0; q < 2; ++q) {
        std::vector<std::size_t> p{0, 1, 2};
        std::swap(p[q], p[q + 1]);
        TransfMap t = permutation_map(bct({2, 2, 2}), p);
        CompTree shape = q == 0 ? left_assoc({2, 2, 2}) : join(leaf_tree(2), join(leaf_tree(2), leaf_tree(2)));
        std::string node = q == 0 ? "L" : "R";
        for (std::size_t i = 0; i < 16; ++i) {
            auto s = bct({2, 2, 2});
            PureLabel in = key_to_label(s, label_key(s, i));
            PureLabel expect = canonicalize(apply_swap(rebracket(in, shape), node));
            StateVec out{s, t.local() * vertex_state(s, i).x};
            CHECK(as_combo(out) == FormalCombo(expect));
        }
    }
}

TEST_CASE("sequential and parallel composition laws") {
    std::mt19937 rng(17);
    const SystemType a = bct({2}), b = bct({2}), c = bct({3}), d = bct({1});
    for (int trial = 0; trial < 3; ++trial) {
        TransfMap t1 = random_channel(a, b, rng), g1 = random_channel(b, a, rng);
        TransfMap t2 = random_channel(c, d, rng), g2 = random_channel(d, c, rng);
        CHECK(is_deterministic(t1));
        CHECK(par_compose(seq_compose(g1, t1), seq_compose(g2, t2)) ==
              seq_compose(par_compose(g1, g2), par_compose(t1, t2)));
        TransfMap x = random_channel(a, a, rng);
        CHECK(par_compose(par_compose(t1, t2), x) == par_compose(t1, par_compose(t2, x)));
        CHECK(par_compose(identity_map(a), identity_map(c)) == identity_map(compose_systems(a, c)));
        CHECK(is_deterministic(par_compose(t1, t2)));
    }
    // unit system is neutral
    TransfMap t = random_channel(a, c, rng);
    CHECK(par_compose(t, identity_map(bct({}))) == t);
    CHECK(par_compose(identity_map(bct({})), t) == t);
}

TEST_CASE("states and effects compose to probabilities") {
    std::mt19937 rng(23);
    const SystemType s = bct({2, 3});
    StateVec r = random_state(s, rng);
    TransfMap p = seq_compose(effect_map(deterministic_effect(s)), state_map(r));
    CHECK(p.ext.rows() == 1);
    CHECK(p.ext(0, 0) == 1);
    // local marginals of products
    for (auto [x, y] : {std::pair{bct({2}), bct({2})}, {bct({2}), bct({3})}}) {
        StateVec rx = random_state(x, rng), ry = random_state(y, rng);
        StateVec joint = product_state(rx, ry);
        TransfMap trash = par_compose(effect_map(deterministic_effect(x)), identity_map(y));
        CHECK((trash.local() * joint.x) == ry.x);
        TransfMap trash2 = par_compose(identity_map(x), effect_map(deterministic_effect(y)));
        CHECK((trash2.local() * joint.x) == rx.x);
    }
}

TEST_CASE("coarse-graining") {
    const SystemType s = bct({2});
    std::vector<TransfMap> ev;
    for (int v = 0; v < 2; ++v) {
        EffectVec e{s, RatVec(2)};
        e.x[v] = 1;
        ev.push_back(seq_compose(state_map(vertex_state(s, v)), effect_map(e)));
    }
    Instrument m = make_instrument({"1", "2"}, ev);
    CHECK(is_instrument(m));
    CHECK(full_coarse_graining(m).local() == RatMat::identity(2));
    Instrument cg = coarse_grain(m, {{1, 0}});
    CHECK(cg.outcomes == std::vector<std::string>{"2+1"});
    CHECK(is_instrument(cg));
    CHECK_THROWS_AS(coarse_grain(m, {{0}}), PartitionError);
    CHECK_THROWS_AS(coarse_grain(m, {{0, 0}, {1}}), PartitionError);
    CHECK_THROWS_AS(coarse_grain(m, {{0}, {}, {1}}), PartitionError);
}

TEST_CASE("effect admissibility") {
    const SystemType s = bct({2, 2});
    CHECK(is_admissible_effect(deterministic_effect(s), 4));
    EffectVec twice{bct({2}), RatVec{Rat(2), Rat(0)}};
    CHECK_FALSE(is_admissible_effect(twice, 4));
    EffectVec dual{s, RatVec(8)};
    dual.x[label_index(s, label_to_key(s, with_dims(parse_label("(1,2;-)"), {2, 2})))] = 1;
    auto chk = check_effect(dual, 4);
    CHECK(chk.admissible);
    CHECK(chk.ancillas_checked > 1);
    EffectVec neg{bct({2}), RatVec{Rat(1), Rat(-1, 2)}};
    CHECK_FALSE(check_effect(neg, 2).failure.empty());
}

TEST_CASE("norms") {
    std::mt19937 rng(29);
    for (const auto& s : {bct({2}), bct({2, 2}), ct({3})}) {
        StateVec x{s, RatVec(s.dimension())};
        for (auto& v : x.x) v = Rat(int(rng() % 7) - 3) / Rat(int(1 + rng() % 3));
        CHECK(base_norm(x) == l1_norm(x.x));
    }
    const SystemType q = bct({2});
    CHECK(op_norm_transf(identity_map(q), 4) == 1);
    Instrument half = make_instrument({"a", "b"}, {scaled(Rat(1, 2), identity_map(q)), scaled(Rat(1, 2), identity_map(q))});
    CHECK(instrument_norm(half, 4) == 1);
    TransfMap t = random_channel(q, bct({2, 2}), rng);
    CHECK(op_norm_transf(t, 2) == op_norm_transf(t, 8));
    CHECK(op_norm_transf(t, 8) == 1);
}
