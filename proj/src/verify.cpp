#include "optkit/verify.hpp"

#include "optkit/circuits.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace optkit {

// ---- serialisation ----------------------------------------------------------------------

Json rat_json(const Rat& r) { return to_string(r); }
Rat rat_from(const Json& j) { return parse_rat(j.get<std::string>()); }

Json mat_json(const RatMat& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (std::size_t k = 0; k < m.cols(); ++k) row.push_back(rat_json(m(i, k)));
        rows.push_back(std::move(row));
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

RatMat mat_from(const Json& j) {
    RatMat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t k = 0; k < m.cols(); ++k) m(i, k) = rat_from(j.at("data").at(i).at(k));
    return m;
}

namespace {

Json vec_json(const RatVec& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(rat_json(x));
    return a;
}

RatVec vec_from(const Json& j) {
    RatVec v;
    for (const auto& x : j) v.push_back(rat_from(x));
    return v;
}

Json handle_json(const TheoryHandle& h) {
    return Json{{"theory", to_string(h.theory)},     {"policy", to_string(h.policy)},
                {"depth", h.depth},                  {"ancilla_bound", h.ancilla_bound},
                {"catalogue", to_string(h.catalogue)}, {"grid", h.grid}};
}

TheoryHandle handle_from(const Json& j) {
    TheoryHandle h;
    h.theory = parse_theory(j.at("theory").get<std::string>());
    h.policy = parse_policy(j.at("policy").get<std::string>());
    h.depth = j.at("depth").get<int>();
    h.ancilla_bound = j.at("ancilla_bound").get<std::size_t>();
    h.catalogue = parse_catalogue(j.at("catalogue").get<std::string>());
    h.grid = j.at("grid").get<int>();
    return h;
}

SearchBudget budget_of(const TheoryHandle& h) {
    SearchBudget b;
    b.depth = h.depth;
    b.ancilla_bound = h.ancilla_bound;
    b.catalogue = h.catalogue;
    return b;
}

}  // namespace

Json system_json(const SystemType& s) { return Json{{"theory", to_string(s.theory)}, {"dims", s.dims}}; }
SystemType system_from(const Json& j) {
    return SystemType{parse_theory(j.at("theory").get<std::string>()), j.at("dims").get<std::vector<int>>()};
}

Json map_json(const TransfMap& t) { return Json{{"in", system_json(t.in)}, {"out", system_json(t.out)}, {"ext", mat_json(t.ext)}}; }
TransfMap map_from(const Json& j) { return TransfMap{system_from(j.at("in")), system_from(j.at("out")), mat_from(j.at("ext")), {}}; }

Json instrument_json(const Instrument& i) {
    Json ev = Json::array();
    for (const auto& e : i.events) ev.push_back(mat_json(e.ext));
    return Json{{"in", system_json(i.in)}, {"out", system_json(i.out)}, {"outcomes", i.outcomes}, {"events", ev}};
}

Instrument instrument_from(const Json& j) {
    Instrument r{system_from(j.at("in")), system_from(j.at("out")), j.at("outcomes").get<std::vector<std::string>>(), {}};
    for (const auto& e : j.at("events")) r.events.push_back(TransfMap{r.in, r.out, mat_from(e), {}});
    return r;
}

Json lp_json(const LPProblem& p) {
    Json sense = Json::array();
    for (auto s : p.in_sense) sense.push_back(s == Sense::LE ? "<=" : ">=");
    Json j{{"nvars", p.nvars}, {"nonneg", p.nonneg}, {"eq_a", mat_json(p.eq_a)}, {"eq_b", vec_json(p.eq_b)},
           {"in_a", mat_json(p.in_a)}, {"in_b", vec_json(p.in_b)}, {"in_sense", sense}};
    if (p.maximize) j["maximize"] = vec_json(*p.maximize);
    return j;
}

LPProblem lp_from(const Json& j) {
    LPProblem p;
    p.nvars = j.at("nvars").get<std::size_t>();
    p.nonneg = j.at("nonneg").get<bool>();
    p.eq_a = mat_from(j.at("eq_a"));
    p.eq_b = vec_from(j.at("eq_b"));
    p.in_a = mat_from(j.at("in_a"));
    p.in_b = vec_from(j.at("in_b"));
    for (const auto& s : j.at("in_sense")) p.in_sense.push_back(s.get<std::string>() == "<=" ? Sense::LE : Sense::GE);
    if (j.contains("maximize")) p.maximize = vec_from(j.at("maximize"));
    return p;
}

Json to_json(const Certificate& c) {
    return Json{{"claim", c.claim}, {"verdict", c.verdict}, {"witness", c.witness}, {"provenance", c.provenance}, {"note", c.note}};
}

Certificate certificate_from_json(const Json& j) {
    Certificate c;
    c.claim = j.at("claim").get<std::string>();
    c.verdict = j.at("verdict").get<std::string>();
    c.witness = j.at("witness");
    c.provenance = j.at("provenance");
    c.note = j.at("note").get<std::string>();
    return c;
}

// ---- helpers ------------------------------------------------------------------------------

namespace {

// Variables for the ext matrix of a map, one per orbit of the probe-sign flip (BCT).
struct MapVars {
    std::size_t rows = 0, cols = 0, offset = 0, count = 0;
    std::vector<std::size_t> index;

    MapVars(const SystemType& in, const SystemType& out, std::size_t first) : offset(first) {
        const SystemType ein = probe_extended(in), eout = probe_extended(out);
        rows = eout.dimension();
        cols = ein.dimension();
        index.assign(rows * cols, 0);
        const bool bct = in.theory == Theory::BCT;
        std::map<std::size_t, std::size_t> rep;
        for (std::size_t o = 0; o < rows; ++o)
            for (std::size_t i = 0; i < cols; ++i) {
                std::size_t o2 = o, i2 = i;
                if (bct) {
                    if (!out.trivial()) o2 ^= 1;
                    if (!in.trivial()) i2 ^= 1;
                }
                const std::size_t key = std::min(o * cols + i, o2 * cols + i2);
                auto [it, fresh] = rep.emplace(key, count);
                if (fresh) ++count;
                index[o * cols + i] = offset + it->second;
            }
    }
    std::size_t at(std::size_t o, std::size_t i) const { return index[o * cols + i]; }
    RatMat extract(const RatVec& x) const {
        RatMat m(rows, cols);
        for (std::size_t o = 0; o < rows; ++o)
            for (std::size_t i = 0; i < cols; ++i) m(o, i) = x[at(o, i)];
        return m;
    }
};

// Rows are appended as sparse maps and densified at the end.
struct LPBuilder {
    std::size_t nvars = 0;
    std::vector<std::map<std::size_t, Rat>> eq;
    RatVec rhs;

    void add(std::map<std::size_t, Rat> row, const Rat& b) {
        for (auto it = row.begin(); it != row.end();) it = sgn(it->second) == 0 ? row.erase(it) : std::next(it);
        if (row.empty()) {
            // 0 = b: keep the row so a nonzero b still makes the problem infeasible
            if (sgn(b) == 0) return;
        }
        eq.push_back(std::move(row));
        rhs.push_back(b);
    }
    LPProblem build() const {
        LPProblem p;
        p.nvars = nvars;
        p.nonneg = true;
        p.eq_a = RatMat(eq.size(), nvars);
        for (std::size_t r = 0; r < eq.size(); ++r)
            for (const auto& [k, v] : eq[r]) p.eq_a(r, k) = v;
        p.eq_b = rhs;
        p.in_a = RatMat(0, nvars);
        return p;
    }
};

Json lp_witness(const LPProblem& p, const LPOutcome& o) {
    Json w{{"kind", "lp"}, {"problem", lp_json(p)}};
    if (o.status == LPStatus::Infeasible) {
        w["farkas_eq"] = vec_json(o.farkas_eq);
        w["farkas_in"] = vec_json(o.farkas_in);
    } else {
        w["x"] = vec_json(o.witness);
    }
    return w;
}

bool lp_replay(const Json& w) {
    const LPProblem p = lp_from(w.at("problem"));
    if (w.contains("x")) return check_witness(p, vec_from(w.at("x")));
    return check_farkas(p, vec_from(w.at("farkas_eq")), vec_from(w.at("farkas_in")));
}

TransfMap discard_map(const SystemType& a) { return effect_map(deterministic_effect(a)); }

// a A -> first or second copy
TransfMap keep_first(const SystemType& a) { return par_compose(identity_map(a), discard_map(a)); }
TransfMap keep_second(const SystemType& a) { return par_compose(discard_map(a), identity_map(a)); }

TransfMap function_channel(const SystemType& s, const std::vector<std::size_t>& f) {
    TransfMap t = zero_map(s, s);
    for (std::size_t a = 0; a < s.dimension(); ++a) {
        EffectVec e{s, RatVec(s.dimension())};
        e.x[a] = 1;
        t = sum(t, seq_compose(state_map(vertex_state(s, f[a])), effect_map(e)));
    }
    return t;
}

bool contains(const std::vector<TransfMap>& v, const TransfMap& t) { return std::find(v.begin(), v.end(), t) != v.end(); }

}  // namespace

// ---- broadcasting -------------------------------------------------------------------------

TransfMap copy_map(const SystemType& a) {
    const SystemType aa = compose_systems(a, a);
    TransfMap t = zero_map(a, aa);
    for (std::size_t i = 0; i < a.dimension(); ++i) {
        EffectVec e{a, RatVec(a.dimension())};
        e.x[i] = 1;
        const StateVec v = vertex_state(a, i);
        t = sum(t, seq_compose(state_map(product_state(v, v)), effect_map(e)));
    }
    return t;
}

BroadcastCheck broadcast_conditions(const TransfMap& b, std::size_t ancilla_bound) {
    const SystemType& a = b.in;
    BroadcastCheck r;
    if (!(b.out == compose_systems(a, a))) return r;
    const TransfMap m1 = seq_compose(keep_first(a), b), m2 = seq_compose(keep_second(a), b);
    const TransfMap id = identity_map(a);
    r.local = m1.local() == id.local() && m2.local() == id.local();
    r.full = m1 == id && m2 == id;
    if (r.full) {
        // every vertex of A E, for every ancilla up to the bound
        for (const auto& env : ancillas(a.theory, ancilla_bound)) {
            const SystemType whole = compose_systems(a, env);
            for (std::size_t v = 0; v < whole.dimension() && r.full; ++v) {
                const StateVec s = vertex_state(whole, v);
                r.full = apply_with_ancilla(m1, env, s).x == s.x && apply_with_ancilla(m2, env, s).x == s.x;
            }
        }
    }
    return r;
}

Certificate check_broadcasting_cone(const SystemType& a, std::size_t ancilla_bound) {
    Certificate c;
    c.claim = "broadcasting-cone";
    c.provenance = Json{{"system", system_json(a)}, {"ancilla_bound", ancilla_bound},
                        {"admissibility", "nonnegative probe-extended matrix, symmetric under the probe sign flip"}};
    const SystemType aa = compose_systems(a, a);
    MapVars v(a, aa, 0);
    LPBuilder lp;
    lp.nvars = v.count;
    const TransfMap k1 = keep_first(a), k2 = keep_second(a);
    for (const TransfMap* k : {&k1, &k2})
        for (std::size_t r = 0; r < k->ext.rows(); ++r)
            for (std::size_t col = 0; col < v.cols; ++col) {
                std::map<std::size_t, Rat> row;
                for (std::size_t m = 0; m < v.rows; ++m)
                    if (sgn(k->ext(r, m)) != 0) row[v.at(m, col)] += k->ext(r, m);
                lp.add(std::move(row), Rat(r == col ? 1 : 0));
            }
    const LPProblem p = lp.build();
    const LPOutcome o = lp_solve(p);
    c.witness = lp_witness(p, o);
    if (o.status == LPStatus::Infeasible) {
        c.verdict = "infeasible";
        c.note = "no broadcasting map in the cone";
        return c;
    }
    const TransfMap b{a, aa, v.extract(o.witness), {}};
    c.verdict = "feasible";
    c.witness["map"] = map_json(b);
    c.witness["equals_copy_map"] = b == copy_map(a);
    c.note = a.theory == Theory::BCT ? "open question for full BCT; recorded as an experiment" : "";
    return c;
}

Certificate check_broadcasting_family(const TheoryHandle& h, const SystemType& a) {
    Certificate c;
    c.claim = "broadcasting-family";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)},
                        {"reduction", "vertex preparations and discriminating measurements; grid mixtures are mixtures of these"}};
    const SearchResult r = search_chains(a, SearchGoal::Broadcasting, budget_of(h));
    c.provenance["nodes"] = r.stats.nodes;
    c.provenance["truncated"] = r.truncated;
    if (r.found) {
        c.verdict = "witness";
        c.witness = Json{{"instrument", instrument_json(r.witness)}, {"steps", r.witness_steps}};
        c.witness["channel"] = map_json(full_coarse_graining(r.witness));
    } else {
        c.verdict = r.truncated ? "truncated" : "exhausted";
        c.note = "no broadcasting chain within the budget";
    }
    return c;
}

Certificate check_local_broadcast(const SystemType& a, std::size_t ancilla_bound) {
    Certificate c;
    c.claim = "local-broadcast";
    c.provenance = Json{{"system", system_json(a)}, {"ancilla_bound", ancilla_bound}};
    const TransfMap b = copy_map(a);
    const BroadcastCheck k = broadcast_conditions(b, ancilla_bound);
    c.witness = Json{{"map", map_json(b)}, {"local", k.local}, {"full", k.full}};
    c.verdict = k.local && !k.full ? "holds" : "fails";
    c.note = "the label-copying map meets the marginal conditions on local states; the full conditions also require correlations";
    return c;
}

// ---- compatibility ------------------------------------------------------------------------

Instrument random_observation_test(std::mt19937& rng, const SystemType& s, std::size_t outcomes) {
    const std::size_t d = s.dimension();
    std::vector<RatVec> eff(outcomes, RatVec(d));
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<int> w(outcomes);
        int tot = 0;
        for (auto& x : w) tot += (x = int(rng() % 4));
        if (tot == 0) tot = w[rng() % outcomes] = 1;
        for (std::size_t y = 0; y < outcomes; ++y) eff[y][j] = Rat(w[y]) / Rat(tot);
    }
    Instrument r{s, SystemType{s.theory, {}}, {}, {}};
    for (std::size_t y = 0; y < outcomes; ++y) {
        r.outcomes.push_back("y" + std::to_string(y));
        r.events.push_back(effect_map(EffectVec{s, eff[y]}));
    }
    return r;
}

Certificate check_compatibility(const Instrument& a, const Instrument& b, std::size_t ancilla_bound) {
    Certificate c;
    c.claim = "compatibility";
    c.provenance = Json{{"a", instrument_json(a)}, {"b", instrument_json(b)}, {"ancilla_bound", ancilla_bound}};
    if (!(a.in == b.in) || !a.out.trivial() || !b.out.trivial())
        throw std::invalid_argument("check_compatibility: two observation tests on one system expected");
    const SystemType& s = a.in;
    const std::size_t d = s.dimension(), nx = a.size(), ny = b.size();
    auto var = [&](std::size_t x, std::size_t y, std::size_t j) { return (x * ny + y) * d + j; };
    LPBuilder lp;
    lp.nvars = nx * ny * d;
    for (std::size_t x = 0; x < nx; ++x) {
        const RatMat ax = a.events[x].local();
        for (std::size_t j = 0; j < d; ++j) {
            std::map<std::size_t, Rat> row;
            for (std::size_t y = 0; y < ny; ++y) row[var(x, y, j)] = 1;
            lp.add(std::move(row), ax(0, j));
        }
    }
    for (std::size_t y = 0; y < ny; ++y) {
        const RatMat by = b.events[y].local();
        for (std::size_t j = 0; j < d; ++j) {
            std::map<std::size_t, Rat> row;
            for (std::size_t x = 0; x < nx; ++x) row[var(x, y, j)] = 1;
            lp.add(std::move(row), by(0, j));
        }
    }
    const LPProblem p = lp.build();
    const LPOutcome o = lp_solve(p);
    c.witness = lp_witness(p, o);
    if (o.status == LPStatus::Infeasible) {
        c.verdict = "infeasible";
        return c;
    }
    Instrument joint{s, a.out, {}, {}};
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
            RatVec e(d);
            for (std::size_t j = 0; j < d; ++j) e[j] = o.witness[var(x, y, j)];
            joint.outcomes.push_back(a.outcomes[x] + "," + b.outcomes[y]);
            joint.events.push_back(effect_map(EffectVec{s, e}));
        }
    // margins at the level of the full (probe-extended) maps, and admissibility with ancillas
    bool ok = is_instrument(joint);
    for (std::size_t x = 0; x < nx && ok; ++x) {
        TransfMap m = zero_map(s, a.out);
        for (std::size_t y = 0; y < ny; ++y) m = sum(m, joint.events[x * ny + y]);
        ok = m == a.events[x];
    }
    for (std::size_t y = 0; y < ny && ok; ++y) {
        TransfMap m = zero_map(s, a.out);
        for (std::size_t x = 0; x < nx; ++x) m = sum(m, joint.events[x * ny + y]);
        ok = m == b.events[y];
    }
    for (std::size_t k = 0; k < joint.size() && ok; ++k) {
        RatVec e(d);
        const RatMat l = joint.events[k].local();
        for (std::size_t j = 0; j < d; ++j) e[j] = l(0, j);
        ok = is_admissible_effect(EffectVec{s, e}, ancilla_bound);
    }
    c.witness["joint"] = instrument_json(joint);
    c.verdict = ok ? "feasible" : "fails";
    return c;
}

// ---- exclusion ----------------------------------------------------------------------------

Certificate check_excludes(const Instrument& t, const Instrument& target) {
    Certificate c;
    c.claim = "excludes";
    c.provenance = Json{{"t", instrument_json(t)},
                        {"target", instrument_json(target)},
                        {"dilation", "the instrument itself"},
                        {"post-processing", "every instrument of the cone (nonnegative probe-extended maps)"}};
    if (!(t.in == target.in)) throw std::invalid_argument("check_excludes: instruments on different inputs");
    const std::size_t nx = t.size(), ny = target.size();
    std::vector<MapVars> vars;
    std::size_t next = 0;
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
            vars.emplace_back(t.out, target.out, next);
            next += vars.back().count;
        }
    auto P = [&](std::size_t x, std::size_t y) -> const MapVars& { return vars[x * ny + y]; };
    LPBuilder lp;
    lp.nvars = next;
    for (std::size_t y = 0; y < ny; ++y) {
        const RatMat& ty = target.events[y].ext;
        for (std::size_t r = 0; r < ty.rows(); ++r)
            for (std::size_t col = 0; col < ty.cols(); ++col) {
                std::map<std::size_t, Rat> row;
                for (std::size_t x = 0; x < nx; ++x) {
                    const RatMat& tx = t.events[x].ext;
                    for (std::size_t k = 0; k < tx.rows(); ++k)
                        if (sgn(tx(k, col)) != 0) row[P(x, y).at(r, k)] += tx(k, col);
                }
                lp.add(std::move(row), ty(r, col));
            }
    }
    // each P_x coarse-grains to a deterministic map
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t k = 0; k < P(x, 0).cols; ++k) {
            std::map<std::size_t, Rat> row;
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t r = 0; r < P(x, y).rows; ++r) row[P(x, y).at(r, k)] += 1;
            lp.add(std::move(row), Rat(1));
        }
    const LPProblem p = lp.build();
    const LPOutcome o = lp_solve(p);
    c.witness = lp_witness(p, o);
    if (o.status == LPStatus::Infeasible) {
        c.verdict = "excludes";
        c.note = "no post-processing reproduces the target from this instrument";
        return c;
    }
    Json post = Json::array();
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) post.push_back(map_json(TransfMap{t.out, target.out, P(x, y).extract(o.witness), {}}));
    c.witness["post_processing"] = post;
    c.verdict = "does-not-exclude";
    return c;
}

// ---- identity decompositions -----------------------------------------------------------

Decomposition classify_identity_decomposition(const Instrument& i) {
    if (!(i.in == i.out) || !(full_coarse_graining(i) == identity_map(i.in))) return Decomposition::None;
    for (const auto& e : i.events)
        if (!e.ext.is_zero() && !is_proportional_to_identity(e)) return Decomposition::Nontrivial;
    return Decomposition::Trivial;
}

Certificate identity_decompositions(const std::vector<Instrument>& family) {
    Certificate c;
    c.claim = "identity-decompositions";
    Json found = Json::array();
    std::size_t nontrivial = 0, trivial = 0;
    for (std::size_t k = 0; k < family.size(); ++k) {
        const Decomposition d = classify_identity_decomposition(family[k]);
        if (d == Decomposition::None) continue;
        (d == Decomposition::Nontrivial ? nontrivial : trivial)++;
        found.push_back(Json{{"index", k}, {"kind", d == Decomposition::Nontrivial ? "nontrivial" : "trivial"},
                             {"instrument", instrument_json(family[k])}});
    }
    Json fam = Json::array();
    for (const auto& i : family) fam.push_back(instrument_json(i));
    c.provenance = Json{{"family", fam}};
    c.witness = Json{{"decompositions", found}, {"nontrivial", nontrivial}, {"trivial", trivial}};
    c.verdict = nontrivial ? "witness" : "exhausted";
    return c;
}

Certificate find_identity_decompositions(const TheoryHandle& h, const SystemType& a) {
    Certificate c;
    c.claim = "identity-search";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)}};
    const SearchResult r = search_chains(a, SearchGoal::IdentityDecomposition, budget_of(h));
    c.provenance["nodes"] = r.stats.nodes;
    c.provenance["truncated"] = r.truncated;
    if (r.found) {
        c.verdict = "witness";
        c.witness = Json{{"instrument", instrument_json(r.witness)}, {"steps", r.witness_steps}};
    } else {
        c.verdict = r.truncated ? "truncated" : "exhausted";
        c.note = "only trivial decompositions of the identity within the budget";
    }
    return c;
}

// ---- reversibles ----------------------------------------------------------------------------

Certificate check_reversibles_are_permutations(const TheoryHandle& h, const SystemType& a) {
    Certificate c;
    c.claim = "reversibles";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)}};
    const SearchResult r = search_chains(a, SearchGoal::Reversible, budget_of(h));
    Json list = Json::array();
    bool all = true;
    const std::size_t n = probe_extended(a).dimension();
    for (const auto& perm : r.permutations) {
        TransfMap t{a, a, RatMat(n, n), {}};
        for (std::size_t i = 0; i < n; ++i) t.ext(std::size_t(perm[i]), i) = 1;
        const bool vertex = is_vertex_permutation(t) && is_deterministic(t);
        const auto wire = as_wire_permutation(t);
        all = all && vertex;
        Json e{{"ext_permutation", perm}, {"vertex_permutation", vertex}, {"wire_permutation", wire.has_value()}};
        if (wire) e["wires"] = *wire;
        list.push_back(std::move(e));
    }
    c.witness = Json{{"reversibles", list}};
    c.verdict = all ? "holds" : "fails";
    return c;
}

// ---- purification ---------------------------------------------------------------------------

Certificate purification_counterexample(const SystemType& a, const SystemType& b, std::size_t v1, std::size_t v2) {
    Certificate c;
    c.claim = "purification";
    const SystemType ab = compose_systems(a, b);
    c.provenance = Json{{"a", system_json(a)}, {"b", system_json(b)}, {"v1", v1}, {"v2", v2}};
    if (v1 == v2) {
        c.verdict = "rejected";
        c.note = "the two states coincide";
        return c;
    }
    if (a.theory == Theory::CT) {
        c.verdict = "not-applicable";
        c.note = "every pure state of a classical composite is a product; no sign to hide";
        return c;
    }
    const StateVec s1 = vertex_state(ab, v1), s2 = vertex_state(ab, v2);
    std::vector<std::size_t> keep(a.leaves());
    std::iota(keep.begin(), keep.end(), 0);
    const StateVec m1 = marginal(s1, keep), m2 = marginal(s2, keep);
    c.witness = Json{{"sigma1", label_text(ab, v1)}, {"sigma2", label_text(ab, v2)}, {"marginal1", vec_json(m1.x)},
                     {"marginal2", vec_json(m2.x)}};
    if (m1.x != m2.x) {
        c.verdict = "rejected";
        c.note = "marginals on A differ";
        return c;
    }
    // every permutation of B's leaves, acting as id_A (x) pi
    std::vector<std::size_t> pi(b.leaves());
    std::iota(pi.begin(), pi.end(), 0);
    std::size_t tried = 0;
    bool connected = false;
    Json hits = Json::array();
    do {
        std::vector<std::size_t> full = keep;
        for (auto x : pi) full.push_back(a.leaves() + x);
        const TransfMap p = permutation_map(ab, full);
        if (!(p.out == ab)) continue;
        ++tried;
        const TransfMap img = seq_compose(p, state_map(s1));
        if (img == state_map(s2)) {
            connected = true;
            hits.push_back(pi);
        }
    } while (std::next_permutation(pi.begin(), pi.end()));
    c.witness["b_permutations_checked"] = tried;
    c.witness["connecting"] = hits;
    c.verdict = connected ? "rejected" : "counterexample";
    return c;
}

Certificate purification_counterexample(const SystemType& a, const SystemType& b) {
    const SystemType ab = compose_systems(a, b);
    if (ab.theory == Theory::CT) return purification_counterexample(a, b, 0, 1 % ab.dimension());
    // (1,...,1;+) and the same values with B's first leaf sign flipped
    std::vector<int> vals(ab.leaves(), 0), eps(ab.leaves(), 0);
    const LabelKey k1 = canonical_key(make_key(vals, eps), ab.leaves());
    eps[a.leaves()] = 1;
    const LabelKey k2 = canonical_key(make_key(vals, eps), ab.leaves());
    return purification_counterexample(a, b, label_index(ab, k1), label_index(ab, k2));
}

// ---- no programming -----------------------------------------------------------------------

Certificate no_universal_simulator_probe(const TheoryHandle& h, const SystemType& a, std::size_t program_bound) {
    Certificate c;
    c.claim = "no-programming";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)}, {"program_bound", program_bound}};
    const TransfMap id = identity_map(a);
    std::size_t candidates = 0, program_id = 0, violations = 0, degenerate = 0;
    Json bad = Json::array();
    for (const auto& prog : ancillas(a.theory, program_bound)) {
        if (prog.trivial()) continue;
        const SystemType ap = compose_systems(a, prog);
        const ChannelFamily fam = channel_family(h, ap, a);
        for (std::size_t g = 0; g < fam.channels.size(); ++g) {
            ++candidates;
            std::vector<TransfMap> programmed;
            bool gives_id = false;
            for (std::size_t v = 0; v < prog.dimension(); ++v) {
                const TransfMap run = seq_compose(fam.channels[g], par_compose(id, state_map(vertex_state(prog, v))));
                if (run == id) gives_id = true;
                if (!contains(programmed, run)) programmed.push_back(run);
            }
            if (!gives_id) {
                if (programmed.size() == 1 && programmed[0].ext.rows() == programmed[0].ext.cols()) ++degenerate;
                continue;
            }
            ++program_id;
            if (programmed.size() > 1) {
                ++violations;
                bad.push_back(Json{{"program", system_json(prog)}, {"channel", map_json(fam.channels[g])}});
            }
        }
    }
    c.witness = Json{{"candidates", candidates}, {"programming_identity", program_id}, {"programming_identity_and_more", violations},
                     {"violations", bad}};
    c.verdict = violations ? "fails" : "holds";
    c.note = "a candidate that yields the identity for one program yields it for every program";
    return c;
}

// ---- inclusions ---------------------------------------------------------------------------

Certificate inclusion_minimal_in_conditional(const TheoryHandle& h, const SystemType& a) {
    Certificate c;
    c.claim = "inclusion-minimal-conditional";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)}};
    TheoryHandle h0 = h;
    h0.policy = Policy::Minimal;
    const ChannelFamily f0 = channel_family(h0, a, a), f = sc_channel_family(h, a, a);
    c.provenance["family_sizes"] = Json{{"minimal", f0.channels.size()}, {"conditional", f.channels.size()}};
    bool subset = true;
    for (const auto& t : f0.channels) subset = subset && contains(f.channels, t);
    for (const auto& t : f.channels)
        if (!contains(f0.channels, t) && !is_minimal_channel(t)) {
            c.witness = Json{{"channel", map_json(t)}, {"minimal_is_subset", subset}};
            c.verdict = subset ? "strict" : "fails";
            return c;
        }
    c.verdict = "fails";
    c.note = "no channel outside the minimal family";
    return c;
}

Certificate function_channels_reached(const TheoryHandle& h, const SystemType& a) {
    Certificate c;
    c.claim = "function-channels";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)}};
    TheoryHandle h0 = h;
    h0.policy = Policy::Minimal;
    const ChannelFamily f = sc_channel_family(h, a, a), f0 = channel_family(h0, a, a);
    const std::size_t d = a.dimension();
    std::vector<std::size_t> img(d, 0);
    std::size_t total = 0, reached = 0, missing_at_zero = 0;
    Json list = Json::array();
    for (;;) {
        const TransfMap t = function_channel(a, img);
        const bool in = contains(f.channels, t), in0 = contains(f0.channels, t);
        ++total;
        reached += in;
        missing_at_zero += !in0;
        list.push_back(Json{{"image", img}, {"conditional", in}, {"minimal", in0}});
        std::size_t k = 0;
        while (k < d && ++img[k] == d) img[k++] = 0;
        if (k == d) break;
    }
    c.witness = Json{{"functions", list}, {"total", total}, {"reached", reached}, {"absent_from_minimal", missing_at_zero}};
    c.verdict = reached == total && missing_at_zero > 0 ? "strict" : "fails";
    return c;
}

Certificate inclusion_family_in_cone(const TheoryHandle& h, const SystemType& a) {
    Certificate c;
    c.claim = "inclusion-family-cone";
    c.provenance = Json{{"system", system_json(a)}, {"handle", handle_json(h)}};
    if (a.theory != Theory::BCT || a.trivial()) {
        c.verdict = "not-applicable";
        return c;
    }
    const std::size_t n = probe_extended(a).dimension();
    TransfMap flip{a, a, RatMat(n, n), {}};
    for (std::size_t i = 0; i < n; ++i) flip.ext(i ^ 1, i) = 1;
    const SearchResult r = search_chains(a, SearchGoal::Reversible, budget_of(h));
    std::vector<int> as_perm(n);
    for (std::size_t i = 0; i < n; ++i) as_perm[i] = int(i ^ 1);
    const bool realised = std::find(r.permutations.begin(), r.permutations.end(), as_perm) != r.permutations.end();
    c.witness = Json{{"map", map_json(flip)}, {"deterministic", is_deterministic(flip)}, {"realised", realised},
                     {"local_identity", flip.local() == identity_map(a).local()}};
    c.verdict = is_deterministic(flip) && !realised ? "strict" : "fails";
    c.note = "flips the relative sign between the system and its environment; locally the identity";
    return c;
}

// ---- norm laws ----------------------------------------------------------------------------

namespace {

std::vector<std::size_t> random_perm(std::mt19937& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

std::vector<std::size_t> inverse(const std::vector<std::size_t>& p) {
    std::vector<std::size_t> q(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) q[p[k]] = k;
    return q;
}

// Random canonical channel s -> s: permute, erase a prefix and prepare a grid state there, permute back.
TransfMap random_channel(std::mt19937& rng, const SystemType& s) {
    const auto p = random_perm(rng, s.leaves());
    const std::size_t erased = s.leaves() ? rng() % (s.leaves() + 1) : 0;
    SystemType ap{s.theory, {}};
    for (std::size_t k = 0; k < erased; ++k) ap.dims.push_back(s.dims[p[k]]);
    const auto grid = grid_states(ap, 1);
    const StateVec rho = grid[rng() % grid.size()];
    return canonical_channel(s, p, erased, rho, inverse(p));
}

}  // namespace

Certificate check_norm_laws(std::uint32_t seed, std::size_t count, std::size_t ancilla_bound) {
    Certificate c;
    c.claim = "norm-laws";
    c.provenance = Json{{"seed", seed}, {"count", count}, {"ancilla_bound", ancilla_bound},
                        {"inner_bound", 2}};
    std::mt19937 rng(seed);
    const std::size_t inner = 2;
    std::size_t additivity = 0, monotone = 0, perm_equal = 0, ancilla = 0, envs = 0;
    Json failures = Json::array();
    for (std::size_t n = 0; n < count; ++n) {
        RandomDiagramOptions o;
        o.theory = n % 3 == 2 ? Theory::CT : Theory::BCT;
        o.max_wires = 2;
        o.max_slices = 3;
        o.max_outcomes = 3;
        const Instrument ins = eval(random_diagram(rng, o));
        // additivity, padding with null events, coarse-graining inequality
        Rat total;
        for (const auto& e : ins.events) total += op_norm_transf(e, inner);
        Instrument padded = ins;
        padded.outcomes.push_back("null");
        padded.events.push_back(zero_map(ins.in, ins.out));
        Instrument twice = ins;
        for (std::size_t k = 0; k < ins.size(); ++k) {
            twice.outcomes.push_back(ins.outcomes[k] + "'");
            twice.events.push_back(ins.events[k]);
        }
        const bool add = instrument_norm(ins, inner) == total && instrument_norm(padded, inner) == total &&
                         instrument_norm(twice, inner) == 2 * total &&
                         op_norm_transf(full_coarse_graining(ins), inner) <= total;
        additivity += add;
        if (!add) failures.push_back(Json{{"law", "additivity"}, {"index", n}});
        // a generalised event: difference of two events
        const TransfMap t = ins.size() > 1 ? sum(ins.events[0], scaled(Rat(-1), ins.events[1])) : ins.events[0];
        const Rat nt = op_norm_transf(t, inner);
        const TransfMap pre = random_channel(rng, t.in), post = random_channel(rng, t.out);
        const bool mono = op_norm_transf(seq_compose(post, seq_compose(t, pre)), inner) <= nt;
        monotone += mono;
        if (!mono) failures.push_back(Json{{"law", "monotonicity"}, {"index", n}});
        // a reordering of the input wires in front, another on the output
        const auto q = random_perm(rng, t.in.leaves());
        const TransfMap shuffled = permutation_map(t.in, q);
        const TransfMap p1 = permutation_map(shuffled.out, inverse(q));
        const TransfMap p2 = permutation_map(t.out, random_perm(rng, t.out.leaves()));
        const bool eq = p1.out == t.in && op_norm_transf(seq_compose(p2, seq_compose(t, p1)), inner) == nt;
        perm_equal += eq;
        if (!eq) failures.push_back(Json{{"law", "permutation-equality"}, {"index", n}});
        // ancilla invariance
        bool inv = true;
        for (const auto& env : ancillas(t.in.theory, ancilla_bound)) {
            if (env.trivial()) continue;
            if (compose_systems(t.in, env).dimension() > 64) continue;
            ++envs;
            inv = inv && op_norm_transf(par_compose(t, identity_map(env)), inner) == nt;
        }
        ancilla += inv;
        if (!inv) failures.push_back(Json{{"law", "ancilla-invariance"}, {"index", n}});
    }
    c.witness = Json{{"additivity", additivity}, {"monotonicity", monotone}, {"permutation_equality", perm_equal},
                     {"ancilla_invariance", ancilla}, {"environments", envs}, {"failures", failures}};
    c.verdict = failures.empty() ? "holds" : "fails";
    return c;
}

// ---- replay -------------------------------------------------------------------------------

bool reverify(const Certificate& c) {
    const Json& w = c.witness;
    const Json& p = c.provenance;
    auto same = [&](const Certificate& r) { return r.verdict == c.verdict && r.witness == c.witness; };
    if (c.claim == "broadcasting-cone") {
        if (!lp_replay(w)) return false;
        if (c.verdict == "feasible") return broadcast_conditions(map_from(w.at("map")), p.at("ancilla_bound")).full;
        return c.verdict == "infeasible";
    }
    if (c.claim == "compatibility") {
        if (!lp_replay(w)) return false;
        return c.verdict == "infeasible" || same(check_compatibility(instrument_from(p.at("a")), instrument_from(p.at("b")),
                                                                     p.at("ancilla_bound").get<std::size_t>()));
    }
    if (c.claim == "excludes") {
        if (!lp_replay(w)) return false;
        if (c.verdict == "excludes") return w.contains("farkas_eq");
        const Instrument t = instrument_from(p.at("t")), target = instrument_from(p.at("target"));
        const std::size_t ny = target.size();
        for (std::size_t y = 0; y < ny; ++y) {
            TransfMap s = zero_map(t.in, target.out);
            for (std::size_t x = 0; x < t.size(); ++x)
                s = sum(s, seq_compose(map_from(w.at("post_processing").at(x * ny + y)), t.events[x]));
            if (!(s == target.events[y])) return false;
        }
        return true;
    }
    if (c.claim == "local-broadcast") {
        const BroadcastCheck k = broadcast_conditions(map_from(w.at("map")), p.at("ancilla_bound"));
        return (c.verdict == "holds") == (k.local && !k.full);
    }
    if (c.claim == "broadcasting-family") {
        const SystemType a = system_from(p.at("system"));
        if (c.verdict == "witness")
            return broadcast_conditions(map_from(w.at("channel")), handle_from(p.at("handle")).ancilla_bound).full &&
                   full_coarse_graining(instrument_from(w.at("instrument"))) == map_from(w.at("channel"));
        return same(check_broadcasting_family(handle_from(p.at("handle")), a));
    }
    if (c.claim == "identity-search") {
        if (c.verdict == "witness")
            return classify_identity_decomposition(instrument_from(w.at("instrument"))) == Decomposition::Nontrivial;
        return same(find_identity_decompositions(handle_from(p.at("handle")), system_from(p.at("system"))));
    }
    if (c.claim == "identity-decompositions") {
        std::vector<Instrument> fam;
        for (const auto& i : p.at("family")) fam.push_back(instrument_from(i));
        return same(identity_decompositions(fam));
    }
    if (c.claim == "reversibles") return same(check_reversibles_are_permutations(handle_from(p.at("handle")), system_from(p.at("system"))));
    if (c.claim == "purification")
        return same(purification_counterexample(system_from(p.at("a")), system_from(p.at("b")), p.at("v1"), p.at("v2")));
    if (c.claim == "no-programming")
        return same(no_universal_simulator_probe(handle_from(p.at("handle")), system_from(p.at("system")), p.at("program_bound")));
    if (c.claim == "inclusion-minimal-conditional")
        return same(inclusion_minimal_in_conditional(handle_from(p.at("handle")), system_from(p.at("system"))));
    if (c.claim == "function-channels")
        return same(function_channels_reached(handle_from(p.at("handle")), system_from(p.at("system"))));
    if (c.claim == "inclusion-family-cone")
        return same(inclusion_family_in_cone(handle_from(p.at("handle")), system_from(p.at("system"))));
    if (c.claim == "norm-laws") return same(check_norm_laws(p.at("seed"), p.at("count"), p.at("ancilla_bound")));
    return false;
}

}  // namespace optkit
