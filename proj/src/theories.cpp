#include "optkit/theories.hpp"

#include "optkit/closure.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

namespace optkit {

std::string to_string(Policy p) {
    switch (p) {
        case Policy::Full: return "full";
        case Policy::Minimal: return "minimal";
        case Policy::MinimalSC: return "minimal-sc";
    }
    return "?";
}

Policy parse_policy(const std::string& s) {
    if (s == "full") return Policy::Full;
    if (s == "minimal") return Policy::Minimal;
    if (s == "minimal-sc") return Policy::MinimalSC;
    throw std::invalid_argument("unknown policy '" + s + "' (expected full, minimal or minimal-sc)");
}

std::string to_string(Catalogue c) { return c == Catalogue::AllDims ? "all" : "odd"; }

Catalogue parse_catalogue(const std::string& s) {
    if (s == "all") return Catalogue::AllDims;
    if (s == "odd") return Catalogue::OddOnly;
    throw std::invalid_argument("unknown catalogue '" + s + "' (expected all or odd)");
}

std::string describe(const TheoryHandle& h) {
    std::string name = h.policy == Policy::Full ? "" : h.policy == Policy::Minimal ? "M" : "MS";
    name += to_string(h.theory);
    if (h.policy == Policy::MinimalSC) name += " depth=" + std::to_string(h.depth);
    return name + " ancilla<=" + std::to_string(h.ancilla_bound) + " grid=" + std::to_string(h.grid) +
           " catalogue=" + to_string(h.catalogue);
}

bool in_catalogue(int leaf_dim, Catalogue cat) {
    if (leaf_dim < 1 || leaf_dim > kMaxLeafDim) return false;
    return cat == Catalogue::AllDims || leaf_dim % 2 == 1;
}

SystemType make_system(Theory th, std::vector<int> dims, Catalogue cat) {
    for (int d : dims)
        if (!in_catalogue(d, cat))
            throw std::invalid_argument("leaf dimension " + std::to_string(d) + " is not elementary in catalogue " +
                                        to_string(cat));
    if (dims.size() > kMaxLeaves) throw std::invalid_argument("too many leaves");
    return SystemType{th, std::move(dims)};
}

std::optional<SystemType> system_of_dimension(Theory th, std::size_t dim, Catalogue cat) {
    if (dim == 1 && th == Theory::CT) return SystemType{th, {}};
    std::optional<SystemType> best;
    std::function<void(std::vector<int>&)> rec = [&](std::vector<int>& cur) {
        SystemType s{th, cur};
        std::size_t d = s.dimension();
        if (!cur.empty() && d == dim && (!best || cur.size() < best->dims.size())) best = s;
        if (d > dim || cur.size() >= 6) return;
        for (int x = cur.empty() ? 1 : cur.back(); x <= std::min<int>(kMaxLeafDim, int(dim)); ++x) {
            if (!in_catalogue(x, cat) || (th == Theory::CT && x == 1)) continue;
            cur.push_back(x);
            rec(cur);
            cur.pop_back();
        }
    };
    std::vector<int> cur;
    rec(cur);
    return best;
}

std::vector<PureLabel> pure_states(const SystemType& s) {
    std::vector<PureLabel> out;
    for (std::size_t i = 0; i < s.dimension(); ++i) out.push_back(key_to_label(s, label_key(s, i)));
    return out;
}

Instrument discriminating_test(const SystemType& s) {
    std::vector<std::string> names;
    std::vector<TransfMap> events;
    for (std::size_t i = 0; i < s.dimension(); ++i) {
        EffectVec e{s, RatVec(s.dimension())};
        e.x[i] = 1;
        TransfMap t = effect_map(e);
        t.admissibility = {AdmissibilityKind::Canonical, 0, "dual-basis effect"};
        names.push_back(label_text(s, i));
        events.push_back(std::move(t));
    }
    return make_instrument(std::move(names), std::move(events));
}

StateVec marginal(const StateVec& r, const std::vector<std::size_t>& keep) {
    const SystemType& s = r.system;
    std::vector<bool> kept(s.leaves(), false);
    SystemType ks{s.theory, {}}, others{s.theory, {}};
    std::vector<std::size_t> other_pos;
    for (auto k : keep) {
        if (k >= s.leaves() || kept[k]) throw std::invalid_argument("marginal: bad leaf list");
        kept[k] = true;
    }
    for (std::size_t i = 0; i < s.leaves(); ++i)
        if (!kept[i]) {
            other_pos.push_back(i);
            others.dims.push_back(s.dims[i]);
        }
    if (keep.empty()) {
        StateVec t{ks, RatVec{std::accumulate(r.x.begin(), r.x.end(), Rat(0))}};
        return t;
    }
    // kept leaves in original order after deletion
    std::vector<std::size_t> sorted = keep;
    std::sort(sorted.begin(), sorted.end());
    SystemType mid{s.theory, {}};
    for (auto k : sorted) mid.dims.push_back(s.dims[k]);
    StateVec m{mid, RatVec(mid.dimension())};
    if (others.trivial()) {
        m.x = r.x;
    } else {
        const TransfMap u = effect_map(deterministic_effect(others));
        const Lifted lu(u);
        SparseCombo acc;
        for (std::size_t c = 0; c < r.x.size(); ++c)
            if (sgn(r.x[c]) != 0) lu.apply(label_key(s, c), s.leaves(), other_pos, 0, r.x[c], acc);
        for (const auto& [k, v] : acc) m.x[label_index(mid, k)] += v;
    }
    std::vector<std::size_t> perm;
    for (auto k : keep) perm.push_back(std::size_t(std::find(sorted.begin(), sorted.end(), k) - sorted.begin()));
    TransfMap p = permutation_map(mid, perm);
    return StateVec{p.out, p.local() * m.x};
}

bool is_product_vertex(const SystemType& s, std::size_t index) {
    const std::size_t n = s.leaves();
    if (n < 2) return false;
    const StateVec v = vertex_state(s, index);
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
        if (!(mask & 1)) continue;  // leaf 0 on the left side; each bipartition once
        std::vector<std::size_t> x, y;
        for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? x : y).push_back(i);
        StateVec prod = product_state(marginal(v, x), marginal(v, y));
        std::vector<std::size_t> order(x);
        order.insert(order.end(), y.begin(), y.end());
        std::vector<std::size_t> back(n);
        for (std::size_t k = 0; k < n; ++k) back[order[k]] = k;
        TransfMap p = permutation_map(prod.system, back);
        if (p.local() * prod.x == v.x) return true;
    }
    return false;
}

SpanReport entangled_spanning(const SystemType& s) {
    SpanReport r;
    r.dimension = s.dimension();
    std::vector<std::size_t> ent;
    for (std::size_t i = 0; i < s.dimension(); ++i)
        if (!is_product_vertex(s, i)) ent.push_back(i);
    r.entangled = ent.size();
    RatMat m(ent.size(), s.dimension());
    for (std::size_t k = 0; k < ent.size(); ++k) m(k, ent[k]) = 1;
    r.rank = ent.empty() ? 0 : rank(m);
    r.spanning = s.leaves() >= 2 && r.rank == r.dimension;
    return r;
}

std::vector<StateVec> grid_states(const SystemType& s, int grid) {
    std::vector<StateVec> out;
    const std::size_t d = s.dimension();
    for (std::size_t i = 0; i < d; ++i) out.push_back(vertex_state(s, i));
    const long den = 1L << grid;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            for (long k = 1; k < den; ++k) {
                StateVec r{s, RatVec(d)};
                r.x[i] = Rat(k) / Rat(den);
                r.x[j] = 1 - r.x[i];
                out.push_back(std::move(r));
            }
    return out;
}

namespace {

std::string fingerprint(const TransfMap& t) {
    std::string f = to_string(t.in) + ">" + to_string(t.out) + ":";
    for (const auto& x : t.ext.data()) f += x.get_str() + ",";
    return f;
}

// S2 (rho (x) id_E)(u_{A'} (x) id_E) S1, with `kept[k]` the input leaf sent to output slot k or -1.
TransfMap canonical_erase_prepare(const SystemType& in, const SystemType& out, const std::vector<int>& kept,
                                  const StateVec& rho) {
    std::vector<std::size_t> order;  // erased first, then kept in output order
    std::vector<bool> used(in.leaves(), false);
    for (int k : kept)
        if (k >= 0) used[std::size_t(k)] = true;
    SystemType erased{in.theory, {}}, env{in.theory, {}};
    for (std::size_t i = 0; i < in.leaves(); ++i)
        if (!used[i]) {
            order.push_back(i);
            erased.dims.push_back(in.dims[i]);
        }
    for (int k : kept)
        if (k >= 0) {
            order.push_back(std::size_t(k));
            env.dims.push_back(in.dims[std::size_t(k)]);
        }
    TransfMap s1 = permutation_map(in, order);
    TransfMap erase = par_compose(effect_map(deterministic_effect(erased)), identity_map(env));
    TransfMap prep = par_compose(state_map(rho), identity_map(env));
    // output slots: prepared leaves fill the -1 slots in order, kept leaves the others
    std::vector<std::size_t> perm(out.leaves());
    std::size_t nb = rho.system.leaves(), bi = 0, ei = 0;
    for (std::size_t k = 0; k < out.leaves(); ++k) perm[k] = kept[k] < 0 ? bi++ : nb + ei++;
    TransfMap s2 = permutation_map(prep.out, perm);
    TransfMap t = seq_compose(s2, seq_compose(prep, seq_compose(erase, s1)));
    t.admissibility = {AdmissibilityKind::Canonical, 0, "erase-and-prepare"};
    return t;
}

void kept_assignments(const SystemType& in, const SystemType& out, std::vector<int>& cur,
                      std::vector<std::vector<int>>& all) {
    if (cur.size() == out.leaves()) {
        all.push_back(cur);
        return;
    }
    const std::size_t k = cur.size();
    cur.push_back(-1);
    kept_assignments(in, out, cur, all);
    cur.pop_back();
    for (std::size_t i = 0; i < in.leaves(); ++i) {
        if (in.dims[i] != out.dims[k] || std::find(cur.begin(), cur.end(), int(i)) != cur.end()) continue;
        cur.push_back(int(i));
        kept_assignments(in, out, cur, all);
        cur.pop_back();
    }
}

}  // namespace

ChannelFamily channel_family(const TheoryHandle& h, const SystemType& in, const SystemType& out) {
    if (in.theory != h.theory || out.theory != h.theory) throw TheoryMismatch("channel_family: theory mismatch");
    if (h.policy == Policy::Full)
        throw PolicyError("the full policy is not enumerable; use the cone description (verify module)");
    if (h.policy == Policy::MinimalSC) return sc_channel_family(h, in, out);
    ChannelFamily fam;
    std::set<std::string> seen;
    std::vector<std::vector<int>> assigns;
    std::vector<int> cur;
    kept_assignments(in, out, cur, assigns);
    for (const auto& kept : assigns) {
        SystemType bp{in.theory, {}};
        for (std::size_t k = 0; k < kept.size(); ++k)
            if (kept[k] < 0) bp.dims.push_back(out.dims[k]);
        if (bp.dimension() > std::max<std::size_t>(h.ancilla_bound, out.dimension())) continue;
        for (const auto& rho : grid_states(bp, h.grid)) {
            TransfMap t = canonical_erase_prepare(in, out, kept, rho);
            ++fam.generated;
            if (seen.insert(fingerprint(t)).second) fam.channels.push_back(std::move(t));
        }
    }
    fam.note = "minimal canonical channels, preparation grid 2^-" + std::to_string(h.grid);
    return fam;
}

std::optional<std::vector<std::size_t>> as_wire_permutation(const TransfMap& t) {
    if (!(t.in.dims.size() == t.out.dims.size())) return std::nullopt;
    std::vector<std::size_t> p(t.in.leaves());
    std::iota(p.begin(), p.end(), 0);
    std::sort(p.begin(), p.end());
    do {
        bool ok = true;
        for (std::size_t k = 0; k < p.size() && ok; ++k) ok = t.in.dims[p[k]] == t.out.dims[k];
        if (ok && permutation_map(t.in, p) == t) return p;
    } while (std::next_permutation(p.begin(), p.end()));
    return std::nullopt;
}

bool is_minimal_channel(const TransfMap& t) {
    if (!is_deterministic(t)) return false;
    std::vector<std::vector<int>> assigns;
    std::vector<int> cur;
    kept_assignments(t.in, t.out, cur, assigns);
    for (const auto& kept : assigns) {
        // recover rho: marginal on the prepared slots of the image of the first input vertex
        StateVec img{t.out, t.local() * vertex_state(t.in, 0).x};
        std::vector<std::size_t> slots;
        for (std::size_t k = 0; k < kept.size(); ++k)
            if (kept[k] < 0) slots.push_back(k);
        StateVec rho = marginal(img, slots);
        if (canonical_erase_prepare(t.in, t.out, kept, rho) == t) return true;
    }
    return false;
}

}  // namespace optkit
