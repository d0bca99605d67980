#include "optkit/optcore.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace optkit {

std::string to_string(Theory t) { return t == Theory::CT ? "CT" : "BCT"; }

Theory parse_theory(const std::string& s) {
    if (s == "CT") return Theory::CT;
    if (s == "BCT") return Theory::BCT;
    throw std::invalid_argument("unknown theory '" + s + "' (expected CT or BCT)");
}

std::size_t SystemType::dimension() const {
    std::size_t d = 1;
    for (int x : dims) d *= static_cast<std::size_t>(x);
    if (theory == Theory::BCT && dims.size() > 1) d <<= (dims.size() - 1);
    return d;
}

std::string to_string(const SystemType& s) {
    std::string out = to_string(s.theory) + "[";
    for (std::size_t i = 0; i < s.dims.size(); ++i) out += (i ? "," : "") + std::to_string(s.dims[i]);
    return out + "]";
}

SystemType compose_systems(const SystemType& a, const SystemType& b) {
    if (a.theory != b.theory) throw TheoryMismatch("compose_systems: " + to_string(a) + " vs " + to_string(b));
    SystemType c{a.theory, a.dims};
    c.dims.insert(c.dims.end(), b.dims.begin(), b.dims.end());
    if (c.dims.size() > kMaxLeaves) throw std::invalid_argument("compose_systems: too many leaves");
    return c;
}

// ---- keys --------------------------------------------------------------------

LabelKey make_key(const std::vector<int>& vals, const std::vector<int>& eps_bits) {
    LabelKey k = 0;
    for (std::size_t i = 0; i < vals.size(); ++i) k |= LabelKey(vals[i]) << (4 * i);
    for (std::size_t i = 0; i < eps_bits.size(); ++i)
        if (eps_bits[i]) k |= LabelKey(1) << (48 + i);
    return k;
}

LabelKey canonical_key(LabelKey k, std::size_t leaves) {
    if (leaves == 0 || !key_eps(k, 0)) return k;
    LabelKey mask = ((LabelKey(1) << leaves) - 1) << 48;
    return k ^ mask;
}

std::size_t label_index(const SystemType& s, LabelKey k) {
    const std::size_t n = s.leaves();
    std::size_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v = v * static_cast<std::size_t>(s.dims[i]) + key_val(k, i);
    if (s.theory == Theory::CT || n <= 1) return v;
    std::size_t sg = 0;
    const int e0 = key_eps(k, 0);
    for (std::size_t i = 1; i < n; ++i) sg = (sg << 1) | static_cast<std::size_t>(key_eps(k, i) ^ e0);
    return (v << (n - 1)) | sg;
}

LabelKey label_key(const SystemType& s, std::size_t index) {
    const std::size_t n = s.leaves();
    LabelKey k = 0;
    std::size_t v = index;
    if (s.theory == Theory::BCT && n > 1) {
        std::size_t sg = index & ((std::size_t(1) << (n - 1)) - 1);
        v = index >> (n - 1);
        for (std::size_t i = 1; i < n; ++i)
            if ((sg >> (n - 1 - i)) & 1) k |= LabelKey(1) << (48 + i);
    }
    for (std::size_t i = n; i-- > 0;) {
        k |= LabelKey(v % static_cast<std::size_t>(s.dims[i])) << (4 * i);
        v /= static_cast<std::size_t>(s.dims[i]);
    }
    return k;
}

PureLabel key_to_label(const SystemType& s, LabelKey k) {
    if (s.trivial()) return leaf_label(-1);
    PureLabel l = leaf_label(key_val(k, 0), s.dims[0]);
    for (std::size_t i = 1; i < s.leaves(); ++i)
        l = join(std::move(l), leaf_label(key_val(k, i), s.dims[i]), (key_eps(k, i) ^ key_eps(k, 0)) ? -1 : 1);
    return l;
}

LabelKey label_to_key(const SystemType& s, const PureLabel& l) {
    SignedLeaves sl = to_signed_leaves(l);
    if (sl.vals.size() != s.leaves()) throw std::invalid_argument("label has the wrong number of leaves");
    std::vector<int> bits(sl.eps.size());
    for (std::size_t i = 0; i < sl.eps.size(); ++i) {
        if (sl.vals[i] < 0 || sl.vals[i] >= s.dims[i]) throw std::invalid_argument("label value out of range");
        bits[i] = s.theory == Theory::BCT && sl.eps[i] < 0;
    }
    return canonical_key(make_key(sl.vals, bits), s.leaves());
}

std::string label_text(const SystemType& s, std::size_t index) {
    if (s.trivial()) return "I";
    LabelKey k = label_key(s, index);
    if (s.theory == Theory::BCT) return to_text(key_to_label(s, k));
    if (s.leaves() == 1) return std::to_string(key_val(k, 0) + 1);
    std::string out = "[";
    for (std::size_t i = 0; i < s.leaves(); ++i) out += (i ? "," : "") + std::to_string(key_val(k, i) + 1);
    return out + "]";
}

std::vector<LabelKey> all_keys(const SystemType& s) {
    std::vector<LabelKey> out(s.dimension());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = label_key(s, i);
    return out;
}

// ---- states and effects ----------------------------------------------------------

StateVec vertex_state(const SystemType& s, std::size_t index) {
    StateVec r{s, RatVec(s.dimension())};
    r.x.at(index) = 1;
    return r;
}

StateVec product_state(const StateVec& a, const StateVec& b) {
    SystemType ab = compose_systems(a.system, b.system);
    StateVec r{ab, RatVec(ab.dimension())};
    const Rat w = (ab.theory == Theory::BCT && !a.system.trivial() && !b.system.trivial()) ? Rat(1, 2) : Rat(1);
    const std::size_t na = a.system.leaves();
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        if (sgn(a.x[i]) == 0) continue;
        LabelKey ka = label_key(a.system, i);
        for (std::size_t j = 0; j < b.x.size(); ++j) {
            if (sgn(b.x[j]) == 0) continue;
            LabelKey kb = label_key(b.system, j);
            LabelKey vals = 0;
            for (std::size_t l = 0; l < na; ++l) vals |= LabelKey(key_val(ka, l)) << (4 * l);
            for (std::size_t l = 0; l < b.system.leaves(); ++l) vals |= LabelKey(key_val(kb, l)) << (4 * (na + l));
            LabelKey eps = 0;
            for (std::size_t l = 0; l < na; ++l) eps |= LabelKey(key_eps(ka, l)) << (48 + l);
            for (std::size_t l = 0; l < b.system.leaves(); ++l) eps |= LabelKey(key_eps(kb, l)) << (48 + na + l);
            const int variants = w == 1 ? 1 : 2;
            for (int s = 0; s < variants; ++s) {
                LabelKey e = eps;
                if (s) e ^= ((LabelKey(1) << b.system.leaves()) - 1) << (48 + na);
                r.x[label_index(ab, canonical_key(vals | e, ab.leaves()))] += w * a.x[i] * b.x[j];
            }
        }
    }
    return r;
}

EffectVec deterministic_effect(const SystemType& s) { return EffectVec{s, RatVec(s.dimension(), Rat(1))}; }

Rat pair(const EffectVec& e, const StateVec& r) {
    if (!(e.system == r.system)) throw std::invalid_argument("pair: system mismatch");
    return dot(e.x, r.x);
}

bool is_admissible_state(const StateVec& r) {
    Rat t;
    for (const auto& c : r.x) {
        if (sgn(c) < 0) return false;
        t += c;
    }
    return t <= 1;
}

bool is_deterministic_state(const StateVec& r) {
    return is_admissible_state(r) && std::accumulate(r.x.begin(), r.x.end(), Rat(0)) == 1;
}

// ---- maps ------------------------------------------------------------------------

SystemType probe_extended(const SystemType& s) {
    if (s.theory == Theory::CT) return s;
    SystemType e = s;
    e.dims.push_back(1);
    return e;
}

namespace {

// Index of (label of s, probe sign bit) in probe_extended(s), s nontrivial.
std::size_t ext_index(std::size_t idx, int probe_bit) { return 2 * idx + static_cast<std::size_t>(probe_bit); }

}  // namespace

RatMat TransfMap::local() const {
    if (in.theory == Theory::CT) return ext;
    RatMat m(out.dimension(), in.dimension());
    const Rat w = in.trivial() ? Rat(1) : Rat(1, 2);
    for (std::size_t j = 0; j < in.dimension(); ++j)
        for (int s = 0; s < (in.trivial() ? 1 : 2); ++s) {
            const std::size_t c = in.trivial() ? 0 : ext_index(j, s);
            for (std::size_t i = 0; i < out.dimension(); ++i)
                for (int t = 0; t < (out.trivial() ? 1 : 2); ++t) {
                    const std::size_t r = out.trivial() ? 0 : ext_index(i, t);
                    if (sgn(ext(r, c)) != 0) m(i, j) += w * ext(r, c);
                }
        }
    return m;
}

TransfMap identity_map(const SystemType& s) {
    std::size_t d = probe_extended(s).dimension();
    return TransfMap{s, s, RatMat::identity(d), {AdmissibilityKind::Canonical, 0, "permutation"}};
}

TransfMap zero_map(const SystemType& in, const SystemType& out) {
    return TransfMap{in, out, RatMat(probe_extended(out).dimension(), probe_extended(in).dimension()),
                     {AdmissibilityKind::Canonical, 0, "null"}};
}

TransfMap state_map(const StateVec& r) {
    TransfMap t{SystemType{r.system.theory, {}}, r.system, RatMat(probe_extended(r.system).dimension(), 1), {}};
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        if (r.system.theory == Theory::CT || r.system.trivial()) {
            t.ext(i, 0) = r.x[i];
        } else {
            t.ext(ext_index(i, 0), 0) = r.x[i] / 2;
            t.ext(ext_index(i, 1), 0) = r.x[i] / 2;
        }
    }
    return t;
}

TransfMap effect_map(const EffectVec& e) {
    TransfMap t{e.system, SystemType{e.system.theory, {}}, RatMat(1, probe_extended(e.system).dimension()), {}};
    for (std::size_t i = 0; i < e.x.size(); ++i) {
        if (e.system.theory == Theory::CT || e.system.trivial()) {
            t.ext(0, i) = e.x[i];
        } else {
            t.ext(0, ext_index(i, 0)) = e.x[i];
            t.ext(0, ext_index(i, 1)) = e.x[i];
        }
    }
    return t;
}

TransfMap permutation_map(const SystemType& in, const std::vector<std::size_t>& perm) {
    const std::size_t n = in.leaves();
    if (perm.size() != n) throw std::invalid_argument("permutation_map: wrong length");
    std::vector<bool> seen(n, false);
    SystemType out{in.theory, {}};
    for (std::size_t k = 0; k < n; ++k) {
        if (perm[k] >= n || seen[perm[k]]) throw std::invalid_argument("permutation_map: not a permutation");
        seen[perm[k]] = true;
        out.dims.push_back(in.dims[perm[k]]);
    }
    const SystemType ein = probe_extended(in), eout = probe_extended(out);
    const std::size_t m = ein.leaves();
    TransfMap t{in, out, RatMat(eout.dimension(), ein.dimension()), {AdmissibilityKind::Canonical, 0, "permutation"}};
    for (std::size_t c = 0; c < ein.dimension(); ++c) {
        LabelKey k = label_key(ein, c), o = 0;
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t from = j < n ? perm[j] : j;
            o |= LabelKey(key_val(k, from)) << (4 * j);
            o |= LabelKey(key_eps(k, from)) << (48 + j);
        }
        t.ext(label_index(eout, canonical_key(o, m)), c) = 1;
    }
    return t;
}

TransfMap scaled(const Rat& c, const TransfMap& t) {
    TransfMap r = t;
    r.ext = c * t.ext;
    r.admissibility = {};
    return r;
}

TransfMap sum(const TransfMap& a, const TransfMap& b) {
    if (!(a.in == b.in) || !(a.out == b.out)) throw std::invalid_argument("sum: endpoint mismatch");
    return TransfMap{a.in, a.out, a.ext + b.ext, {}};
}

TransfMap seq_compose(const TransfMap& g, const TransfMap& t) {
    if (!(g.in == t.out))
        throw std::invalid_argument("seq_compose: " + to_string(t.out) + " does not feed " + to_string(g.in));
    return TransfMap{t.in, g.out, g.ext * t.ext, {}};
}

// ---- lifting -------------------------------------------------------------------------

Lifted::Lifted(const TransfMap& t) : t_(&t) {
    const SystemType eo = probe_extended(t.out);
    const std::size_t mo = t.out.leaves();
    cols_.resize(t.ext.cols());
    for (std::size_t r = 0; r < t.ext.rows(); ++r) {
        const LabelKey k = label_key(eo, r);
        Entry e{0, 0, 0, Rat(0)};
        for (std::size_t j = 0; j < mo; ++j) e.vals |= LabelKey(key_val(k, j)) << (4 * j);
        if (t.out.theory == Theory::BCT && mo > 0) {
            for (std::size_t j = 1; j < mo; ++j)
                if (key_eps(k, j) ^ key_eps(k, 0)) e.rel |= 1u << j;
            e.t = key_eps(k, mo) ^ key_eps(k, 0);
        }
        for (std::size_t c = 0; c < t.ext.cols(); ++c) {
            if (sgn(t.ext(r, c)) == 0) continue;
            Entry x = e;
            x.c = t.ext(r, c);
            cols_[c].push_back(std::move(x));
        }
    }
}

void Lifted::apply(LabelKey key, std::size_t n, const std::vector<std::size_t>& positions, std::size_t insert_at,
                   const Rat& coef, SparseCombo& out) const {
    const TransfMap& t = *t_;
    const bool bct = t.in.theory == Theory::BCT;
    const std::size_t mi = positions.size(), mo = t.out.leaves();
    if (mi != t.in.leaves()) throw std::invalid_argument("lift: position count differs from input leaves");
    std::uint32_t used = 0;
    for (auto p : positions) {
        if (p >= n || (used >> p) & 1) throw std::invalid_argument("lift: bad leaf positions");
        used |= 1u << p;
    }
    std::size_t rest[kMaxLeaves + 1], nr = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!((used >> i) & 1)) rest[nr++] = i;
    if (insert_at > nr) throw std::invalid_argument("lift: insertion point out of range");
    if (nr + mo > kMaxLeaves + 1) throw std::invalid_argument("lift: too many leaves");
    if (bct && nr == 0) throw std::invalid_argument("lift: BCT lifting needs a leaf outside the block");

    std::size_t col = 0;
    for (std::size_t j = 0; j < mi; ++j)
        col = col * static_cast<std::size_t>(t.in.dims[j]) + key_val(key, positions[j]);
    if (bct && mi > 0) {
        const int e0 = key_eps(key, positions[0]);
        std::size_t sg = 0;
        for (std::size_t j = 1; j < mi; ++j) sg = (sg << 1) | static_cast<std::size_t>(key_eps(key, positions[j]) ^ e0);
        sg = (sg << 1) | static_cast<std::size_t>(key_eps(key, rest[0]) ^ e0);
        col = (col << mi) | sg;
    }
    const int er = bct ? key_eps(key, rest[0]) : 0;
    for (const Entry& e : cols_[col]) {
        LabelKey o = 0;
        std::size_t slot = 0;
        auto put = [&](int val, int eps) {
            o |= LabelKey(val) << (4 * slot);
            if (eps) o |= LabelKey(1) << (48 + slot);
            ++slot;
        };
        for (std::size_t i = 0; i < insert_at; ++i) put(key_val(key, rest[i]), bct ? key_eps(key, rest[i]) : 0);
        const int e0 = er ^ e.t;
        for (std::size_t j = 0; j < mo; ++j)
            put(static_cast<int>((e.vals >> (4 * j)) & 0xF), bct ? (e0 ^ static_cast<int>((e.rel >> j) & 1)) : 0);
        for (std::size_t i = insert_at; i < nr; ++i) put(key_val(key, rest[i]), bct ? key_eps(key, rest[i]) : 0);
        Rat& acc = out[bct ? canonical_key(o, slot) : o];
        acc += coef * e.c;
    }
}

SparseCombo apply_to_label(const TransfMap& t, const SystemType& whole, LabelKey key,
                           const std::vector<std::size_t>& positions, std::size_t insert_at) {
    SparseCombo out;
    Lifted(t).apply(key, whole.leaves(), positions, insert_at, Rat(1), out);
    return out;
}

TransfMap par_compose(const TransfMap& t, const TransfMap& g) {
    const SystemType in = compose_systems(t.in, g.in), out = compose_systems(t.out, g.out);
    const SystemType ein = probe_extended(in), eout = probe_extended(out);
    TransfMap r{in, out, RatMat(eout.dimension(), ein.dimension()), {}};
    const Lifted lt(t), lg(g);
    const std::size_t na = t.in.leaves(), nb = t.out.leaves(), nc = g.in.leaves();
    std::vector<std::size_t> pt(na), pg(nc);
    std::iota(pt.begin(), pt.end(), 0);
    std::iota(pg.begin(), pg.end(), nb);
    for (std::size_t c = 0; c < ein.dimension(); ++c) {
        SparseCombo mid, fin;
        lt.apply(label_key(ein, c), ein.leaves(), pt, 0, Rat(1), mid);
        const std::size_t nmid = nb + ein.leaves() - na;
        for (const auto& [k, v] : mid)
            if (sgn(v) != 0) lg.apply(k, nmid, pg, nb, v, fin);
        for (const auto& [k, v] : fin)
            if (sgn(v) != 0) r.ext(label_index(eout, k), c) += v;
    }
    return r;
}

bool is_deterministic(const TransfMap& t) {
    for (std::size_t c = 0; c < t.ext.cols(); ++c) {
        Rat s;
        for (std::size_t r = 0; r < t.ext.rows(); ++r) {
            if (sgn(t.ext(r, c)) < 0) return false;
            s += t.ext(r, c);
        }
        if (s != 1) return false;
    }
    return true;
}

bool is_proportional_to_identity(const TransfMap& t) {
    if (!(t.in == t.out)) return false;
    const Rat c = t.ext(0, 0);
    return t.ext == c * RatMat::identity(t.ext.rows());
}

bool is_vertex_permutation(const TransfMap& t) {
    if (t.ext.rows() != t.ext.cols()) return false;
    std::vector<int> row_hits(t.ext.rows(), 0);
    for (std::size_t c = 0; c < t.ext.cols(); ++c) {
        int hits = 0;
        for (std::size_t r = 0; r < t.ext.rows(); ++r) {
            const Rat& x = t.ext(r, c);
            if (sgn(x) == 0) continue;
            if (x != 1) return false;
            ++hits;
            ++row_hits[r];
        }
        if (hits != 1) return false;
    }
    return std::all_of(row_hits.begin(), row_hits.end(), [](int h) { return h == 1; });
}

// ---- instruments -----------------------------------------------------------------------

Instrument make_instrument(std::vector<std::string> outcomes, std::vector<TransfMap> events) {
    if (outcomes.size() != events.size() || events.empty())
        throw std::invalid_argument("make_instrument: outcome/event count mismatch");
    for (const auto& e : events)
        if (!(e.in == events[0].in) || !(e.out == events[0].out))
            throw std::invalid_argument("make_instrument: events have different endpoints");
    Instrument i{events[0].in, events[0].out, std::move(outcomes), std::move(events)};
    return i;
}

TransfMap full_coarse_graining(const Instrument& i) {
    TransfMap t = i.events.at(0);
    t.admissibility = {};
    for (std::size_t k = 1; k < i.events.size(); ++k) t.ext = t.ext + i.events[k].ext;
    return t;
}

Instrument coarse_grain(const Instrument& i, const std::vector<std::vector<std::size_t>>& partition) {
    std::vector<int> hit(i.size(), 0);
    Instrument out{i.in, i.out, {}, {}};
    for (const auto& block : partition) {
        if (block.empty()) throw PartitionError("coarse_grain: empty block");
        TransfMap t = zero_map(i.in, i.out);
        t.admissibility = {};
        std::string label;
        for (auto k : block) {
            if (k >= i.size()) throw PartitionError("coarse_grain: outcome index out of range");
            ++hit[k];
            t.ext = t.ext + i.events[k].ext;
            label += (label.empty() ? "" : "+") + i.outcomes[k];
        }
        if (block.size() == 1) t.admissibility = i.events[block[0]].admissibility;
        out.outcomes.push_back(label);
        out.events.push_back(std::move(t));
    }
    for (int h : hit)
        if (h != 1) throw PartitionError("coarse_grain: blocks do not partition the outcomes");
    return out;
}

bool is_instrument(const Instrument& i) { return is_deterministic(full_coarse_graining(i)); }

// ---- admissibility and norms ------------------------------------------------------------

std::vector<SystemType> ancillas(Theory th, std::size_t bound, int max_leaf_dim) {
    std::vector<SystemType> out;
    const int lo = th == Theory::CT ? 2 : 1;
    const int hi = max_leaf_dim > 0 ? max_leaf_dim : static_cast<int>(std::min<std::size_t>(bound, kMaxLeafDim));
    std::function<void(std::vector<int>)> rec = [&](std::vector<int> dims) {
        SystemType s{th, dims};
        if (s.dimension() > bound || dims.size() > 6) return;
        out.push_back(s);
        for (int d = dims.empty() ? lo : dims.back(); d <= hi; ++d) {
            dims.push_back(d);
            rec(dims);
            dims.pop_back();
        }
    };
    rec({});
    return out;
}

EffectCheck check_effect(const EffectVec& e, std::size_t ancilla_bound) {
    EffectCheck res;
    const TransfMap em = effect_map(e);
    const Lifted le(em);
    const std::size_t na = e.system.leaves();
    std::vector<std::size_t> pos(na);
    std::iota(pos.begin(), pos.end(), 0);
    for (const auto& env : ancillas(e.system.theory, ancilla_bound)) {
        ++res.ancillas_checked;
        const SystemType whole = compose_systems(e.system, env);
        for (std::size_t c = 0; c < whole.dimension(); ++c) {
            Rat total;
            bool neg = false;
            if (env.trivial()) {
                total = e.x[c];
                neg = sgn(total) < 0;
            } else {
                SparseCombo out;
                le.apply(label_key(whole, c), whole.leaves(), pos, 0, Rat(1), out);
                for (const auto& [k, v] : out) {
                    if (sgn(v) < 0) neg = true;
                    total += v;
                }
            }
            if (neg || total > 1) {
                res.admissible = false;
                res.failure = "E=" + to_string(env) + " label " + label_text(whole, c) + " gives " +
                              (neg ? "a negative coefficient" : "weight " + to_string(total));
                return res;
            }
        }
    }
    return res;
}

bool is_admissible_effect(const EffectVec& e, std::size_t ancilla_bound) { return check_effect(e, ancilla_bound).admissible; }

Rat l1_norm(const RatVec& x) {
    Rat s;
    for (const auto& v : x) s += abs(v);
    return s;
}

Rat base_norm(const StateVec& x) {
    const std::size_t d = x.x.size();
    LPProblem p;
    p.nvars = 2 * d;
    p.eq_a = RatMat(d, 2 * d);
    p.eq_b = x.x;
    for (std::size_t i = 0; i < d; ++i) {
        p.eq_a(i, i) = 1;
        p.eq_a(i, d + i) = -1;
    }
    p.in_a = RatMat::identity(2 * d);
    p.in_b.assign(2 * d, Rat(0));
    p.in_sense.assign(2 * d, Sense::GE);
    p.maximize = RatVec(2 * d, Rat(-1));
    LPOutcome r = lp_solve(p);
    if (r.status != LPStatus::Feasible) throw std::logic_error("base_norm: LP not feasible");
    return -r.objective;
}

StateVec apply_with_ancilla(const TransfMap& t, const SystemType& env, const StateVec& r) {
    const SystemType whole = compose_systems(t.in, env), res = compose_systems(t.out, env);
    if (!(r.system == whole)) throw std::invalid_argument("apply_with_ancilla: state system mismatch");
    StateVec o{res, RatVec(res.dimension())};
    if (env.trivial() || t.in.theory == Theory::CT) {
        if (env.trivial()) {
            o.x = t.local() * r.x;
            return o;
        }
    }
    const Lifted l(t);
    std::vector<std::size_t> pos(t.in.leaves());
    std::iota(pos.begin(), pos.end(), 0);
    SparseCombo acc;
    for (std::size_t c = 0; c < r.x.size(); ++c)
        if (sgn(r.x[c]) != 0) l.apply(label_key(whole, c), whole.leaves(), pos, 0, r.x[c], acc);
    for (const auto& [k, v] : acc) o.x[label_index(res, k)] += v;
    return o;
}

Rat op_norm_transf(const TransfMap& t, std::size_t ancilla_bound) {
    Rat best;
    for (const auto& env : ancillas(t.in.theory, ancilla_bound)) {
        const SystemType whole = compose_systems(t.in, env);
        for (std::size_t c = 0; c < whole.dimension(); ++c) {
            StateVec v = apply_with_ancilla(t, env, vertex_state(whole, c));
            Rat n = l1_norm(v.x);
            if (n > best) best = n;
        }
    }
    return best;
}

Rat instrument_norm(const Instrument& i, std::size_t ancilla_bound) {
    Rat s;
    for (const auto& e : i.events) s += op_norm_transf(e, ancilla_bound);
    return s;
}

}  // namespace optkit
