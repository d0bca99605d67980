#include "optkit/closure.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace optkit {

// ---- conditioning ------------------------------------------------------------------

Instrument condition(const ConditionalSpec& spec) {
    const Instrument& t = spec.base;
    if (spec.branches.size() != t.size()) throw std::invalid_argument("condition: one branch per base outcome required");
    std::size_t n = 0;
    for (const auto& g : spec.branches) {
        if (!(g.in == t.out)) throw std::invalid_argument("condition: branch input differs from base output");
        if (!(g.out == spec.branches[0].out)) throw std::invalid_argument("condition: branches have different outputs");
        n = std::max(n, g.size());
    }
    Instrument r{t.in, spec.branches.at(0).out, {}, {}};
    for (std::size_t x = 0; x < t.size(); ++x) {
        const Instrument& g = spec.branches[x];
        for (std::size_t y = 0; y < n; ++y) {
            if (y < g.size()) {
                r.outcomes.push_back(t.outcomes[x] + "." + g.outcomes[y]);
                r.events.push_back(seq_compose(g.events[y], t.events[x]));
            } else {
                r.outcomes.push_back(t.outcomes[x] + ".null" + std::to_string(y));
                r.events.push_back(zero_map(t.in, r.out));
            }
        }
    }
    return r;
}

std::vector<Instrument> all_coarse_grainings(const Instrument& i, std::size_t max_outcomes) {
    const std::size_t n = i.size();
    if (n > max_outcomes)
        throw std::invalid_argument("all_coarse_grainings: " + std::to_string(n) + " outcomes exceed the cap " +
                                    std::to_string(max_outcomes));
    std::vector<Instrument> out;
    std::vector<std::size_t> rgs(n, 0);  // restricted growth string
    for (;;) {
        std::size_t blocks = n ? *std::max_element(rgs.begin(), rgs.end()) + 1 : 0;
        std::vector<std::vector<std::size_t>> part(blocks);
        for (std::size_t k = 0; k < n; ++k) part[rgs[k]].push_back(k);
        out.push_back(coarse_grain(i, part));
        // next restricted growth string
        std::size_t k = n;
        while (k-- > 1) {
            std::size_t mx = *std::max_element(rgs.begin(), rgs.begin() + std::ptrdiff_t(k));
            if (rgs[k] <= mx) {
                ++rgs[k];
                std::fill(rgs.begin() + std::ptrdiff_t(k) + 1, rgs.end(), 0);
                break;
            }
        }
        if (k == 0 || n <= 1) break;
    }
    return out;
}

namespace {

std::string fingerprint(const Instrument& i) {
    std::string f;
    for (std::size_t k = 0; k < i.size(); ++k) {
        f += i.outcomes[k] + "=";
        for (const auto& x : i.events[k].ext.data()) f += x.get_str() + ",";
        f += ";";
    }
    return f;
}

std::string fingerprint(const TransfMap& t) {
    std::string f = to_string(t.out) + ":";
    for (const auto& x : t.ext.data()) f += x.get_str() + ",";
    return f;
}

}  // namespace

Family close_depth(const std::vector<Instrument>& generators, const SystemType& in, const SystemType& out, int k,
                   std::size_t max_family, bool coarse_grainings) {
    Family fam;
    // chains[j][system] : instruments from `system` to `out` of depth <= j
    std::map<std::string, std::vector<Instrument>> prev, cur;
    std::set<std::string> starts{to_string(in)};
    for (const auto& g : generators) starts.insert(to_string(g.in)), starts.insert(to_string(g.out));
    std::size_t total = 0;
    auto add = [&](std::vector<Instrument>& v, std::set<std::string>& seen, Instrument i) {
        if (total >= max_family) {
            fam.truncated = true;
            return;
        }
        if (seen.insert(fingerprint(i)).second) {
            v.push_back(std::move(i));
            ++total;
        }
    };
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& g : generators)
        if (g.out == out) add(prev[to_string(g.in)], seen[to_string(g.in)], g);
    for (int j = 1; j <= k; ++j) {
        cur = prev;
        for (const auto& t : generators) {
            const auto& opts = prev[to_string(t.out)];
            if (opts.empty()) continue;
            // every assignment of a depth j-1 chain to each outcome of t
            std::vector<std::size_t> pick(t.size(), 0);
            for (;;) {
                ConditionalSpec spec{t, {}};
                for (auto p : pick) spec.branches.push_back(opts[p]);
                add(cur[to_string(t.in)], seen[to_string(t.in)], condition(spec));
                if (fam.truncated) break;
                std::size_t q = 0;
                while (q < pick.size() && ++pick[q] == opts.size()) pick[q++] = 0;
                if (q == pick.size()) break;
            }
        }
        prev = std::move(cur);
    }
    for (auto& i : prev[to_string(in)]) {
        if (coarse_grainings && i.size() <= 8) {
            std::set<std::string> s;
            for (auto& c : all_coarse_grainings(i))
                if (s.insert(fingerprint(c)).second) fam.instruments.push_back(std::move(c));
        } else {
            fam.instruments.push_back(std::move(i));
        }
    }
    fam.report = std::to_string(fam.instruments.size()) + " instruments at depth " + std::to_string(k) +
                 (fam.truncated ? " (truncated at " + std::to_string(max_family) + ")" : "");
    return fam;
}

Instrument jellyfish_round(const SystemType& m, const StateVec& prep, const std::vector<std::size_t>& measured) {
    const SystemType mp = compose_systems(m, prep.system);
    TransfMap t0 = par_compose(identity_map(m), state_map(prep));
    std::vector<bool> isq(mp.leaves(), false);
    std::vector<std::size_t> order;
    SystemType q{m.theory, {}}, rest{m.theory, {}};
    for (auto p : measured) {
        if (p >= mp.leaves() || isq[p]) throw std::invalid_argument("jellyfish_round: bad measured leaves");
        isq[p] = true;
        order.push_back(p);
        q.dims.push_back(mp.dims[p]);
    }
    for (std::size_t i = 0; i < mp.leaves(); ++i)
        if (!isq[i]) {
            order.push_back(i);
            rest.dims.push_back(mp.dims[i]);
        }
    TransfMap front = seq_compose(permutation_map(mp, order), t0);
    Instrument r{m, rest, {}, {}};
    if (q.trivial()) {
        r.outcomes.push_back("-");
        r.events.push_back(front);
        return r;
    }
    for (std::size_t l = 0; l < q.dimension(); ++l) {
        EffectVec e{q, RatVec(q.dimension())};
        e.x[l] = 1;
        r.outcomes.push_back(label_text(q, l));
        r.events.push_back(seq_compose(par_compose(effect_map(e), identity_map(rest)), front));
    }
    return r;
}

namespace {

std::vector<int> allowed_leaf_dims(Theory th, int max_leaf, Catalogue cat) {
    std::vector<int> out;
    for (int d = th == Theory::CT ? 2 : 1; d <= max_leaf; ++d)
        if (in_catalogue(d, cat)) out.push_back(d);
    return out;
}

std::vector<SystemType> prepared_systems(Theory th, std::size_t bound, const std::vector<int>& leaf_dims) {
    std::vector<SystemType> out;
    std::function<void(std::vector<int>&, std::size_t)> rec = [&](std::vector<int>& cur, std::size_t from) {
        SystemType s{th, cur};
        if (s.dimension() > bound || cur.size() > kMaxLeaves / 2) return;
        out.push_back(s);
        for (std::size_t i = from; i < leaf_dims.size(); ++i) {
            cur.push_back(leaf_dims[i]);
            rec(cur, i);
            cur.pop_back();
        }
    };
    std::vector<int> cur;
    rec(cur, 0);
    return out;
}

int max_leaf(const SystemType& s) {
    int m = 1;
    for (int d : s.dims) m = std::max(m, d);
    return m;
}

std::vector<std::vector<std::size_t>> arrangements(const std::vector<int>& from, const std::vector<int>& to) {
    // perms p with from[p[k]] == to[k]
    std::vector<std::vector<std::size_t>> out;
    if (from.size() != to.size()) return out;
    std::vector<std::size_t> p(from.size());
    std::iota(p.begin(), p.end(), 0);
    do {
        bool ok = true;
        for (std::size_t k = 0; k < p.size() && ok; ++k) ok = from[p[k]] == to[k];
        if (ok) out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
}

}  // namespace

ChannelFamily sc_channel_family(const TheoryHandle& h, const SystemType& in, const SystemType& out,
                                std::size_t max_family) {
    ChannelFamily fam;
    const auto leaf_dims = allowed_leaf_dims(h.theory, std::max(max_leaf(in), max_leaf(out)), h.catalogue);
    const auto psys = prepared_systems(h.theory, h.ancilla_bound, leaf_dims);
    const std::size_t cap_dim = std::max({h.ancilla_bound, in.dimension(), out.dimension()});
    std::map<std::pair<std::string, int>, std::vector<TransfMap>> memo;
    bool truncated = false;

    std::function<const std::vector<TransfMap>&(const SystemType&, int)> ch =
        [&](const SystemType& m, int r) -> const std::vector<TransfMap>& {
        auto key = std::make_pair(to_string(m), r);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::vector<TransfMap> res;
        std::set<std::string> seen;
        auto push = [&](TransfMap t) {
            if (res.size() >= max_family) {
                truncated = true;
                return;
            }
            if (seen.insert(fingerprint(t)).second) res.push_back(std::move(t));
        };
        if (r == 0) {
            for (const auto& p : arrangements(m.dims, out.dims)) push(permutation_map(m, p));
        } else {
            for (const auto& p : psys) {
                std::vector<StateVec> preps =
                    p.trivial() ? std::vector<StateVec>{StateVec{p, RatVec{Rat(1)}}} : grid_states(p, h.grid);
                const SystemType mp = compose_systems(m, p);
                for (const auto& rho : preps) {
                    for (std::uint32_t mask = 0; mask < (1u << mp.leaves()); ++mask) {
                        SystemType q{m.theory, {}}, rest{m.theory, {}};
                        std::vector<std::size_t> meas;
                        for (std::size_t i = 0; i < mp.leaves(); ++i) {
                            if ((mask >> i) & 1) {
                                meas.push_back(i);
                                q.dims.push_back(mp.dims[i]);
                            } else {
                                rest.dims.push_back(mp.dims[i]);
                            }
                        }
                        if (q.dimension() > cap_dim || rest.dimension() > cap_dim) continue;
                        const auto& opts = ch(rest, r - 1);
                        if (opts.empty()) continue;
                        Instrument j = jellyfish_round(m, rho, meas);
                        // Minkowski sum over outcomes of {G o J_o}, deduplicated at every step
                        std::map<std::string, TransfMap> partial{{"", zero_map(m, out)}};
                        for (std::size_t o = 0; o < j.size() && !truncated; ++o) {
                            std::map<std::string, TransfMap> terms;
                            for (const auto& g : opts) {
                                TransfMap c = seq_compose(g, j.events[o]);
                                terms.emplace(fingerprint(c), std::move(c));
                            }
                            std::map<std::string, TransfMap> next;
                            for (const auto& [fa, x] : partial)
                                for (const auto& [fb, y] : terms) {
                                    TransfMap z = x;
                                    z.ext = z.ext + y.ext;
                                    next.emplace(fingerprint(z), std::move(z));
                                    if (next.size() > max_family) {
                                        truncated = true;
                                        break;
                                    }
                                }
                            partial = std::move(next);
                        }
                        for (auto& [f, t] : partial) push(std::move(t));
                        if (truncated) break;
                    }
                }
            }
        }
        return memo.emplace(key, std::move(res)).first->second;
    };
    fam.channels = ch(in, h.depth + 1);
    fam.generated = fam.channels.size();
    fam.note = "full coarse-grainings of depth-" + std::to_string(h.depth) + " chains, grid 2^-" +
               std::to_string(h.grid) + (truncated ? ", truncated at " + std::to_string(max_family) : "");
    return fam;
}

// ---- chain search engine ---------------------------------------------------------------

std::string to_string(SearchGoal g) {
    switch (g) {
        case SearchGoal::IdentityDecomposition: return "identity-decomposition";
        case SearchGoal::Broadcasting: return "broadcasting";
        case SearchGoal::Reversible: return "reversible";
    }
    return "?";
}

namespace {

struct Entry {
    LabelKey k;
    std::int64_t n;
};
using Col = std::vector<Entry>;

// A branch of a conditional chain: the event from A (with probe) into M (with probe),
// one sparse column per ext vertex of A. Entries are n / 2^den.
struct Branch {
    std::vector<int> dims;
    std::vector<Col> cols;
    int den = 0;
};

inline LabelKey put(LabelKey k, std::size_t i, int val, int eps) {
    k |= LabelKey(val) << (4 * i);
    if (eps) k |= LabelKey(1) << (48 + i);
    return k;
}

void normalize(Col& c) {
    std::sort(c.begin(), c.end(), [](const Entry& a, const Entry& b) { return a.k < b.k; });
    std::size_t w = 0;
    for (std::size_t i = 0; i < c.size();) {
        LabelKey k = c[i].k;
        std::int64_t s = 0;
        while (i < c.size() && c[i].k == k) s += c[i++].n;
        if (s != 0) c[w++] = {k, s};
    }
    c.resize(w);
}

struct VecHash {
    std::size_t operator()(const std::vector<std::int64_t>& v) const {
        std::size_t h = v.size();
        for (auto x : v) h ^= std::hash<std::int64_t>()(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

using Sig = std::vector<std::int16_t>;

struct Choice {
    int psys = -1;
    std::size_t vertex = 0;
    std::uint32_t mask = 0;
    std::vector<std::size_t> out_perm;  // final nodes
};

struct Node {
    int status = 0;  // 0 impossible, 1 completable, 2 completable with a non-proportional event
    Choice best;
    std::vector<Sig> sigs;
};

class Engine {
public:
    Engine(const SystemType& a, SearchGoal goal, const SearchBudget& b) : a_(a), goal_(goal), b_(b) {
        bct_ = a.theory == Theory::BCT;
        ext_a_ = probe_extended(a);
        ncols_ = ext_a_.dimension();
        for (std::size_t c = 0; c < ncols_; ++c) col_keys_.push_back(label_key(ext_a_, c));
        out_dims_ = a.dims;
        if (goal == SearchGoal::Broadcasting) out_dims_.insert(out_dims_.end(), a.dims.begin(), a.dims.end());
        out_sys_ = SystemType{a.theory, out_dims_};
        sorted_out_ = out_dims_;
        std::sort(sorted_out_.begin(), sorted_out_.end());
        int ml = b.max_leaf_dim > 0 ? b.max_leaf_dim : max_leaf(a);
        psys_ = prepared_systems(a.theory, b.ancilla_bound, allowed_leaf_dims(a.theory, ml, b.catalogue));
        cap_dim_ = std::max(b.ancilla_bound, out_sys_.dimension());
    }

    Branch root() const {
        Branch r{a_.dims, std::vector<Col>(ncols_), 0};
        for (std::size_t c = 0; c < ncols_; ++c) r.cols[c].push_back({col_keys_[c], 1});
        return r;
    }

    std::size_t leaves(const Branch& b) const { return b.dims.size() + (bct_ ? 1 : 0); }

    Branch append(const Branch& b, const SystemType& p, LabelKey pv) const {
        if (p.trivial()) return b;
        const std::size_t m = b.dims.size(), np = p.leaves();
        Branch r{b.dims, std::vector<Col>(ncols_), b.den + (bct_ ? 1 : 0)};
        r.dims.insert(r.dims.end(), p.dims.begin(), p.dims.end());
        for (std::size_t c = 0; c < ncols_; ++c) {
            for (const auto& e : b.cols[c]) {
                LabelKey base = 0;
                for (std::size_t i = 0; i < m; ++i) base = put(base, i, key_val(e.k, i), key_eps(e.k, i));
                if (!bct_) {
                    LabelKey k = base;
                    for (std::size_t j = 0; j < np; ++j) k = put(k, m + j, key_val(pv, j), 0);
                    r.cols[c].push_back({k, e.n});
                    continue;
                }
                const int es = key_eps(e.k, m);
                for (int f = 0; f < 2; ++f) {
                    LabelKey k = base;
                    for (std::size_t j = 0; j < np; ++j) k = put(k, m + j, key_val(pv, j), key_eps(pv, j) ^ f);
                    k = put(k, m + np, 0, es);
                    r.cols[c].push_back({canonical_key(k, m + np + 1), e.n});
                }
            }
            normalize(r.cols[c]);
        }
        return r;
    }

    // Outcome key over the measured leaves -> branch over the remaining leaves.
    std::map<LabelKey, Branch> measure(const Branch& b, std::uint32_t mask) const {
        std::map<LabelKey, Branch> out;
        const std::size_t n = leaves(b), m = b.dims.size();
        std::vector<std::size_t> q, rest;
        std::vector<int> rdims;
        for (std::size_t i = 0; i < n; ++i) {
            if (i < m && ((mask >> i) & 1)) {
                q.push_back(i);
            } else {
                rest.push_back(i);
                if (i < m) rdims.push_back(b.dims[i]);
            }
        }
        for (std::size_t c = 0; c < ncols_; ++c) {
            for (const auto& e : b.cols[c]) {
                LabelKey ok = 0, rk = 0;
                for (std::size_t j = 0; j < q.size(); ++j) ok = put(ok, j, key_val(e.k, q[j]), bct_ ? key_eps(e.k, q[j]) : 0);
                for (std::size_t j = 0; j < rest.size(); ++j)
                    rk = put(rk, j, key_val(e.k, rest[j]), bct_ ? key_eps(e.k, rest[j]) : 0);
                if (bct_) {
                    ok = canonical_key(ok, q.size());
                    rk = canonical_key(rk, rest.size());
                }
                auto it = out.find(ok);
                if (it == out.end()) it = out.emplace(ok, Branch{rdims, std::vector<Col>(ncols_), b.den}).first;
                it->second.cols[c].push_back({rk, e.n});
            }
        }
        for (auto& [k, br] : out)
            for (auto& col : br.cols) normalize(col);
        return out;
    }

    // Children in label-index order of the measured system.
    std::vector<std::pair<LabelKey, Branch>> ordered(std::map<LabelKey, Branch> ch, const SystemType& q) const {
        std::vector<std::pair<LabelKey, Branch>> v(std::make_move_iterator(ch.begin()), std::make_move_iterator(ch.end()));
        if (!q.trivial())
            std::sort(v.begin(), v.end(),
                      [&](const auto& x, const auto& y) { return label_index(q, x.first) < label_index(q, y.first); });
        return v;
    }

    bool disjoint(const Branch& b) const {
        std::vector<std::pair<LabelKey, std::size_t>> all;
        for (std::size_t c = 0; c < ncols_; ++c)
            for (const auto& e : b.cols[c]) all.push_back({e.k, c});
        std::sort(all.begin(), all.end());
        for (std::size_t i = 1; i < all.size(); ++i)
            if (all[i].first == all[i - 1].first && all[i].second != all[i - 1].second) return false;
        return true;
    }

    bool nonconstant(const Branch& b) const {
        std::int64_t first = -1;
        for (const auto& col : b.cols) {
            std::int64_t s = 0;
            for (const auto& e : col) s += e.n;
            if (first < 0) first = s;
            else if (s != first) return true;
        }
        return false;
    }

    // Leaf j of the result is leaf perm[j] of b; the probe stays last.
    Branch permute(const Branch& b, const std::vector<std::size_t>& perm) const {
        const std::size_t m = b.dims.size();
        Branch r{std::vector<int>(m), std::vector<Col>(ncols_), b.den};
        for (std::size_t j = 0; j < m; ++j) r.dims[j] = b.dims[perm[j]];
        for (std::size_t c = 0; c < ncols_; ++c) {
            for (const auto& e : b.cols[c]) {
                LabelKey k = 0;
                for (std::size_t j = 0; j < m; ++j) k = put(k, j, key_val(e.k, perm[j]), key_eps(e.k, perm[j]));
                if (bct_) k = canonical_key(put(k, m, 0, key_eps(e.k, m)), m + 1);
                r.cols[c].push_back({k, e.n});
            }
            normalize(r.cols[c]);
        }
        return r;
    }

    std::vector<std::int64_t> serialize(const Branch& b, std::int64_t g) const {
        std::vector<std::int64_t> s{std::int64_t(b.dims.size())};
        for (int d : b.dims) s.push_back(d);
        for (const auto& col : b.cols) {
            s.push_back(std::int64_t(col.size()));
            for (const auto& e : col) {
                s.push_back(std::int64_t(e.k));
                s.push_back(e.n / g);
            }
        }
        return s;
    }

    std::pair<std::vector<std::int64_t>, std::vector<std::size_t>> canonical(const Branch& b) const {
        std::int64_t g = 0;
        for (const auto& col : b.cols)
            for (const auto& e : col) g = std::gcd(g, e.n);
        if (g == 0) g = 1;
        const std::size_t m = b.dims.size();
        std::vector<std::size_t> p(m);
        std::iota(p.begin(), p.end(), 0);
        std::vector<std::int64_t> best;
        std::vector<std::size_t> best_p = p;
        bool any = false;
        do {
            bool sorted = true;
            for (std::size_t j = 1; j < m && sorted; ++j) sorted = b.dims[p[j - 1]] <= b.dims[p[j]];
            if (!sorted) continue;
            auto s = serialize(permute(b, p), g);
            if (!any || s < best) {
                best = std::move(s);
                best_p = p;
                any = true;
            }
        } while (std::next_permutation(p.begin(), p.end()));
        return {std::move(best), best_p};
    }

    // Target key of a single-entry column after arranging the leaves by perm.
    LabelKey arranged_key(LabelKey k, std::size_t m, const std::vector<std::size_t>& perm) const {
        LabelKey r = 0;
        for (std::size_t j = 0; j < perm.size(); ++j) r = put(r, j, key_val(k, perm[j]), key_eps(k, perm[j]));
        if (bct_) r = canonical_key(put(r, perm.size(), 0, key_eps(k, m)), perm.size() + 1);
        return r;
    }

    LabelKey drop_to(LabelKey k, std::size_t m, const std::vector<std::size_t>& keep) const {
        return arranged_key(k, m, keep);
    }

    void accept(const Branch& b, Node& node) const {
        std::vector<int> sd = b.dims;
        std::sort(sd.begin(), sd.end());
        if (sd != sorted_out_) return;
        const std::size_t m = b.dims.size();
        std::set<Sig> sigs;
        for (const auto& perm : arrangements(b.dims, out_dims_)) {
            bool ok = true;
            Sig sig(ncols_, -1);
            std::vector<bool> hit(ext_out_size(), false);
            for (std::size_t c = 0; c < ncols_ && ok; ++c) {
                const Col& col = b.cols[c];
                if (col.empty()) continue;
                if (goal_ == SearchGoal::Broadcasting) {
                    const std::size_t na = a_.leaves();
                    std::vector<std::size_t> first(perm.begin(), perm.begin() + std::ptrdiff_t(na));
                    std::vector<std::size_t> second(perm.begin() + std::ptrdiff_t(na), perm.end());
                    for (const auto& e : col)
                        ok = ok && drop_to(e.k, m, first) == col_keys_[c] && drop_to(e.k, m, second) == col_keys_[c];
                    continue;
                }
                if (col.size() != 1) {
                    ok = false;
                    break;
                }
                LabelKey k = arranged_key(col[0].k, m, perm);
                if (goal_ == SearchGoal::IdentityDecomposition) {
                    ok = k == col_keys_[c];
                } else {
                    std::size_t idx = label_index(ext_a_, k);
                    if (hit[idx]) ok = false;
                    hit[idx] = true;
                    sig[c] = std::int16_t(idx);
                }
            }
            if (!ok) continue;
            if (goal_ == SearchGoal::Reversible) {
                sigs.insert(sig);
                if (node.status == 0) node.best.out_perm = perm;
                node.status = 1;
            } else {
                node.status = 1;
                node.best.out_perm = perm;
                break;
            }
        }
        node.sigs.assign(sigs.begin(), sigs.end());
    }

    std::size_t ext_out_size() const { return probe_extended(out_sys_).dimension(); }

    static bool merge(const Sig& a, const Sig& b, Sig& out) {
        out = a;
        std::vector<std::int16_t> used;
        for (std::size_t c = 0; c < a.size(); ++c) {
            if (b[c] < 0) continue;
            if (out[c] >= 0 && out[c] != b[c]) return false;
            out[c] = b[c];
        }
        std::vector<bool> seen(a.size() * 2 + 1, false);
        for (auto x : out) {
            if (x < 0) continue;
            if (std::size_t(x) >= seen.size()) seen.resize(std::size_t(x) + 1, false);
            if (seen[std::size_t(x)]) return false;
            seen[std::size_t(x)] = true;
        }
        return true;
    }

    // Node index for the branch with r rounds left.
    std::size_t solve(const Branch& raw, int r) {
        auto [key, perm] = canonical(raw);
        key.push_back(r);
        if (auto it = index_.find(key); it != index_.end()) return it->second;
        if (nodes_.size() >= b_.node_limit) {
            truncated_ = true;
            return fail_node();
        }
        const std::size_t id = nodes_.size();
        nodes_.emplace_back();
        index_.emplace(std::move(key), id);
        Branch cb = permute(raw, perm);
        Node node;
        if (r == 0) accept(cb, node);
        else explore(cb, r, node);
        nodes_[id] = std::move(node);
        return id;
    }

    std::size_t fail_node() {
        if (fail_ == SIZE_MAX) {
            fail_ = nodes_.size();
            nodes_.emplace_back();
        }
        return fail_;
    }

    void explore(const Branch& cb, int r, Node& node) {
        std::set<Sig> sigs;
        for (std::size_t pi = 0; pi < psys_.size(); ++pi) {
            const SystemType& p = psys_[pi];
            for (std::size_t v = 0; v < p.dimension(); ++v) {
                Branch ab = append(cb, p, label_key(p, v));
                const std::size_t nl = ab.dims.size();
                for (std::uint32_t mask = 0; mask < (1u << nl); ++mask) {
                    SystemType q{a_.theory, {}}, rest{a_.theory, {}};
                    for (std::size_t i = 0; i < nl; ++i) ((mask >> i) & 1 ? q : rest).dims.push_back(ab.dims[i]);
                    if (q.dimension() > cap_dim_ || rest.dimension() > cap_dim_) continue;
                    if (r == 1) {
                        auto sd = rest.dims;
                        std::sort(sd.begin(), sd.end());
                        if (sd != sorted_out_) continue;
                    }
                    ++stats_.choices;
                    auto children = measure(ab, mask);
                    bool ok = true;
                    for (const auto& [k, ch] : children) ok = ok && disjoint(ch);
                    if (!ok) {
                        ++stats_.rejected;
                        continue;
                    }
                    int status = 1;
                    bool nt = false;
                    std::vector<Sig> merged{Sig(ncols_, -1)};
                    for (const auto& [k, ch] : children) {
                        std::size_t cid = solve(ch, r - 1);
                        const Node& cn = nodes_[cid];
                        if (cn.status == 0) {
                            status = 0;
                            break;
                        }
                        if (cn.status == 2 || nonconstant(ch)) nt = true;
                        if (goal_ == SearchGoal::Reversible) {
                            std::vector<Sig> next;
                            for (const auto& s : merged)
                                for (const auto& t : cn.sigs) {
                                    Sig u;
                                    if (merge(s, t, u)) next.push_back(std::move(u));
                                }
                            std::sort(next.begin(), next.end());
                            next.erase(std::unique(next.begin(), next.end()), next.end());
                            if (next.size() > b_.signature_limit) {
                                next.resize(b_.signature_limit);
                                truncated_ = true;
                            }
                            merged = std::move(next);
                            if (merged.empty()) {
                                status = 0;
                                break;
                            }
                        }
                    }
                    if (status == 0) continue;
                    if (goal_ == SearchGoal::IdentityDecomposition && nt) status = 2;
                    if (status > node.status) {
                        node.status = status;
                        node.best = Choice{int(pi), v, mask, {}};
                    }
                    if (goal_ == SearchGoal::Reversible) {
                        for (auto& s : merged) sigs.insert(std::move(s));
                        if (sigs.size() > b_.signature_limit) truncated_ = true;
                    } else if ((goal_ == SearchGoal::IdentityDecomposition && node.status == 2) ||
                               (goal_ == SearchGoal::Broadcasting && node.status == 1)) {
                        return;
                    }
                }
            }
        }
        node.sigs.assign(sigs.begin(), sigs.end());
    }

    // Replays the stored choices and emits the final events.
    void replay(const Branch& raw, int r, std::vector<std::string>& path, Instrument& out,
                std::vector<std::string>& steps, std::vector<WitnessNode>& plan) {
        auto [key, perm] = canonical(raw);
        key.push_back(r);
        const Node& node = nodes_[index_.at(key)];
        Branch cb = permute(raw, perm);
        std::string dotted;
        for (const auto& s : path) dotted += (dotted.empty() ? "" : ".") + s;
        WitnessNode wn{path, SystemType{a_.theory, raw.dims}, perm, r == 0, {}, {}};
        if (r == 0) {
            wn.output = node.best.out_perm;
            plan.push_back(wn);
            emit(cb, node.best.out_perm, dotted, out);
            return;
        }
        const SystemType& p = psys_[std::size_t(node.best.psys)];
        Branch ab = append(cb, p, label_key(p, node.best.vertex));
        SystemType q{a_.theory, {}};
        std::string qs;
        wn.round = ChainRound{p, node.best.vertex, {}};
        for (std::size_t i = 0; i < ab.dims.size(); ++i)
            if ((node.best.mask >> i) & 1) {
                q.dims.push_back(ab.dims[i]);
                wn.round.measured.push_back(i);
                qs += (qs.empty() ? "" : ",") + std::to_string(i);
            }
        plan.push_back(wn);
        steps.push_back((dotted.empty() ? std::string("root") : dotted) + ": M=" +
                        to_string(SystemType{a_.theory, cb.dims}) + ", prepare " + to_string(p) + " " +
                        label_text(p, node.best.vertex) + ", measure leaves {" + qs + "}");
        for (const auto& [k, ch] : ordered(measure(ab, node.best.mask), q)) {
            path.push_back(q.trivial() ? "-" : label_text(q, label_index(q, k)));
            replay(ch, r - 1, path, out, steps, plan);
            path.pop_back();
        }
    }

    void emit(const Branch& b, const std::vector<std::size_t>& perm, const std::string& path, Instrument& out) const {
        SystemType o{a_.theory, {}};
        for (auto p : perm) o.dims.push_back(b.dims[p]);
        const SystemType eo = probe_extended(o);
        TransfMap t{a_, o, RatMat(eo.dimension(), ncols_), {}};
        const Rat scale = Rat(1) / Rat(mpz_class(1) << b.den);
        for (std::size_t c = 0; c < ncols_; ++c)
            for (const auto& e : b.cols[c])
                t.ext(label_index(eo, arranged_key(e.k, b.dims.size(), perm)), c) += Rat(mpz_class(e.n)) * scale;
        out.outcomes.push_back(path.empty() ? "-" : path);
        out.events.push_back(std::move(t));
    }

    SystemType a_;
    SearchGoal goal_;
    SearchBudget b_;
    bool bct_ = true;
    SystemType ext_a_, out_sys_;
    std::size_t ncols_ = 0;
    std::vector<LabelKey> col_keys_;
    std::vector<int> out_dims_, sorted_out_;
    std::vector<SystemType> psys_;
    std::size_t cap_dim_ = 0;
    std::unordered_map<std::vector<std::int64_t>, std::size_t, VecHash> index_;
    std::vector<Node> nodes_;
    std::size_t fail_ = SIZE_MAX;
    bool truncated_ = false;
    SearchStats stats_;

    friend SearchResult optkit::search_chains(const SystemType&, SearchGoal, const SearchBudget&);
    friend ExplicitChain optkit::run_chain(
        const SystemType&,
        const std::function<std::optional<ChainRound>(const std::vector<std::string>&, const SystemType&)>&,
        const std::function<std::vector<std::size_t>(const std::vector<std::string>&, const SystemType&)>&);
};

}  // namespace

SearchResult search_chains(const SystemType& a, SearchGoal goal, const SearchBudget& b) {
    if (a.trivial()) throw std::invalid_argument("search_chains: trivial system");
    Engine eng(a, goal, b);
    SearchResult res;
    res.goal = goal;
    Branch root = eng.root();
    const int rounds = b.depth + 1;
    std::size_t id = eng.solve(root, rounds);
    const Node& n = eng.nodes_[id];
    res.truncated = eng.truncated_;
    res.stats = eng.stats_;
    res.stats.nodes = eng.nodes_.size();
    res.witness = Instrument{a, eng.out_sys_, {}, {}};
    if (goal == SearchGoal::IdentityDecomposition) res.found = n.status == 2;
    if (goal == SearchGoal::Broadcasting) res.found = n.status == 1;
    if (goal == SearchGoal::Reversible) {
        for (const auto& s : n.sigs) {
            if (std::find(s.begin(), s.end(), std::int16_t(-1)) != s.end()) continue;
            res.permutations.emplace_back(s.begin(), s.end());
        }
        res.found = !res.permutations.empty();
    } else if (res.found) {
        std::vector<std::string> path;
        eng.replay(root, rounds, path, res.witness, res.witness_steps, res.witness_plan);
    }
    return res;
}

Instrument recompose_dense(const SystemType& a, const std::vector<WitnessNode>& plan) {
    std::map<std::vector<std::string>, const WitnessNode*> by_path;
    for (const auto& n : plan) by_path[n.path] = &n;
    Instrument out{a, a, {}, {}};
    bool first = true;
    std::function<void(const TransfMap&, std::vector<std::string>&)> go = [&](const TransfMap& t,
                                                                          std::vector<std::string>& path) {
        auto it = by_path.find(path);
        if (it == by_path.end()) {
            if (!(t == zero_map(t.in, t.out))) throw std::runtime_error("recompose_dense: nonzero branch outside the plan");
            return;
        }
        const WitnessNode& n = *it->second;
        if (!(n.m == t.out)) throw std::runtime_error("recompose_dense: system mismatch on a branch");
        TransfMap f = seq_compose(permutation_map(n.m, n.frame), t);
        std::string dotted;
        for (const auto& s : path) dotted += (dotted.empty() ? "" : ".") + s;
        if (n.final) {
            TransfMap e = seq_compose(permutation_map(f.out, n.output), f);
            if (first) {
                out.out = e.out;
                first = false;
            }
            out.outcomes.push_back(dotted.empty() ? "-" : dotted);
            out.events.push_back(std::move(e));
            return;
        }
        Instrument j = jellyfish_round(f.out, vertex_state(n.round.prepared, n.round.vertex), n.round.measured);
        for (std::size_t o = 0; o < j.size(); ++o) {
            TransfMap g = seq_compose(j.events[o], f);
            if (g == zero_map(g.in, g.out)) continue;
            path.push_back(j.outcomes[o]);
            go(g, path);
            path.pop_back();
        }
    };
    std::vector<std::string> path;
    go(identity_map(a), path);
    return out;
}

ExplicitChain run_chain(
    const SystemType& a,
    const std::function<std::optional<ChainRound>(const std::vector<std::string>&, const SystemType&)>& plan,
    const std::function<std::vector<std::size_t>(const std::vector<std::string>&, const SystemType&)>& output_order) {
    SearchBudget b;
    Engine eng(a, SearchGoal::IdentityDecomposition, b);
    ExplicitChain out;
    Instrument inst{a, a, {}, {}};
    std::function<void(const Branch&, std::vector<std::string>&)> go = [&](const Branch& br,
                                                                          std::vector<std::string>& path) {
        SystemType m{a.theory, br.dims};
        auto round = plan(path, m);
        std::string dotted;
        for (const auto& s : path) dotted += (dotted.empty() ? "" : ".") + s;
        if (!round) {
            eng.emit(br, output_order(path, m), dotted, inst);
            return;
        }
        Branch ab = eng.append(br, round->prepared, label_key(round->prepared, round->vertex));
        std::uint32_t mask = 0;
        SystemType q{a.theory, {}};
        for (auto p : round->measured) {
            if (p >= ab.dims.size()) throw std::invalid_argument("run_chain: measured leaf out of range");
            mask |= 1u << p;
        }
        for (std::size_t i = 0; i < ab.dims.size(); ++i)
            if ((mask >> i) & 1) q.dims.push_back(ab.dims[i]);
        for (const auto& [k, ch] : eng.ordered(eng.measure(ab, mask), q)) {
            path.push_back(q.trivial() ? "-" : label_text(q, label_index(q, k)));
            go(ch, path);
            path.pop_back();
        }
    };
    std::vector<std::string> path;
    go(eng.root(), path);
    out.outcomes = std::move(inst.outcomes);
    out.events = std::move(inst.events);
    return out;
}

}  // namespace optkit
