#include "optkit/labelcalc.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace optkit {

// ---- trees -----------------------------------------------------------------

std::size_t CompTree::leaf_count() const { return leaf() ? 1 : kids[0].leaf_count() + kids[1].leaf_count(); }

std::vector<int> CompTree::dims() const {
    if (leaf()) return {dim};
    auto a = kids[0].dims(), b = kids[1].dims();
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

bool CompTree::left_associated() const { return leaf() || (kids[1].leaf() && kids[0].left_associated()); }

CompTree leaf_tree(int dim) { return CompTree{dim, {}}; }

CompTree join(CompTree a, CompTree b) {
    CompTree t;
    t.kids.push_back(std::move(a));
    t.kids.push_back(std::move(b));
    return t;
}

CompTree left_assoc(const std::vector<int>& dims) {
    if (dims.empty()) throw std::invalid_argument("left_assoc: no leaves");
    CompTree t = leaf_tree(dims[0]);
    for (std::size_t i = 1; i < dims.size(); ++i) t = join(std::move(t), leaf_tree(dims[i]));
    return t;
}

std::vector<CompTree> all_bracketings(const std::vector<int>& dims) {
    if (dims.size() == 1) return {leaf_tree(dims[0])};
    std::vector<CompTree> out;
    for (std::size_t k = 1; k < dims.size(); ++k) {
        auto ls = all_bracketings({dims.begin(), dims.begin() + k});
        auto rs = all_bracketings({dims.begin() + k, dims.end()});
        for (const auto& l : ls)
            for (const auto& r : rs) out.push_back(join(l, r));
    }
    return out;
}

// ---- labels ----------------------------------------------------------------

CompTree PureLabel::shape() const {
    if (leaf()) return leaf_tree(dim);
    return join(kids[0].shape(), kids[1].shape());
}

std::vector<int> PureLabel::values() const {
    if (leaf()) return {val};
    auto a = kids[0].values(), b = kids[1].values();
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<int> PureLabel::signs() const {
    if (leaf()) return {};
    auto a = kids[0].signs(), b = kids[1].signs();
    a.insert(a.end(), b.begin(), b.end());
    a.push_back(sign);
    return a;
}

PureLabel leaf_label(int val, int dim) {
    PureLabel l;
    l.val = val;
    l.dim = dim;
    return l;
}

PureLabel join(PureLabel a, PureLabel b, int sign) {
    PureLabel l;
    l.sign = sign;
    l.kids.push_back(std::move(a));
    l.kids.push_back(std::move(b));
    return l;
}

bool operator<(const PureLabel& a, const PureLabel& b) {
    auto va = a.values(), vb = b.values();
    if (va != vb) return va < vb;
    auto sa = a.signs(), sb = b.signs();
    for (std::size_t i = 0; i < std::min(sa.size(), sb.size()); ++i)
        if (sa[i] != sb[i]) return sa[i] > sb[i];  // '+' sorts first
    return sa.size() < sb.size();
}

std::string to_text(const PureLabel& l) {
    if (l.leaf()) return l.val < 0 ? "I" : std::to_string(l.val + 1);
    return "(" + to_text(l.kids[0]) + "," + to_text(l.kids[1]) + ";" + (l.sign > 0 ? "+" : "-") + ")";
}

namespace {

struct Cursor {
    const std::string& s;
    std::size_t i = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("label syntax: " + what + " at column " + std::to_string(i + 1));
    }
    void ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    void expect(char c) {
        ws();
        if (i >= s.size() || s[i] != c) fail(std::string("expected '") + c + "'");
        ++i;
    }
    PureLabel label() {
        ws();
        if (i < s.size() && s[i] == 'I') {
            ++i;
            return leaf_label(-1);
        }
        if (i < s.size() && s[i] == '(') {
            ++i;
            PureLabel a = label();
            expect(',');
            PureLabel b = label();
            expect(';');
            ws();
            if (i >= s.size() || (s[i] != '+' && s[i] != '-')) fail("expected sign");
            int sg = s[i++] == '+' ? 1 : -1;
            expect(')');
            return join(std::move(a), std::move(b), sg);
        }
        std::size_t j = i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        if (j == i) fail("expected leaf index");
        int v = std::stoi(s.substr(j, i - j));
        if (v < 1) fail("leaf index must be >= 1");
        return leaf_label(v - 1);
    }
};

void assign_dims(PureLabel& l, const std::vector<int>& dims, std::size_t& k) {
    if (l.leaf()) {
        if (k >= dims.size()) throw std::invalid_argument("with_dims: too few dimensions");
        l.dim = dims[k++];
        if (l.val >= l.dim) throw std::invalid_argument("with_dims: leaf value exceeds dimension");
        return;
    }
    assign_dims(l.kids[0], dims, k);
    assign_dims(l.kids[1], dims, k);
}

}  // namespace

PureLabel parse_label(const std::string& text) {
    Cursor c{text};
    PureLabel l = c.label();
    c.ws();
    if (c.i != text.size()) c.fail("trailing input");
    return l;
}

PureLabel with_dims(PureLabel l, const std::vector<int>& dims) {
    std::size_t k = 0;
    assign_dims(l, dims, k);
    if (k != dims.size()) throw std::invalid_argument("with_dims: too many dimensions");
    return l;
}

namespace {

void collect(const PureLabel& l, SignedLeaves& out) {
    if (l.leaf()) {
        out.dims.push_back(l.dim);
        out.vals.push_back(l.val);
        out.eps.push_back(1);
        return;
    }
    collect(l.kids[0], out);
    std::size_t mid = out.eps.size();
    collect(l.kids[1], out);
    for (std::size_t k = mid; k < out.eps.size(); ++k) out.eps[k] *= l.sign;
}

PureLabel build(const CompTree& t, const SignedLeaves& s, std::size_t& k) {
    if (t.leaf()) {
        PureLabel l = leaf_label(s.vals[k], s.dims[k]);
        ++k;
        return l;
    }
    std::size_t first_x = k;
    PureLabel a = build(t.kids[0], s, k);
    std::size_t first_y = k;
    PureLabel b = build(t.kids[1], s, k);
    return join(std::move(a), std::move(b), s.eps[first_y] * s.eps[first_x]);
}

PureLabel& node_at(PureLabel& l, const std::string& path) {
    PureLabel* p = &l;
    for (char c : path) {
        if (p->leaf() || (c != 'L' && c != 'R')) throw std::invalid_argument("invalid node position '" + path + "'");
        p = &p->kids[c == 'L' ? 0 : 1];
    }
    return *p;
}

}  // namespace

SignedLeaves to_signed_leaves(const PureLabel& l) {
    SignedLeaves s;
    collect(l, s);
    return s;
}

PureLabel from_signed_leaves(const CompTree& shape, const SignedLeaves& s) {
    if (shape.leaf_count() != s.vals.size()) throw std::invalid_argument("from_signed_leaves: leaf count mismatch");
    std::size_t k = 0;
    PureLabel l = build(shape, s, k);
    return l;
}

PureLabel associate(const PureLabel& l, const std::string& node, Direction d) {
    PureLabel out = l;
    PureLabel& n = node_at(out, node);
    if (n.leaf()) throw std::invalid_argument("associate: position is a leaf");
    if (d == Direction::ToRight) {
        // ((X,Y,s1),Z,s2) -> (X,(Y,Z,s1 s2),s1)
        if (n.kids[0].leaf()) throw std::invalid_argument("associate: left child is a leaf");
        PureLabel xy = std::move(n.kids[0]);
        PureLabel z = std::move(n.kids[1]);
        int s1 = xy.sign, s2 = n.sign;
        n = join(std::move(xy.kids[0]), join(std::move(xy.kids[1]), std::move(z), s1 * s2), s1);
    } else {
        // (X,(Y,Z,t),s) -> ((X,Y,s),Z,t s)
        if (n.kids[1].leaf()) throw std::invalid_argument("associate: right child is a leaf");
        PureLabel x = std::move(n.kids[0]);
        PureLabel yz = std::move(n.kids[1]);
        int s = n.sign, t = yz.sign;
        n = join(join(std::move(x), std::move(yz.kids[0]), s), std::move(yz.kids[1]), t * s);
    }
    return out;
}

PureLabel apply_swap(const PureLabel& l, const std::string& node) {
    PureLabel out = l;
    PureLabel& n = node_at(out, node);
    if (n.leaf()) throw std::invalid_argument("apply_swap: position does not name a composed pair");
    std::swap(n.kids[0], n.kids[1]);
    const int s = n.sign;
    // An ancestor sign changes only when the swapped node sits on the leftmost
    // chain of the ancestor's child, i.e. when that child's first leaf changes.
    PureLabel* p = &out;
    for (std::size_t a = 0; a < node.size(); ++a) {
        bool leftmost = std::all_of(node.begin() + a + 1, node.end(), [](char c) { return c == 'L'; });
        if (leftmost) p->sign *= s;
        p = &p->kids[node[a] == 'L' ? 0 : 1];
    }
    return out;
}

PureLabel canonicalize(const PureLabel& l) {
    if (l.leaf()) return l;
    PureLabel out = l;
    while (!out.kids[1].leaf()) out = associate(out, "", Direction::ToLeft);
    out.kids[0] = canonicalize(out.kids[0]);
    return out;
}

PureLabel rebracket(const PureLabel& l, const CompTree& shape) {
    const PureLabel target = canonicalize(l);
    const auto vals = l.values();
    const auto dims = l.shape().dims();
    if (shape.leaf_count() != vals.size()) throw std::invalid_argument("rebracket: leaf count mismatch");
    const std::size_t nodes = vals.size() - 1;
    // Enumerate sign assignments on the target shape; exactly one matches.
    for (std::uint32_t bits = 0; bits < (1u << nodes); ++bits) {
        std::size_t k = 0, s = 0;
        std::function<PureLabel(const CompTree&)> mk = [&](const CompTree& t) -> PureLabel {
            if (t.leaf()) {
                PureLabel x = leaf_label(vals[k], dims[k]);
                ++k;
                return x;
            }
            PureLabel a = mk(t.kids[0]);
            PureLabel b = mk(t.kids[1]);
            int sg = (bits >> s++) & 1 ? -1 : 1;
            return join(std::move(a), std::move(b), sg);
        };
        PureLabel cand = mk(shape);
        if (canonicalize(cand) == target) return cand;
    }
    throw std::logic_error("rebracket: associator relation is not a bijection");
}

// ---- combos ----------------------------------------------------------------

FormalCombo::FormalCombo(PureLabel l, Rat c) { add(l, c); }

void FormalCombo::add(const PureLabel& l, const Rat& c) {
    if (sgn(c) == 0) return;
    auto it = std::lower_bound(terms_.begin(), terms_.end(), l,
                               [](const std::pair<Rat, PureLabel>& t, const PureLabel& x) { return t.second < x; });
    if (it != terms_.end() && it->second == l) {
        it->first += c;
        if (sgn(it->first) == 0) terms_.erase(it);
    } else {
        terms_.insert(it, {c, l});
    }
}

FormalCombo& FormalCombo::operator+=(const FormalCombo& o) {
    for (const auto& [c, l] : o.terms_) add(l, c);
    return *this;
}

Rat FormalCombo::total() const {
    Rat s;
    for (const auto& t : terms_) s += t.first;
    return s;
}

FormalCombo operator*(const Rat& c, const FormalCombo& f) {
    FormalCombo g;
    for (const auto& [k, l] : f.terms()) g.add(l, c * k);
    return g;
}

std::string to_text(const FormalCombo& f) {
    if (f.empty()) return "0";
    std::string s;
    for (const auto& [c, l] : f.terms()) {
        if (!s.empty()) s += " + ";
        s += to_string(c) + " " + to_text(l);
    }
    return s;
}

FormalCombo parse_combo(const std::string& text) {
    FormalCombo f;
    Cursor c{text};
    c.ws();
    if (text.substr(c.i) == "0") return f;
    for (;;) {
        c.ws();
        std::size_t j = c.i;
        while (c.i < text.size() && (std::isdigit(static_cast<unsigned char>(text[c.i])) || text[c.i] == '-' || text[c.i] == '/'))
            ++c.i;
        if (j == c.i) c.fail("expected coefficient");
        Rat k = parse_rat(text.substr(j, c.i - j));
        PureLabel l = c.label();
        f.add(l, k);
        c.ws();
        if (c.i == text.size()) break;
        c.expect('+');
    }
    return f;
}

FormalCombo canonicalize(const FormalCombo& f) {
    FormalCombo g;
    for (const auto& [c, l] : f.terms()) g.add(canonicalize(l), c);
    return g;
}

FormalCombo apply_swap(const FormalCombo& f, const std::string& node) {
    FormalCombo g;
    for (const auto& [c, l] : f.terms()) g.add(apply_swap(l, node), c);
    return g;
}

FormalCombo expand_product(const FormalCombo& a, const FormalCombo& b) {
    FormalCombo g;
    const Rat half(1, 2);
    for (const auto& [ca, la] : a.terms())
        for (const auto& [cb, lb] : b.terms())
            for (int s : {1, -1}) g.add(join(la, lb, s), half * ca * cb);
    return g;
}

// ---- sign rule oracle --------------------------------------------------------

namespace {

std::uint32_t pattern_of(const PureLabel& canonical) {
    auto s = canonical.signs();
    std::uint32_t b = 0;
    for (std::size_t k = 0; k < s.size(); ++k)
        if (s[k] < 0) b |= 1u << k;
    return b;
}

// Left-associated label with leaf k holding value k; values track leaf identity.
PureLabel pattern_label(std::size_t n, std::uint32_t bits, std::size_t first = 0) {
    PureLabel l = leaf_label(static_cast<int>(first));
    for (std::size_t k = 1; k < n; ++k)
        l = join(std::move(l), leaf_label(static_cast<int>(first + k)), (bits >> (k - 1)) & 1 ? -1 : 1);
    return l;
}

std::size_t npat(std::size_t leaves) { return leaves <= 1 ? 1 : std::size_t(1) << (leaves - 1); }

// Swap rule at the root: ((A,B,s1),E,s2) -> ((B,A,s1),E,s1 s2);
// with no E, (A,B,s) -> (B,A,s).
PureLabel display_swap(const PureLabel& l, bool has_env) {
    if (!has_env) return join(l.kids[1], l.kids[0], l.sign);
    const PureLabel& ab = l.kids[0];
    return join(join(ab.kids[1], ab.kids[0], ab.sign), l.kids[1], ab.sign * l.sign);
}

// Swaps the block of the first `a` leaves with the following block of `b` leaves.
PureLabel swap_front_blocks(const PureLabel& canonical, std::size_t a, std::size_t b) {
    const auto vals = canonical.values();
    const std::size_t n = vals.size();
    auto block = [](std::size_t len) { return left_assoc(std::vector<int>(len, 0)); };
    CompTree ab = join(block(a), block(b));
    const bool env = a + b < n;
    CompTree shape = env ? join(ab, block(n - a - b)) : ab;
    return display_swap(rebracket(canonical, shape), env);
}

}  // namespace

RatMat swap_pattern_action(std::size_t n, std::size_t q) {
    if (q + 1 >= n) throw std::invalid_argument("swap_pattern_action: no such adjacent pair");
    const std::size_t C = npat(n);
    RatMat s(C, C);
    for (std::uint32_t r = 0; r < C; ++r) {
        PureLabel l = pattern_label(n, r);
        PureLabel out;
        if (q == 0) {
            out = canonicalize(swap_front_blocks(l, 1, 1));
        } else {
            // (0..q)(q+1) -> (q+1)(0..q) -> (0..q-1)(q+1)(q)
            PureLabel t = canonicalize(swap_front_blocks(l, q + 1, 1));
            out = canonicalize(swap_front_blocks(t, 1, q));
        }
        auto v = out.values();
        std::vector<int> expect(n);
        for (std::size_t k = 0; k < n; ++k) expect[k] = static_cast<int>(k);
        std::swap(expect[q], expect[q + 1]);
        if (v != expect) throw std::logic_error("swap_pattern_action: leaf order mismatch");
        s(pattern_of(out), r) = 1;
    }
    return s;
}

namespace {

std::mutex g_rule_mutex;
std::map<std::size_t, SignRule> g_rules;

// Structural deletion on leaf-sign form, used only for comparison.
RatMat leaf_sign_deletion(std::size_t n, std::size_t p) {
    const std::size_t C = npat(n), R = npat(n - 1);
    RatMat m(R, C);
    for (std::uint32_t q = 0; q < C; ++q) {
        SignedLeaves s = to_signed_leaves(pattern_label(n, q));
        s.vals.erase(s.vals.begin() + p);
        s.dims.erase(s.dims.begin() + p);
        s.eps.erase(s.eps.begin() + p);
        std::uint32_t o = 0;
        for (std::size_t k = 1; k < s.eps.size(); ++k)
            if (s.eps[k] * s.eps[0] < 0) o |= 1u << (k - 1);
        m(o, q) = 1;
    }
    return m;
}

struct System {
    std::vector<std::vector<std::pair<std::size_t, Rat>>> rows;
    RatVec rhs;
    void add(std::vector<std::pair<std::size_t, Rat>> r, Rat b) {
        rows.push_back(std::move(r));
        rhs.push_back(std::move(b));
    }
};

using PatCombo = std::map<std::uint32_t, Rat>;

PatCombo canonical_patterns(const FormalCombo& f) {
    PatCombo out;
    for (const auto& [c, l] : f.terms()) out[pattern_of(canonicalize(l))] += c;
    return out;
}

// Smaller leaf counts must already be cached.
SignRule solve_rule(std::size_t n) {
    SignRule rule;
    rule.leaves = n;
    if (n == 1) {
        RatMat one(1, 1);
        one(0, 0) = 1;
        rule.m = {one};
        rule.nonnegative = rule.matches_leaf_sign_form = true;
        return rule;
    }
    const std::size_t C = npat(n), R = npat(n - 1);
    const std::size_t block = R * C;
    auto var = [&](std::size_t p, std::size_t o, std::size_t q) { return p * block + o * C + q; };
    System sys;

    auto deletion_equals = [&](std::size_t p, const PatCombo& in, const PatCombo& target) {
        for (std::size_t o = 0; o < R; ++o) {
            std::vector<std::pair<std::size_t, Rat>> row;
            for (const auto& [q, c] : in) row.push_back({var(p, o, q), c});
            auto it = target.find(static_cast<std::uint32_t>(o));
            sys.add(std::move(row), it == target.end() ? Rat(0) : it->second);
        }
    };

    std::vector<int> zeros(n - 1, 0);
    // Leaf deleted as a direct child of the root: (v,Y,s) and (Y,v,s) give Y.
    for (const auto& ytree : all_bracketings(zeros)) {
        const std::size_t ynodes = n - 2;
        for (std::uint32_t yb = 0; yb < (1u << ynodes); ++yb) {
            std::size_t k = 0, s = 0;
            std::function<PureLabel(const CompTree&, std::size_t)> mk = [&](const CompTree& t, std::size_t first) -> PureLabel {
                if (t.leaf()) return leaf_label(static_cast<int>(first + k++));
                PureLabel a = mk(t.kids[0], first);
                PureLabel b = mk(t.kids[1], first);
                return join(std::move(a), std::move(b), (yb >> s++) & 1 ? -1 : 1);
            };
            for (int side = 0; side < 2; ++side) {
                k = 0;
                s = 0;
                PureLabel y = mk(ytree, side == 0 ? 1 : 0);
                PatCombo target{{pattern_of(canonicalize(y)), Rat(1)}};
                for (int sg : {1, -1}) {
                    PureLabel v = leaf_label(side == 0 ? 0 : static_cast<int>(n - 1));
                    PureLabel full = side == 0 ? join(v, y, sg) : join(y, v, sg);
                    deletion_equals(side == 0 ? 0 : n - 1, canonical_patterns(FormalCombo(full)), target);
                }
            }
        }
    }

    // Product states of two blocks: deletion acts inside the block holding the leaf.
    for (std::size_t k = 1; k < n; ++k) {
        for (std::uint32_t pb = 0; pb < npat(k); ++pb)
            for (std::uint32_t qb = 0; qb < npat(n - k); ++qb) {
                FormalCombo P(pattern_label(k, pb, 0)), Q(pattern_label(n - k, qb, k));
                PatCombo in = canonical_patterns(expand_product(P, Q));
                for (std::size_t p = 0; p < n; ++p) {
                    const bool inP = p < k;
                    const std::size_t blen = inP ? k : n - k;
                    FormalCombo reduced;
                    if (blen == 1) {
                        reduced = inP ? Q : P;
                    } else {
                        const SignRule& sr = g_rules.at(blen);
                        const std::size_t lp = inP ? p : p - k;
                        const std::uint32_t bp = inP ? pb : qb;
                        FormalCombo del;
                        for (std::size_t o = 0; o < npat(blen - 1); ++o) {
                            const Rat& c = sr.m[lp](o, bp);
                            if (sgn(c) == 0) continue;
                            del.add(pattern_label(blen - 1, static_cast<std::uint32_t>(o), 0), c);
                        }
                        reduced = inP ? expand_product(del, FormalCombo(pattern_label(n - k, qb, 0)))
                                      : expand_product(FormalCombo(pattern_label(k, pb, 0)), del);
                    }
                    deletion_equals(p, in, canonical_patterns(reduced));
                }
            }
    }

    // Naturality against adjacent swaps.
    for (std::size_t q = 0; q + 1 < n; ++q) {
        RatMat S = swap_pattern_action(n, q);
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t o = 0; o < R; ++o)
                for (std::size_t r = 0; r < C; ++r) {
                    std::vector<std::pair<std::size_t, Rat>> row;
                    for (std::size_t qq = 0; qq < C; ++qq)
                        if (sgn(S(qq, r)) != 0) row.push_back({var(p, o, qq), S(qq, r)});
                    if (p == q || p == q + 1) {
                        row.push_back({var(p == q ? q + 1 : q, o, r), Rat(-1)});
                    } else {
                        RatMat S2 = swap_pattern_action(n - 1, p < q ? q - 1 : q);
                        for (std::size_t oo = 0; oo < R; ++oo)
                            if (sgn(S2(o, oo)) != 0) row.push_back({var(p, oo, r), -S2(o, oo)});
                    }
                    sys.add(std::move(row), Rat(0));
                }
        }
    }

    // Completeness: every input pattern maps to total weight one.
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < C; ++q) {
            std::vector<std::pair<std::size_t, Rat>> row;
            for (std::size_t o = 0; o < R; ++o) row.push_back({var(p, o, q), Rat(1)});
            sys.add(std::move(row), Rat(1));
        }

    const std::size_t nv = n * block;
    RatMat A(sys.rows.size(), nv);
    for (std::size_t i = 0; i < sys.rows.size(); ++i)
        for (const auto& [j, c] : sys.rows[i]) A(i, j) += c;
    rule.equations = sys.rows.size();
    auto sol = solve_linear(A, sys.rhs);
    if (!sol) {
        LPProblem lp;
        lp.nvars = nv;
        lp.eq_a = A;
        lp.eq_b = sys.rhs;
        LPOutcome res = lp_solve(lp);
        std::string cert;
        for (std::size_t i = 0; i < res.farkas_eq.size(); ++i)
            if (sgn(res.farkas_eq[i]) != 0) cert += " y" + std::to_string(i) + "=" + to_string(res.farkas_eq[i]);
        throw SignRuleError("sign-rule constraints are inconsistent for " + std::to_string(n) +
                            " leaves; Farkas multipliers:" + cert);
    }
    rule.null_dim = sol->null_basis.size();
    RatVec x = sol->particular;
    if (rule.null_dim > 0) {
        LPProblem lp;
        lp.nvars = nv;
        lp.eq_a = A;
        lp.eq_b = sys.rhs;
        lp.in_a = RatMat::identity(nv);
        lp.in_b.assign(nv, Rat(0));
        lp.in_sense.assign(nv, Sense::GE);
        LPOutcome res = lp_solve(lp);
        if (res.status == LPStatus::Feasible) x = res.witness;
    }
    rule.nonnegative = std::all_of(x.begin(), x.end(), [](const Rat& v) { return sgn(v) >= 0; });
    rule.m.assign(n, RatMat(R, C));
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t o = 0; o < R; ++o)
            for (std::size_t q = 0; q < C; ++q) rule.m[p](o, q) = x[var(p, o, q)];
    rule.matches_leaf_sign_form = true;
    for (std::size_t p = 0; p < n; ++p)
        if (!(rule.m[p] == leaf_sign_deletion(n, p))) rule.matches_leaf_sign_form = false;
    return rule;
}

}  // namespace

const SignRule& solve_sign_rule(const CompTree& shape, std::size_t leaf_bound) {
    const std::size_t n = shape.leaf_count();
    if (n > leaf_bound)
        throw SignRuleError("shape has " + std::to_string(n) + " leaves, above the sign-rule bound " +
                            std::to_string(leaf_bound));
    std::lock_guard<std::mutex> lock(g_rule_mutex);
    for (std::size_t k = 1; k <= n; ++k) {
        if (g_rules.count(k)) continue;
        g_rules.emplace(k, solve_rule(k));
    }
    return g_rules.at(n);
}

bool sign_rule_solved(std::size_t leaves) {
    std::lock_guard<std::mutex> lock(g_rule_mutex);
    return g_rules.count(leaves) > 0;
}

FormalCombo delete_leaf(const FormalCombo& f, std::size_t leaf, int matched) {
    FormalCombo out;
    if (f.empty()) return out;
    const CompTree shape = f.terms().front().second.shape();
    const std::size_t n = shape.leaf_count();
    if (leaf >= n) throw std::invalid_argument("delete_leaf: leaf position out of range");
    const SignRule* rule = nullptr;
    {
        std::lock_guard<std::mutex> lock(g_rule_mutex);
        auto it = g_rules.find(n);
        if (it == g_rules.end())
            throw SignRuleError("no solved sign rule for " + std::to_string(n) +
                                " leaves; run solve_sign_rule on this shape first");
        rule = &it->second;
    }
    // Reduced shape: the deleted leaf's parent is replaced by its sibling.
    std::function<std::optional<CompTree>(const CompTree&, std::size_t&)> drop =
        [&](const CompTree& t, std::size_t& k) -> std::optional<CompTree> {
        if (t.leaf()) return k++ == leaf ? std::nullopt : std::optional<CompTree>(t);
        auto a = drop(t.kids[0], k);
        auto b = drop(t.kids[1], k);
        if (!a) return b;
        if (!b) return a;
        return join(*a, *b);
    };
    std::size_t k0 = 0;
    std::optional<CompTree> reduced = drop(shape, k0);
    for (const auto& [c, l] : f.terms()) {
        if (!(l.shape() == shape)) throw std::invalid_argument("delete_leaf: combo mixes shapes");
        const PureLabel canon = canonicalize(l);
        auto vals = canon.values();
        auto dims = canon.shape().dims();
        if (vals[leaf] != matched) continue;
        if (n == 1) {
            out.add(leaf_label(-1), c * rule->m[0](0, 0));
            continue;
        }
        vals.erase(vals.begin() + leaf);
        dims.erase(dims.begin() + leaf);
        const std::uint32_t q = pattern_of(canon);
        const RatMat& M = rule->m[leaf];
        for (std::size_t o = 0; o < M.rows(); ++o) {
            if (sgn(M(o, q)) == 0) continue;
            PureLabel r = leaf_label(vals[0], dims[0]);
            for (std::size_t j = 1; j < vals.size(); ++j)
                r = join(std::move(r), leaf_label(vals[j], dims[j]), (o >> (j - 1)) & 1 ? -1 : 1);
            out.add(reduced->left_associated() ? r : rebracket(r, *reduced), c * M(o, q));
        }
    }
    return out;
}

}  // namespace optkit
