#include "optkit/circuits.hpp"

#include "optkit/labelcalc.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace optkit {

namespace {

// ---- label text -------------------------------------------------------------------------

LabelKey parse_label_key(const SystemType& s, const std::string& text) {
    if (s.trivial()) {
        if (text != "I") throw std::invalid_argument("expected I for the trivial system");
        return 0;
    }
    if (s.theory == Theory::CT || text.front() != '(') {
        std::string t = text;
        if (t.front() == '[') t = t.substr(1, t.size() - 2);
        std::vector<int> vals;
        std::stringstream ss(t);
        std::string part;
        while (std::getline(ss, part, ',')) vals.push_back(std::stoi(part) - 1);
        if (vals.size() != s.leaves() || (s.theory == Theory::BCT && vals.size() != 1))
            throw std::invalid_argument("label has the wrong number of leaves");
        for (std::size_t i = 0; i < vals.size(); ++i)
            if (vals[i] < 0 || vals[i] >= s.dims[i]) throw std::invalid_argument("label value out of range");
        return make_key(vals, std::vector<int>(vals.size(), 0));
    }
    PureLabel l = canonicalize(with_dims(parse_label(text), s.dims));
    return label_to_key(s, l);
}

std::string vector_text(const SystemType& s, const RatVec& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (sgn(v[i]) == 0) continue;
        if (!out.empty()) out += " + ";
        out += v[i].get_str() + " " + label_text(s, i);
    }
    return out.empty() ? "0" : out;
}

// ---- parsing ----------------------------------------------------------------------------

struct Cursor {
    const std::string& s;
    std::size_t line;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw CircuitError(msg, line, pos + 1); }
    void ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool done() {
        ws();
        return pos >= s.size();
    }
    char peek() {
        ws();
        return pos < s.size() ? s[pos] : '\0';
    }
    bool accept(char c) {
        if (peek() == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }
    bool accept_word(const std::string& w) {
        ws();
        if (s.compare(pos, w.size(), w) != 0) return false;
        std::size_t e = pos + w.size();
        if (e < s.size() && (std::isalnum(static_cast<unsigned char>(s[e])) || s[e] == '_')) return false;
        pos = e;
        return true;
    }
    std::string ident() {
        ws();
        std::size_t b = pos;
        if (pos >= s.size() || !(std::isalpha(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
            fail("expected a name");
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        return s.substr(b, pos - b);
    }
    std::string outcome_name() {
        ws();
        std::size_t b = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_' || s[pos] == '-' ||
                                  s[pos] == '+'))
            ++pos;
        if (b == pos) fail("expected an outcome name");
        return s.substr(b, pos - b);
    }
    std::size_t number() {
        ws();
        std::size_t b = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (b == pos) fail("expected a number");
        return std::stoul(s.substr(b, pos - b));
    }
    Rat rational() {
        ws();
        std::size_t b = pos;
        while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '/')) ++pos;
        if (b == pos) fail("expected a rational coefficient");
        Rat r;
        if (r.set_str(s.substr(b, pos - b), 10) != 0) fail("bad rational");
        if (r.get_den() == 0) fail("zero denominator");
        r.canonicalize();
        return r;
    }
    std::string label() {
        ws();
        std::size_t b = pos;
        if (pos >= s.size()) fail("expected a label");
        if (s[pos] == '(') {
            int depth = 0;
            do {
                if (s[pos] == '(') ++depth;
                if (s[pos] == ')') --depth;
                ++pos;
            } while (pos < s.size() && depth > 0);
            if (depth != 0) fail("unbalanced label");
        } else if (s[pos] == '[') {
            while (pos < s.size() && s[pos] != ']') ++pos;
            if (pos >= s.size()) fail("unterminated label");
            ++pos;
        } else if (s[pos] == 'I') {
            ++pos;
        } else {
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
            if (b == pos) fail("expected a label");
        }
        return s.substr(b, pos - b);
    }
};

Theory parse_theory_word(Cursor& c) {
    std::size_t at = c.pos;
    std::string w = c.ident();
    try {
        return parse_theory(w);
    } catch (const std::exception&) {
        c.pos = at;
        c.fail("unknown theory '" + w + "'");
    }
}

const SystemDecl* find_system(const Diagram& d, const std::string& n) {
    for (const auto& s : d.systems)
        if (s.name == n) return &s;
    return nullptr;
}

const TestDef* find_test(const Diagram& d, const std::string& n) {
    for (const auto& t : d.tests)
        if (t.name == n) return &t;
    return nullptr;
}

void fill_discriminating(TestDef& t) {
    t.outcomes.clear();
    t.vectors.clear();
    for (std::size_t i = 0; i < t.system.dimension(); ++i) {
        RatVec v(t.system.dimension());
        v[i] = 1;
        t.outcomes.push_back(label_text(t.system, i));
        t.vectors.push_back(std::move(v));
    }
}

void check_test(const TestDef& t) {
    if (t.vectors.empty()) throw std::invalid_argument("test '" + t.name + "' has no outcomes");
    std::set<std::string> names;
    RatVec tot(t.system.dimension());
    for (std::size_t y = 0; y < t.vectors.size(); ++y) {
        if (!names.insert(t.outcomes[y]).second)
            throw std::invalid_argument("test '" + t.name + "' repeats outcome " + t.outcomes[y]);
        for (std::size_t i = 0; i < tot.size(); ++i) {
            if (sgn(t.vectors[y][i]) < 0) throw std::invalid_argument("test '" + t.name + "' has a negative entry");
            tot[i] += t.vectors[y][i];
        }
    }
    if (t.prep) {
        Rat s = std::accumulate(tot.begin(), tot.end(), Rat(0));
        if (s != 1) throw std::invalid_argument("preparation test '" + t.name + "' is not normalised");
    } else {
        for (const auto& x : tot)
            if (x != 1) throw std::invalid_argument("observation test '" + t.name + "' does not sum to the unit effect");
    }
}

void parse_test(Diagram& d, Cursor& c, bool prep) {
    TestDef t;
    t.prep = prep;
    t.name = c.ident();
    if (find_test(d, t.name)) c.fail("test '" + t.name + "' already defined");
    c.expect(':');
    t.system = SystemType{d.theory, {}};
    while (c.peek() != '=') {
        std::size_t at = c.pos;
        std::string sn = c.ident();
        const SystemDecl* sd = find_system(d, sn);
        if (!sd) {
            c.pos = at;
            c.fail("unknown system '" + sn + "'");
        }
        t.signature.push_back(sn);
        t.system.dims.insert(t.system.dims.end(), sd->dims.begin(), sd->dims.end());
    }
    c.expect('=');
    if (!prep && c.accept_word("discriminating")) {
        t.discriminating = true;
        fill_discriminating(t);
    } else {
        c.expect('{');
        for (;;) {
            t.outcomes.push_back(c.outcome_name());
            c.expect(':');
            RatVec v(t.system.dimension());
            for (bool first = true;; first = false) {
                if (!first && !c.accept('+')) break;
                Rat coef = c.rational();
                if (first && sgn(coef) == 0 && (c.peek() == '|' || c.peek() == '}')) break;
                std::size_t at = c.pos;
                std::string lab = c.label();
                try {
                    v[label_index(t.system, parse_label_key(t.system, lab))] += coef;
                } catch (const CircuitError&) {
                    throw;
                } catch (const std::exception& e) {
                    c.pos = at;
                    c.fail("bad label '" + lab + "': " + e.what());
                }
            }
            t.vectors.push_back(std::move(v));
            if (c.accept('}')) break;
            c.expect('|');
        }
    }
    try {
        check_test(t);
    } catch (const std::invalid_argument& e) {
        c.fail(e.what());
    }
    d.tests.push_back(std::move(t));
}

struct BoxPos {
    std::size_t line, column;
};

// Walks the diagram, validating every step. `visit` sees each box with the live wires before it.
void walk(const Diagram& d, const std::vector<std::vector<BoxPos>>* where,
          const std::function<void(const Box&, const std::vector<std::string>&)>& visit,
          std::vector<std::string>* final_order = nullptr) {
    auto fail = [&](const std::string& m, std::size_t s, std::size_t b) -> void {
        if (where && s < where->size() && b < (*where)[s].size())
            throw CircuitError(m, (*where)[s][b].line, (*where)[s][b].column);
        throw CircuitError(m);
    };
    std::vector<std::string> live;
    std::map<std::string, int> dim;
    std::set<std::size_t> ids;
    for (const auto& [w, sn] : d.inputs) {
        const SystemDecl* sd = find_system(d, sn);
        if (!sd) fail("unknown system '" + sn + "'", 0, 0);
        if (sd->dims.size() != 1) fail("wire '" + w + "' needs an elementary system", 0, 0);
        if (dim.count(w)) fail("wire '" + w + "' declared twice", 0, 0);
        dim[w] = sd->dims[0];
        live.push_back(w);
    }
    for (std::size_t s = 0; s < d.slices.size(); ++s) {
        std::set<std::string> start(live.begin(), live.end()), used;
        for (std::size_t bi = 0; bi < d.slices[s].size(); ++bi) {
            const Box& b = d.slices[s][bi];
            if (!ids.insert(b.id).second) fail("box id " + std::to_string(b.id) + " used twice", s, bi);
            auto take = [&](const std::string& w) {
                if (!start.count(w)) fail("wire '" + w + "' is not live at this slice", s, bi);
                if (!used.insert(w).second) fail("wire '" + w + "' used twice in one slice", s, bi);
            };
            const TestDef* t = nullptr;
            if (b.kind == BoxKind::Prep || b.kind == BoxKind::Obs) {
                t = find_test(d, b.test);
                if (!t) fail("unknown test '" + b.test + "'", s, bi);
                if (t->prep != (b.kind == BoxKind::Prep)) fail("test '" + b.test + "' has the wrong kind", s, bi);
                if (b.wires.size() != t->system.leaves()) fail("test '" + b.test + "' needs " +
                                                                   std::to_string(t->system.leaves()) + " wires", s, bi);
            }
            switch (b.kind) {
                case BoxKind::Prep:
                    for (std::size_t k = 0; k < b.wires.size(); ++k) {
                        if (dim.count(b.wires[k])) fail("wire name '" + b.wires[k] + "' is not fresh", s, bi);
                    }
                    break;
                case BoxKind::Obs:
                    for (std::size_t k = 0; k < b.wires.size(); ++k) {
                        take(b.wires[k]);
                        if (dim[b.wires[k]] != t->system.dims[k])
                            fail("wire '" + b.wires[k] + "' has dimension " + std::to_string(dim[b.wires[k]]) +
                                     ", test expects " + std::to_string(t->system.dims[k]),
                                 s, bi);
                    }
                    break;
                case BoxKind::Swap:
                    if (b.wires.size() != 2) fail("swap needs two wires", s, bi);
                    take(b.wires[0]);
                    take(b.wires[1]);
                    break;
                case BoxKind::Id:
                    if (b.wires.empty()) fail("id needs a wire", s, bi);
                    for (const auto& w : b.wires) take(w);
                    break;
                case BoxKind::Null:
                    if (!b.wires.empty()) fail("null takes no wires", s, bi);
                    break;
            }
            visit(b, live);
            if (b.kind == BoxKind::Prep) {
                for (std::size_t k = 0; k < b.wires.size(); ++k) {
                    dim[b.wires[k]] = t->system.dims[k];
                    live.push_back(b.wires[k]);
                }
            } else if (b.kind == BoxKind::Obs) {
                for (const auto& w : b.wires) live.erase(std::find(live.begin(), live.end(), w));
            } else if (b.kind == BoxKind::Swap) {
                auto i = std::find(live.begin(), live.end(), b.wires[0]);
                auto j = std::find(live.begin(), live.end(), b.wires[1]);
                std::iter_swap(i, j);
            }
        }
    }
    if (d.has_output) {
        std::vector<std::string> a = d.outputs, b = live;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) throw CircuitError("output must list every live wire exactly once");
        live = d.outputs;
    }
    if (final_order) *final_order = live;
}

void check(const Diagram& d) {
    for (const auto& t : d.tests) {
        if (t.system.theory != d.theory) throw CircuitError("test '" + t.name + "' belongs to another theory");
        check_test(t);
    }
    walk(d, nullptr, [](const Box&, const std::vector<std::string>&) {});
}

std::vector<std::string> final_order(const Diagram& d) {
    std::vector<std::string> out;
    walk(d, nullptr, [](const Box&, const std::vector<std::string>&) {}, &out);
    return out;
}

std::map<std::string, int> wire_dims(const Diagram& d) {
    std::map<std::string, int> dim;
    for (const auto& [w, sn] : d.inputs) dim[w] = find_system(d, sn)->dims.at(0);
    for (const auto& sl : d.slices)
        for (const auto& b : sl)
            if (b.kind == BoxKind::Prep) {
                const TestDef* t = find_test(d, b.test);
                for (std::size_t k = 0; k < b.wires.size(); ++k) dim[b.wires[k]] = t->system.dims[k];
            }
    return dim;
}

bool has_outcomes(const Box& b) { return b.kind == BoxKind::Prep || b.kind == BoxKind::Obs || b.kind == BoxKind::Null; }

}  // namespace

Diagram parse_diagram(const std::string& text) {
    Diagram d;
    std::vector<std::vector<BoxPos>> where;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0, next_id = 0;
    bool seen_input = false, seen_theory = false;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string ln = raw.substr(0, raw.find('#'));
        Cursor c{ln, lineno};
        if (c.done()) continue;
        if (c.accept_word("theory")) {
            if (seen_theory || !d.systems.empty()) c.fail("theory must come first, once");
            d.theory = parse_theory_word(c);
            seen_theory = true;
        } else if (c.accept_word("system")) {
            SystemDecl sd;
            sd.name = c.ident();
            if (find_system(d, sd.name)) c.fail("system '" + sd.name + "' already defined");
            c.expect('=');
            Theory th = parse_theory_word(c);
            if (!seen_theory && d.systems.empty()) d.theory = th;
            if (th != d.theory) c.fail("all systems must belong to one theory");
            seen_theory = true;
            c.expect('[');
            while (!c.accept(']')) {
                std::size_t at = c.pos;
                int x = int(c.number());
                if (x < 1 || x > kMaxLeafDim || (th == Theory::CT && x == 1)) {
                    c.pos = at;
                    c.fail("bad leaf dimension " + std::to_string(x));
                }
                sd.dims.push_back(x);
                c.accept(',');
            }
            if (sd.dims.empty()) c.fail("a system needs at least one leaf");
            d.systems.push_back(std::move(sd));
        } else if (c.accept_word("prep")) {
            parse_test(d, c, true);
        } else if (c.accept_word("obs")) {
            parse_test(d, c, false);
        } else if (c.accept_word("input")) {
            if (seen_input) c.fail("input declared twice");
            seen_input = true;
            while (!c.done()) {
                std::string w = c.ident();
                c.expect(':');
                std::size_t at = c.pos;
                std::string sn = c.ident();
                if (!find_system(d, sn)) {
                    c.pos = at;
                    c.fail("unknown system '" + sn + "'");
                }
                d.inputs.emplace_back(w, sn);
            }
        } else if (c.accept_word("slice")) {
            c.expect(':');
            std::vector<Box> boxes;
            std::vector<BoxPos> pos;
            for (bool first = true;; first = false) {
                if (!first && !c.accept(',')) break;
                c.ws();
                pos.push_back({lineno, c.pos + 1});
                Box b;
                if (c.accept_word("prep") || c.accept_word("obs")) {
                    b.kind = ln.compare(pos.back().column - 1, 4, "prep") == 0 ? BoxKind::Prep : BoxKind::Obs;
                    c.expect('(');
                    b.test = c.ident();
                    c.expect(')');
                } else if (c.accept_word("swap")) {
                    b.kind = BoxKind::Swap;
                } else if (c.accept_word("id")) {
                    b.kind = BoxKind::Id;
                } else if (c.accept_word("null")) {
                    b.kind = BoxKind::Null;
                } else {
                    c.fail("expected prep, obs, swap, id or null");
                }
                b.id = next_id;
                if (c.accept('@')) b.id = c.number();
                next_id = std::max(next_id, b.id) + 1;
                if (b.kind != BoxKind::Null) {
                    if (!c.accept_word("on")) c.fail("expected 'on'");
                    while (!c.done() && c.peek() != ',') b.wires.push_back(c.ident());
                }
                boxes.push_back(std::move(b));
            }
            if (!c.done()) c.fail("unexpected text");
            d.slices.push_back(std::move(boxes));
            where.push_back(std::move(pos));
        } else if (c.accept_word("output")) {
            if (d.has_output) c.fail("output declared twice");
            d.has_output = true;
            while (!c.done()) d.outputs.push_back(c.ident());
        } else {
            c.fail("unknown statement");
        }
        if (!c.done()) c.fail("unexpected text");
    }
    walk(d, &where, [](const Box&, const std::vector<std::string>&) {});
    return d;
}

std::string print_diagram(const Diagram& d) {
    std::string o = "theory " + to_string(d.theory) + "\n";
    for (const auto& s : d.systems) {
        o += "system " + s.name + " = " + to_string(d.theory) + " [";
        for (std::size_t i = 0; i < s.dims.size(); ++i) o += (i ? "," : "") + std::to_string(s.dims[i]);
        o += "]\n";
    }
    for (const auto& t : d.tests) {
        o += std::string(t.prep ? "prep " : "obs ") + t.name + " :";
        for (const auto& s : t.signature) o += " " + s;
        o += " = ";
        if (t.discriminating) {
            o += "discriminating\n";
            continue;
        }
        o += "{ ";
        for (std::size_t y = 0; y < t.outcomes.size(); ++y)
            o += (y ? " | " : "") + t.outcomes[y] + ": " + vector_text(t.system, t.vectors[y]);
        o += " }\n";
    }
    o += "input";
    for (const auto& [w, s] : d.inputs) o += " " + w + ":" + s;
    o += "\n";
    std::size_t seq = 0;
    for (const auto& sl : d.slices) {
        o += "slice: ";
        for (std::size_t i = 0; i < sl.size(); ++i) {
            const Box& b = sl[i];
            if (i) o += ", ";
            switch (b.kind) {
                case BoxKind::Prep: o += "prep(" + b.test + ")"; break;
                case BoxKind::Obs: o += "obs(" + b.test + ")"; break;
                case BoxKind::Swap: o += "swap"; break;
                case BoxKind::Id: o += "id"; break;
                case BoxKind::Null: o += "null"; break;
            }
            if (b.id != seq) o += "@" + std::to_string(b.id);
            seq = b.id + 1;
            if (b.kind != BoxKind::Null) {
                o += " on";
                for (const auto& w : b.wires) o += " " + w;
            }
        }
        o += "\n";
    }
    if (d.has_output) {
        o += "output";
        for (const auto& w : d.outputs) o += " " + w;
        o += "\n";
    }
    return o;
}

SystemType input_system(const Diagram& d) {
    SystemType s{d.theory, {}};
    for (const auto& [w, sn] : d.inputs) s.dims.push_back(find_system(d, sn)->dims.at(0));
    return s;
}

SystemType output_system(const Diagram& d) {
    auto dims = wire_dims(d);
    SystemType s{d.theory, {}};
    for (const auto& w : final_order(d)) s.dims.push_back(dims.at(w));
    return s;
}

// ---- evaluation ---------------------------------------------------------------------------

namespace {

LabelKey permute_key(LabelKey k, std::size_t n, const std::vector<std::size_t>& perm, bool bct) {
    LabelKey r = 0;
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t from = j < perm.size() ? perm[j] : j;
        r |= LabelKey(key_val(k, from)) << (4 * j);
        if (bct && key_eps(k, from)) r |= LabelKey(1) << (48 + j);
    }
    return bct ? canonical_key(r, n) : r;
}

void prune(SparseCombo& c) {
    for (auto it = c.begin(); it != c.end();)
        it = sgn(it->second) == 0 ? c.erase(it) : std::next(it);
}

}  // namespace

Instrument eval(const Diagram& d) {
    check(d);
    const bool bct = d.theory == Theory::BCT;
    const SystemType in = input_system(d), out = output_system(d);
    const SystemType ein = probe_extended(in), eout = probe_extended(out);
    const std::size_t ncols = ein.dimension();

    // outcome-bearing boxes in id order
    std::vector<std::pair<std::size_t, const Box*>> obox;
    for (const auto& sl : d.slices)
        for (const auto& b : sl)
            if (has_outcomes(b)) obox.push_back({b.id, &b});
    std::sort(obox.begin(), obox.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::map<std::size_t, std::size_t> slot;
    std::vector<std::size_t> counts;
    std::vector<std::vector<std::string>> names;
    for (std::size_t i = 0; i < obox.size(); ++i) {
        slot[obox[i].first] = i;
        const Box& b = *obox[i].second;
        if (b.kind == BoxKind::Null) {
            counts.push_back(1);
            names.push_back({"null"});
        } else {
            const TestDef* t = find_test(d, b.test);
            counts.push_back(t->outcomes.size());
            names.push_back(t->outcomes);
        }
    }

    using Cols = std::vector<SparseCombo>;
    std::map<std::vector<std::size_t>, Cols> branches;
    {
        Cols c(ncols);
        for (std::size_t j = 0; j < ncols; ++j) c[j][label_key(ein, j)] = Rat(1);
        branches.emplace(std::vector<std::size_t>(obox.size(), 0), std::move(c));
    }

    walk(d, nullptr, [&](const Box& b, const std::vector<std::string>& live) {
        const std::size_t n = live.size() + (bct ? 1 : 0);
        auto position = [&](const std::string& w) { return std::size_t(std::find(live.begin(), live.end(), w) - live.begin()); };
        if (b.kind == BoxKind::Id) return;
        if (b.kind == BoxKind::Swap) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            std::swap(perm[position(b.wires[0])], perm[position(b.wires[1])]);
            for (auto& [tup, cols] : branches)
                for (auto& col : cols) {
                    SparseCombo nc;
                    for (const auto& [k, v] : col) nc[permute_key(k, n, perm, bct)] += v;
                    col = std::move(nc);
                }
            return;
        }
        if (b.kind == BoxKind::Null) {
            for (auto& [tup, cols] : branches)
                for (auto& col : cols) col.clear();
            return;
        }
        const TestDef* t = find_test(d, b.test);
        std::vector<TransfMap> maps;
        for (const auto& v : t->vectors)
            maps.push_back(t->prep ? state_map(StateVec{t->system, v}) : effect_map(EffectVec{t->system, v}));
        std::vector<std::size_t> positions;
        if (!t->prep)
            for (const auto& w : b.wires) positions.push_back(position(w));
        const std::size_t insert_at = t->prep ? live.size() : 0;
        const std::size_t s = slot.at(b.id);
        std::map<std::vector<std::size_t>, Cols> next;
        for (std::size_t y = 0; y < maps.size(); ++y) {
            const Lifted lift(maps[y]);
            for (const auto& [tup, cols] : branches) {
                std::vector<std::size_t> nt = tup;
                nt[s] = y;
                Cols nc(ncols);
                bool any = false;
                for (std::size_t j = 0; j < ncols; ++j) {
                    for (const auto& [k, v] : cols[j]) lift.apply(k, n, positions, insert_at, v, nc[j]);
                    prune(nc[j]);
                    any = any || !nc[j].empty();
                }
                if (any) next.emplace(std::move(nt), std::move(nc));
            }
        }
        branches = std::move(next);
    });

    // final output order
    std::vector<std::string> live;
    {
        Diagram plain = d;
        plain.has_output = false;
        plain.outputs.clear();
        live = final_order(plain);
    }
    if (d.has_output) {
        const std::size_t n = live.size() + (bct ? 1 : 0);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t k = 0; k < d.outputs.size(); ++k)
            perm[k] = std::size_t(std::find(live.begin(), live.end(), d.outputs[k]) - live.begin());
        for (auto& [tup, cols] : branches)
            for (auto& col : cols) {
                SparseCombo nc;
                for (const auto& [k, v] : col) nc[permute_key(k, n, perm, bct)] += v;
                col = std::move(nc);
            }
    }

    Instrument r{in, out, {}, {}};
    std::vector<std::size_t> tup(obox.size(), 0);
    for (;;) {
        std::string lab;
        for (std::size_t i = 0; i < tup.size(); ++i) lab += (i ? "." : "") + names[i][tup[i]];
        TransfMap ev{in, out, RatMat(eout.dimension(), ncols), {}};
        if (auto it = branches.find(tup); it != branches.end())
            for (std::size_t j = 0; j < ncols; ++j)
                for (const auto& [k, v] : it->second[j]) ev.ext(label_index(eout, k), j) += v;
        r.outcomes.push_back(lab.empty() ? "-" : lab);
        r.events.push_back(std::move(ev));
        std::size_t i = tup.size();
        while (i > 0 && ++tup[i - 1] == counts[i - 1]) tup[--i] = 0;
        if (i == 0) break;
    }
    return r;
}

// ---- normal form -------------------------------------------------------------------------

namespace {

std::string leaf_system_name(Diagram& d, int dim) {
    for (const auto& s : d.systems)
        if (s.dims == std::vector<int>{dim}) return s.name;
    std::string n = "D" + std::to_string(dim);
    while (find_system(d, n)) n += "_";
    d.systems.push_back({n, {dim}});
    return n;
}

// Adjacent-swap slices taking `live` to `target`.
void emit_swaps(Diagram& d, std::vector<std::string>& live, const std::vector<std::string>& target, std::size_t& next_id) {
    for (std::size_t k = 0; k < target.size(); ++k) {
        std::size_t j = std::size_t(std::find(live.begin(), live.end(), target[k]) - live.begin());
        while (j > k) {
            d.slices.push_back({Box{BoxKind::Swap, "", {live[j - 1], live[j]}, next_id++}});
            std::swap(live[j - 1], live[j]);
            --j;
        }
    }
}

std::vector<std::size_t> index_perm(const std::vector<std::string>& from, const std::vector<std::string>& to) {
    std::vector<std::size_t> p;
    for (const auto& w : to) p.push_back(std::size_t(std::find(from.begin(), from.end(), w) - from.begin()));
    return p;
}

std::size_t max_id(const Diagram& d) {
    std::size_t m = 0;
    for (const auto& sl : d.slices)
        for (const auto& b : sl) m = std::max(m, b.id + 1);
    return m;
}

}  // namespace

JellyfishForm to_jellyfish(const Diagram& d) {
    check(d);
    const auto dims = wire_dims(d);
    const auto outs = final_order(d);
    std::set<std::string> observed, survives(outs.begin(), outs.end());
    std::vector<Box> preps, obss;
    std::vector<std::string> created;
    for (const auto& sl : d.slices)
        for (const auto& b : sl) {
            if (b.kind == BoxKind::Prep || b.kind == BoxKind::Null) {
                preps.push_back(b);
                created.insert(created.end(), b.wires.begin(), b.wires.end());
            }
            if (b.kind == BoxKind::Obs) {
                obss.push_back(b);
                observed.insert(b.wires.begin(), b.wires.end());
            }
        }
    JellyfishForm j;
    std::vector<std::string> ap, e, c, bp;
    for (const auto& [w, s] : d.inputs) (observed.count(w) ? ap : e).push_back(w);
    for (const auto& w : created) (observed.count(w) ? c : bp).push_back(w);
    for (const auto& w : ap) j.a_prime.push_back(dims.at(w));
    for (const auto& w : e) j.e.push_back(dims.at(w));
    for (const auto& w : c) j.c.push_back(dims.at(w));
    for (const auto& w : bp) j.b_prime.push_back(dims.at(w));
    for (const auto& b : preps)
        if (b.kind == BoxKind::Prep || b.kind == BoxKind::Null) j.prep_ids.push_back(b.id);
    for (const auto& b : obss) j.obs_ids.push_back(b.id);
    std::sort(j.prep_ids.begin(), j.prep_ids.end());
    std::sort(j.obs_ids.begin(), j.obs_ids.end());

    std::vector<std::string> in_names;
    for (const auto& [w, s] : d.inputs) in_names.push_back(w);
    std::vector<std::string> s1_target = ap;
    s1_target.insert(s1_target.end(), e.begin(), e.end());
    std::vector<std::string> mid_target = c;
    mid_target.insert(mid_target.end(), ap.begin(), ap.end());
    mid_target.insert(mid_target.end(), e.begin(), e.end());
    mid_target.insert(mid_target.end(), bp.begin(), bp.end());
    std::vector<std::string> ebp = e;
    ebp.insert(ebp.end(), bp.begin(), bp.end());
    j.s1 = index_perm(in_names, s1_target);
    j.s2 = index_perm(ebp, outs);

    Diagram& jd = j.diagram;
    jd.theory = d.theory;
    jd.systems = d.systems;
    jd.tests = d.tests;
    jd.inputs = d.inputs;
    std::size_t next_id = max_id(d);
    std::vector<std::string> live = in_names;
    emit_swaps(jd, live, s1_target, next_id);
    if (!preps.empty()) jd.slices.push_back(preps);
    live.insert(live.end(), created.begin(), created.end());
    emit_swaps(jd, live, mid_target, next_id);
    if (!obss.empty()) jd.slices.push_back(obss);
    live = ebp;
    emit_swaps(jd, live, outs, next_id);
    jd.has_output = true;
    jd.outputs = outs;

    // the two tests as instruments
    Diagram pd;
    pd.theory = d.theory;
    pd.systems = d.systems;
    pd.tests = d.tests;
    if (!preps.empty()) pd.slices.push_back(preps);
    pd.has_output = true;
    pd.outputs = c;
    pd.outputs.insert(pd.outputs.end(), bp.begin(), bp.end());
    j.prep = eval(pd);

    Diagram od;
    od.theory = d.theory;
    od.systems = d.systems;
    od.tests = d.tests;
    for (const auto& w : c) od.inputs.emplace_back(w, leaf_system_name(od, dims.at(w)));
    for (const auto& w : ap) od.inputs.emplace_back(w, leaf_system_name(od, dims.at(w)));
    if (!obss.empty()) od.slices.push_back(obss);
    j.obs = eval(od);
    return j;
}

Instrument eval_jellyfish(const JellyfishForm& j) {
    const Theory th = j.prep.in.theory;
    auto sys = [&](std::initializer_list<const std::vector<int>*> parts) {
        SystemType s{th, {}};
        for (auto* p : parts) s.dims.insert(s.dims.end(), p->begin(), p->end());
        return s;
    };
    const SystemType in_s1 = [&] {
        SystemType s{th, std::vector<int>(j.s1.size())};
        std::vector<int> ae = sys({&j.a_prime, &j.e}).dims;
        for (std::size_t k = 0; k < j.s1.size(); ++k) s.dims[j.s1[k]] = ae[k];
        return s;
    }();
    const SystemType ae = sys({&j.a_prime, &j.e}), aecb = sys({&j.a_prime, &j.e, &j.c, &j.b_prime});
    const SystemType ebp = sys({&j.e, &j.b_prime});
    const std::size_t na = j.a_prime.size(), ne = j.e.size(), nc = j.c.size(), nb = j.b_prime.size();
    std::vector<std::size_t> mid;
    for (std::size_t k = 0; k < nc; ++k) mid.push_back(na + ne + k);
    for (std::size_t k = 0; k < na; ++k) mid.push_back(k);
    for (std::size_t k = 0; k < ne; ++k) mid.push_back(na + k);
    for (std::size_t k = 0; k < nb; ++k) mid.push_back(na + ne + nc + k);
    const TransfMap s1 = permutation_map(in_s1, j.s1);
    const TransfMap m = permutation_map(aecb, mid);
    const TransfMap s2 = permutation_map(ebp, j.s2);

    // labels: split by '.', merge by box id
    auto parts = [](const std::string& l) {
        std::vector<std::string> p;
        if (l == "-") return p;
        std::stringstream ss(l);
        std::string x;
        while (std::getline(ss, x, '.')) p.push_back(x);
        return p;
    };
    std::vector<std::pair<std::string, TransfMap>> evs;
    for (std::size_t y = 0; y < j.prep.size(); ++y) {
        const TransfMap front = seq_compose(m, seq_compose(par_compose(identity_map(ae), j.prep.events[y]), s1));
        for (std::size_t z = 0; z < j.obs.size(); ++z) {
            TransfMap ev = seq_compose(s2, seq_compose(par_compose(j.obs.events[z], identity_map(ebp)), front));
            std::map<std::size_t, std::string> byid;
            auto py = parts(j.prep.outcomes[y]), pz = parts(j.obs.outcomes[z]);
            for (std::size_t k = 0; k < py.size(); ++k) byid[j.prep_ids[k]] = py[k];
            for (std::size_t k = 0; k < pz.size(); ++k) byid[j.obs_ids[k]] = pz[k];
            std::string lab;
            for (const auto& [id, p] : byid) lab += (lab.empty() ? "" : ".") + p;
            evs.push_back({lab.empty() ? "-" : lab, std::move(ev)});
        }
    }
    Instrument r{in_s1, s2.out, {}, {}};
    for (auto& [l, ev] : evs) {
        r.outcomes.push_back(l);
        r.events.push_back(std::move(ev));
    }
    return r;
}

// ---- composition -------------------------------------------------------------------------

namespace {

Diagram renamed(const Diagram& d, const std::string& pre, const std::map<std::string, std::string>& wires,
                std::size_t id_offset) {
    auto w = [&](const std::string& x) {
        auto it = wires.find(x);
        return it != wires.end() ? it->second : pre + x;
    };
    Diagram r;
    r.theory = d.theory;
    for (auto s : d.systems) {
        s.name = pre + s.name;
        r.systems.push_back(std::move(s));
    }
    for (auto t : d.tests) {
        t.name = pre + t.name;
        for (auto& s : t.signature) s = pre + s;
        r.tests.push_back(std::move(t));
    }
    for (const auto& [x, s] : d.inputs) r.inputs.emplace_back(w(x), pre + s);
    for (const auto& sl : d.slices) {
        std::vector<Box> nb;
        for (auto b : sl) {
            if (!b.test.empty()) b.test = pre + b.test;
            for (auto& x : b.wires) x = w(x);
            b.id += id_offset;
            nb.push_back(std::move(b));
        }
        r.slices.push_back(std::move(nb));
    }
    r.has_output = d.has_output;
    for (const auto& x : d.outputs) r.outputs.push_back(w(x));
    return r;
}

}  // namespace

Diagram compose_seq(const Diagram& d1, const Diagram& d2) {
    if (d1.theory != d2.theory) throw TheoryMismatch("compose_seq: diagrams of different theories");
    if (!(output_system(d1) == input_system(d2))) throw CircuitError("compose_seq: output of the first differs from input of the second");
    Diagram a = renamed(d1, "l_", {}, 0);
    const auto outs = final_order(a);
    std::map<std::string, std::string> bind;
    for (std::size_t k = 0; k < d2.inputs.size(); ++k) bind[d2.inputs[k].first] = outs[k];
    Diagram b = renamed(d2, "r_", bind, max_id(d1));
    Diagram r = a;
    r.systems.insert(r.systems.end(), b.systems.begin(), b.systems.end());
    r.tests.insert(r.tests.end(), b.tests.begin(), b.tests.end());
    r.slices.insert(r.slices.end(), b.slices.begin(), b.slices.end());
    // the second diagram's final order, computed on its own
    Diagram solo = b;
    solo.inputs.clear();
    for (std::size_t k = 0; k < d2.inputs.size(); ++k) solo.inputs.emplace_back(outs[k], "r_" + d2.inputs[k].second);
    solo.systems = r.systems;
    r.has_output = true;
    r.outputs = final_order(solo);
    return r;
}

Diagram compose_par(const Diagram& d1, const Diagram& d2) {
    if (d1.theory != d2.theory) throw TheoryMismatch("compose_par: diagrams of different theories");
    Diagram a = renamed(d1, "l_", {}, 0), b = renamed(d2, "r_", {}, max_id(d1));
    Diagram r = a;
    r.systems.insert(r.systems.end(), b.systems.begin(), b.systems.end());
    r.tests.insert(r.tests.end(), b.tests.begin(), b.tests.end());
    r.inputs.insert(r.inputs.end(), b.inputs.begin(), b.inputs.end());
    r.slices.insert(r.slices.end(), b.slices.begin(), b.slices.end());
    r.has_output = true;
    r.outputs = final_order(a);
    auto ob = final_order(b);
    r.outputs.insert(r.outputs.end(), ob.begin(), ob.end());
    return r;
}

std::vector<std::size_t> induced_permutation(const Diagram& d) {
    for (const auto& sl : d.slices)
        for (const auto& b : sl)
            if (b.kind != BoxKind::Swap && b.kind != BoxKind::Id)
                throw CircuitError("induced_permutation: diagram has tests");
    std::vector<std::string> in;
    for (const auto& [w, s] : d.inputs) in.push_back(w);
    return index_perm(in, final_order(d));
}

// ---- random diagrams ---------------------------------------------------------------------

Diagram random_diagram(std::mt19937& rng, const RandomDiagramOptions& o) {
    Diagram d;
    d.theory = o.theory;
    std::vector<int> dims;
    for (int x : o.leaf_dims)
        if (!(o.theory == Theory::CT && x == 1)) dims.push_back(x);
    if (dims.empty()) dims.push_back(2);
    for (int x : dims) d.systems.push_back({"D" + std::to_string(x), {x}});
    auto pick = [&](std::size_t n) { return std::size_t(rng() % n); };
    std::vector<std::string> live;
    std::map<std::string, int> wdim;
    std::size_t fresh = 0, tuples = 1, next_id = 0;
    const std::size_t cap = 32;
    const std::size_t nin = 1 + pick(std::min<std::size_t>(3, o.max_wires));
    for (std::size_t k = 0; k < nin; ++k) {
        std::string w = "w" + std::to_string(fresh++);
        int x = dims[pick(dims.size())];
        d.inputs.emplace_back(w, "D" + std::to_string(x));
        live.push_back(w);
        wdim[w] = x;
    }
    auto outcome_count = [&](std::size_t want) {
        std::size_t m = 1 + pick(std::max<std::size_t>(1, want));
        while (m > 1 && tuples * m > cap) --m;
        tuples *= m;
        return m;
    };
    const std::size_t nslices = 1 + pick(o.max_slices);
    for (std::size_t s = 0; s < nslices; ++s) {
        std::vector<Box> boxes;
        std::set<std::string> used;
        std::vector<std::string> start = live;
        std::size_t added = 0;
        const std::size_t nboxes = 1 + pick(2);
        for (std::size_t bi = 0; bi < nboxes; ++bi) {
            std::vector<std::string> free;
            for (const auto& w : start)
                if (!used.count(w)) free.push_back(w);
            std::vector<int> kinds;
            if (live.size() + added < o.max_wires) kinds.push_back(0);
            if (!free.empty()) kinds.push_back(1), kinds.push_back(3);
            if (free.size() >= 2) kinds.push_back(2);
            if (kinds.empty()) break;
            int kind = kinds[pick(kinds.size())];
            if (pick(25) == 0) kind = 4;
            Box b;
            b.id = next_id++;
            if (kind == 0) {
                std::size_t nl = 1 + pick(std::min<std::size_t>(2, o.max_wires - live.size() - added));
                TestDef t;
                t.name = "p" + std::to_string(d.tests.size());
                t.prep = true;
                t.system = SystemType{d.theory, {}};
                for (std::size_t k = 0; k < nl; ++k) {
                    int x = dims[pick(dims.size())];
                    t.signature.push_back("D" + std::to_string(x));
                    t.system.dims.push_back(x);
                    std::string w = "w" + std::to_string(fresh++);
                    b.wires.push_back(w);
                    wdim[w] = x;
                }
                const std::size_t m = outcome_count(o.max_outcomes);
                const std::size_t dim = t.system.dimension();
                std::vector<std::vector<int>> wts(m, std::vector<int>(dim));
                int total = 0;
                for (auto& row : wts)
                    for (auto& x : row) total += (x = pick(4) == 0 ? int(pick(3)) + 1 : 0);
                if (total == 0) total = wts[0][pick(dim)] = 1;
                for (std::size_t y = 0; y < m; ++y) {
                    t.outcomes.push_back("y" + std::to_string(y));
                    RatVec v(dim);
                    for (std::size_t i = 0; i < dim; ++i) v[i] = Rat(wts[y][i]) / Rat(total);
                    t.vectors.push_back(std::move(v));
                }
                b.kind = BoxKind::Prep;
                b.test = t.name;
                d.tests.push_back(std::move(t));
                added += nl;
            } else if (kind == 1) {
                std::size_t nl = 1 + pick(std::min<std::size_t>(2, free.size()));
                std::shuffle(free.begin(), free.end(), rng);
                TestDef t;
                t.name = "m" + std::to_string(d.tests.size());
                t.prep = false;
                t.system = SystemType{d.theory, {}};
                for (std::size_t k = 0; k < nl; ++k) {
                    b.wires.push_back(free[k]);
                    used.insert(free[k]);
                    t.signature.push_back("D" + std::to_string(wdim[free[k]]));
                    t.system.dims.push_back(wdim[free[k]]);
                }
                const std::size_t dim = t.system.dimension();
                if (pick(3) == 0 && tuples * dim <= cap) {
                    t.discriminating = true;
                    fill_discriminating(t);
                    tuples *= dim;
                } else {
                    const std::size_t m = outcome_count(o.max_outcomes);
                    std::vector<RatVec> v(m, RatVec(dim));
                    for (std::size_t i = 0; i < dim; ++i) {
                        std::vector<int> w(m);
                        int tot = 0;
                        for (auto& x : w) tot += (x = int(pick(3)));
                        if (tot == 0) tot = w[pick(m)] = 1;
                        for (std::size_t y = 0; y < m; ++y) v[y][i] = Rat(w[y]) / Rat(tot);
                    }
                    for (std::size_t y = 0; y < m; ++y) t.outcomes.push_back("y" + std::to_string(y));
                    t.vectors = std::move(v);
                }
                b.kind = BoxKind::Obs;
                b.test = t.name;
                d.tests.push_back(std::move(t));
            } else if (kind == 2) {
                std::shuffle(free.begin(), free.end(), rng);
                b.kind = BoxKind::Swap;
                b.wires = {free[0], free[1]};
                used.insert(free[0]);
                used.insert(free[1]);
            } else if (kind == 3) {
                b.kind = BoxKind::Id;
                b.wires = {free[pick(free.size())]};
                used.insert(b.wires[0]);
            } else {
                b.kind = BoxKind::Null;
            }
            boxes.push_back(std::move(b));
        }
        // apply the slice to `live`
        for (const auto& b : boxes) {
            if (b.kind == BoxKind::Prep) live.insert(live.end(), b.wires.begin(), b.wires.end());
            if (b.kind == BoxKind::Obs)
                for (const auto& w : b.wires) live.erase(std::find(live.begin(), live.end(), w));
            if (b.kind == BoxKind::Swap)
                std::iter_swap(std::find(live.begin(), live.end(), b.wires[0]), std::find(live.begin(), live.end(), b.wires[1]));
        }
        d.slices.push_back(std::move(boxes));
    }
    if (pick(2) == 0) {
        d.has_output = true;
        d.outputs = live;
        std::shuffle(d.outputs.begin(), d.outputs.end(), rng);
    }
    return d;
}

// ---- permutations and canonical channels ---------------------------------------------------

PermDecomposition decompose_permutation(const std::vector<int>& a, const std::vector<int>& b,
                                        const std::vector<std::size_t>& p, std::size_t nc, Theory) {
    const std::size_t na = a.size(), n = a.size() + b.size();
    if (p.size() != n || nc > n) throw std::invalid_argument("decompose_permutation: bad sizes");
    std::vector<bool> seen(n, false);
    for (auto x : p) {
        if (x >= n || seen[x]) throw std::invalid_argument("decompose_permutation: not a permutation");
        seen[x] = true;
    }
    PermDecomposition r;
    r.a = a;
    r.b = b;
    r.nc = nc;
    std::vector<std::size_t> a1, a2, b1, b2;  // input leaf indices, in output order
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t i = p[k];
        if (i < na) (k < nc ? a1 : a2).push_back(i);
        else (k < nc ? b1 : b2).push_back(i - na);
    }
    r.s3 = a1;
    r.s3.insert(r.s3.end(), a2.begin(), a2.end());
    r.s1 = b1;
    r.s1.insert(r.s1.end(), b2.begin(), b2.end());
    for (auto i : a1) r.a1.push_back(a[i]);
    for (auto i : a2) r.a2.push_back(a[i]);
    for (auto i : b1) r.b1.push_back(b[i]);
    for (auto i : b2) r.b2.push_back(b[i]);
    // A' B' -> C and A'' B'' -> D, both in output order
    std::vector<std::size_t> cl, dl;  // global input indices of A'B' and A''B''
    for (auto i : a1) cl.push_back(i);
    for (auto i : b1) cl.push_back(na + i);
    for (auto i : a2) dl.push_back(i);
    for (auto i : b2) dl.push_back(na + i);
    for (std::size_t k = 0; k < nc; ++k) r.s4.push_back(std::size_t(std::find(cl.begin(), cl.end(), p[k]) - cl.begin()));
    for (std::size_t k = nc; k < n; ++k) r.s2.push_back(std::size_t(std::find(dl.begin(), dl.end(), p[k]) - dl.begin()));
    return r;
}

TransfMap recompose(const PermDecomposition& d, Theory th) {
    auto sys = [&](std::initializer_list<const std::vector<int>*> parts) {
        SystemType s{th, {}};
        for (auto* x : parts) s.dims.insert(s.dims.end(), x->begin(), x->end());
        return s;
    };
    const SystemType a = sys({&d.a}), b = sys({&d.b});
    TransfMap first = par_compose(permutation_map(a, d.s3), permutation_map(b, d.s1));  // A'A''B'B''
    const std::size_t n1 = d.a1.size(), n2 = d.a2.size(), m1 = d.b1.size(), m2 = d.b2.size();
    std::vector<std::size_t> mid;
    for (std::size_t k = 0; k < n1; ++k) mid.push_back(k);
    for (std::size_t k = 0; k < m1; ++k) mid.push_back(n1 + n2 + k);
    for (std::size_t k = 0; k < n2; ++k) mid.push_back(n1 + k);
    for (std::size_t k = 0; k < m2; ++k) mid.push_back(n1 + n2 + m1 + k);
    TransfMap swap = permutation_map(sys({&d.a1, &d.a2, &d.b1, &d.b2}), mid);
    TransfMap last = par_compose(permutation_map(sys({&d.a1, &d.b1}), d.s4), permutation_map(sys({&d.a2, &d.b2}), d.s2));
    return seq_compose(last, seq_compose(swap, first));
}

TransfMap erase_and_prepare(const SystemType& in, const StateVec& rho) {
    if (!is_deterministic_state(rho)) throw std::invalid_argument("erase_and_prepare: state is not deterministic");
    return seq_compose(state_map(rho), effect_map(deterministic_effect(in)));
}

TransfMap canonical_channel(const SystemType& in, const std::vector<std::size_t>& s1, std::size_t erased,
                            const StateVec& rho, const std::vector<std::size_t>& s2) {
    TransfMap p1 = permutation_map(in, s1);
    SystemType ap{in.theory, {}}, e{in.theory, {}};
    for (std::size_t k = 0; k < p1.out.leaves(); ++k) (k < erased ? ap : e).dims.push_back(p1.out.dims[k]);
    TransfMap mid = par_compose(erase_and_prepare(ap, rho), identity_map(e));
    return seq_compose(permutation_map(mid.out, s2), seq_compose(mid, p1));
}

}  // namespace optkit
