// optkit command-line front end.
#include "suite.hpp"

#include "optkit/circuits.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace optkit;
using namespace optkit::cli;

namespace {

struct Output {
    std::string jsonl;
    std::string md;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string nonzero_entries(const RatMat& m) {
    std::string s;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            if (sgn(m(r, c)) != 0) s += (s.empty() ? "" : " ") + std::string("(") + std::to_string(r) + "," + std::to_string(c) + ")=" + to_string(m(r, c));
    return s.empty() ? "0" : s;
}

Output instrument_output(const Instrument& i) {
    Output o;
    o.jsonl = Json{{"in", system_json(i.in)}, {"out", system_json(i.out)}, {"outcomes", i.size()}}.dump() + "\n";
    o.md = "| outcome | nonzero entries of the extended matrix |\n|---|---|\n";
    for (std::size_t k = 0; k < i.size(); ++k) {
        o.jsonl += Json{{"outcome", i.outcomes[k]}, {"ext", mat_json(i.events[k].ext)}}.dump() + "\n";
        o.md += "| " + i.outcomes[k] + " | " + nonzero_entries(i.events[k].ext) + " |\n";
    }
    return o;
}

Output info(const RunConfig& c) {
    const SystemType s = c.system_type();
    Json j{{"system", to_string(s)}, {"theory", to_string(s.theory)}, {"dims", s.dims}, {"dimension", s.dimension()},
           {"vertices", s.dimension()}, {"extended_dimension", probe_extended(s).dimension()}};
    Output o;
    o.md = "# " + to_string(s) + "\n\n- dimension " + std::to_string(s.dimension()) + "\n- vertices " + std::to_string(s.dimension()) +
           "\n- extended (probe) dimension " + std::to_string(probe_extended(s).dimension()) + "\n";
    if (s.dimension() <= 64) {
        Json labels = Json::array();
        for (std::size_t v = 0; v < s.dimension(); ++v) labels.push_back(label_text(s, v));
        j["labels"] = labels;
        std::string l;
        for (const auto& x : labels) l += (l.empty() ? "" : " ") + x.get<std::string>();
        o.md += "- pure states: " + l + "\n";
    }
    if (s.theory == Theory::BCT && s.leaves() >= 2 && s.dimension() <= 64) {
        const SpanReport r = entangled_spanning(s);
        j["entangled_spanning"] = Json{{"spanning", r.spanning}, {"entangled", r.entangled}, {"rank", r.rank}};
        o.md += "- entangled vertices " + std::to_string(r.entangled) + ", rank " + std::to_string(r.rank) +
                (r.spanning ? ", spanning\n" : ", not spanning\n");
    }
    o.jsonl = j.dump() + "\n";
    return o;
}

Output close(const RunConfig& c) {
    const SystemType s = c.system_type();
    const ChannelFamily f = c.policy == Policy::MinimalSC ? sc_channel_family(c.handle(), s, s) : channel_family(c.handle(), s, s);
    Output o;
    o.jsonl = Json{{"system", to_string(s)}, {"policy", to_string(c.policy)}, {"depth", c.depth}, {"ancilla_bound", c.ancilla_bound},
                   {"grid", c.grid}, {"channels", f.channels.size()}, {"generated", f.generated}, {"note", f.note}}
                  .dump() +
              "\n";
    for (const auto& t : f.channels) o.jsonl += map_json(t).dump() + "\n";
    o.md = "# channel family on " + to_string(s) + "\n\n- policy " + to_string(c.policy) + ", depth " + std::to_string(c.depth) +
           ", ancilla bound " + std::to_string(c.ancilla_bound) + ", grid " + std::to_string(c.grid) + "\n- " +
           std::to_string(f.channels.size()) + " distinct channels from " + std::to_string(f.generated) + " generated\n" +
           (f.note.empty() ? "" : "- " + f.note + "\n");
    return o;
}

// Returns false when some certificate does not replay.
bool replay(const std::string& path, Output& o) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::string line;
    bool all = true;
    o.md = "| claim | verdict | replayed |\n|---|---|---|\n";
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const Certificate cert = certificate_from_json(Json::parse(line));
        const bool ok = reverify(cert);
        all = all && ok;
        o.jsonl += Json{{"claim", cert.claim}, {"verdict", cert.verdict}, {"reverified", ok}}.dump() + "\n";
        o.md += "| " + cert.claim + " | " + cert.verdict + " | " + (ok ? "yes" : "NO") + " |\n";
    }
    return all;
}

void emit(const RunConfig& c, const std::string& stem, const Output& o, const std::string& format) {
    if (c.out.empty()) {
        std::cout << (format == "md" ? o.md : o.jsonl);
        return;
    }
    write_atomic(c.out + "/" + stem + ".jsonl", o.jsonl);
    write_atomic(c.out + "/" + stem + ".md", o.md);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optkit: exact operational probabilistic theory toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, theory, policy, catalogue, system, out, format = "jsonl";
    long depth = -1, ancilla = -1, grid = -1, seed = -1;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--theory", theory, "BCT or CT");
    app.add_option("--policy", policy, "minimal or minimal-sc");
    app.add_option("--catalogue", catalogue, "all or odd");
    app.add_option("--system", system, "leaf dimensions, e.g. 2,3");
    app.add_option("--depth", depth, "conditioning depth");
    app.add_option("--ancilla-bound", ancilla, "largest ancilla dimension");
    app.add_option("--grid", grid, "preparation grid exponent");
    app.add_option("--seed", seed, "seed for randomised checks");
    app.add_option("--out", out, "output directory (writes .jsonl and .md)");
    app.add_option("--format", format, "stdout format: jsonl or md")->check(CLI::IsMember({"jsonl", "md"}));

    auto* c_info = app.add_subcommand("info", "system and state-space report");
    std::string circuit;
    auto* c_eval = app.add_subcommand("eval", "evaluate a circuit file");
    c_eval->add_option("circuit", circuit)->required();
    auto* c_norm = app.add_subcommand("normalize", "jellyfish normal form of a circuit file");
    c_norm->add_option("circuit", circuit)->required();
    auto* c_close = app.add_subcommand("close", "dump the channel family of the configured system");
    std::string claim;
    auto* c_check = app.add_subcommand("check", "run one verifier and replay its certificate");
    c_check->add_option("claim", claim)->required()->check(CLI::IsMember(claim_names()));
    std::string cert_path;
    auto* c_replay = app.add_subcommand("replay", "re-verify certificates from a JSON lines file");
    c_replay->add_option("file", cert_path)->required();
    auto* c_suite = app.add_subcommand("suite", "full acceptance run");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig c;
        if (!config_path.empty()) load_config(c, config_path);
        if (!theory.empty()) apply_setting(c, "theory", theory);
        if (!policy.empty()) apply_setting(c, "policy", policy);
        if (!catalogue.empty()) apply_setting(c, "catalogue", catalogue);
        if (!system.empty()) apply_setting(c, "system", system);
        if (depth >= 0) c.depth = int(depth);
        if (ancilla >= 0) c.ancilla_bound = std::size_t(ancilla);
        if (grid >= 0) c.grid = int(grid);
        if (seed >= 0) c.seed = std::uint32_t(seed);
        if (!out.empty()) c.out = out;

        if (c_info->parsed()) {
            emit(c, "info", info(c), format);
            return 0;
        }
        if (c_eval->parsed()) {
            emit(c, "eval", instrument_output(eval(parse_diagram(read_file(circuit)))), format);
            return 0;
        }
        if (c_norm->parsed()) {
            const Diagram d = parse_diagram(read_file(circuit));
            const JellyfishForm j = to_jellyfish(d);
            const Instrument a = eval(d), b = eval(j.diagram);
            bool equal = a.size() == b.size();
            for (std::size_t k = 0; equal && k < a.size(); ++k) {
                const auto it = std::find(b.outcomes.begin(), b.outcomes.end(), a.outcomes[k]);
                equal = it != b.outcomes.end() && b.events[std::size_t(it - b.outcomes.begin())] == a.events[k];
            }
            const std::string text = print_diagram(j.diagram);
            Output o;
            o.jsonl = Json{{"a_prime", j.a_prime}, {"e", j.e}, {"c", j.c}, {"b_prime", j.b_prime}, {"s1", j.s1}, {"s2", j.s2},
                           {"equal", equal}, {"diagram", text}}
                          .dump() +
                      "\n";
            o.md = "# jellyfish form\n\nevaluation " + std::string(equal ? "equal" : "DIFFERENT") + "\n\n```\n" + text + "```\n";
            emit(c, "normalize", o, format);
            return equal ? 0 : 1;
        }
        if (c_close->parsed()) {
            emit(c, "close", close(c), format);
            return 0;
        }
        if (c_check->parsed()) {
            const CheckedCertificate k = run_check(claim, c);
            Output o;
            o.jsonl = certificates_jsonl({k});
            o.md = "| claim | verdict | replayed | note |\n|---|---|---|---|\n| " + k.cert.claim + " | " + k.cert.verdict + " | " +
                   (k.reverified ? "yes" : "NO") + " | " + k.cert.note + " |\n";
            emit(c, "check-" + claim, o, format);
            return k.reverified ? 0 : 1;
        }
        if (c_replay->parsed()) {
            Output o;
            const bool ok = replay(cert_path, o);
            emit(c, "replay", o, format);
            return ok ? 0 : 1;
        }
        if (c_suite->parsed()) {
            const auto rs = run_suite(c);
            Output o{report_jsonl(rs), report_markdown(rs)};
            emit(c, "suite", o, format);
            if (!c.out.empty()) {
                std::vector<CheckedCertificate> all;
                for (const auto& r : rs)
                    for (const auto& k : r.certificates) all.push_back(k);
                write_atomic(c.out + "/certificates.jsonl", certificates_jsonl(all));
            }
            for (const auto& r : rs)
                if (!r.pass) return 1;
            return 0;
        }
    } catch (const CircuitError& e) {
        std::cerr << "optkit: " << circuit << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "optkit: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
