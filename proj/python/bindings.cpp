#include "suite.hpp"

#include "optkit/circuits.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>

namespace py = pybind11;
using namespace optkit;

namespace {

using Matrix = std::vector<std::vector<std::string>>;

Matrix text_matrix(const RatMat& m) {
    Matrix out(m.rows(), std::vector<std::string>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = to_string(m(r, c));
    return out;
}

cli::RunConfig config_of(const std::map<std::string, std::string>& settings) {
    cli::RunConfig c;
    for (const auto& [k, v] : settings) cli::apply_setting(c, k, v);
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "optkit native core";

    py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CircuitError>(m, "CircuitError", PyExc_ValueError);

    m.def("dimension", [](const std::string& theory, const std::vector<int>& dims) {
        return make_system(parse_theory(theory), dims).dimension();
    });
    m.def("labels", [](const std::string& theory, const std::vector<int>& dims) {
        const SystemType s = make_system(parse_theory(theory), dims);
        std::vector<std::string> out;
        for (std::size_t v = 0; v < s.dimension(); ++v) out.push_back(label_text(s, v));
        return out;
    });
    m.def("evaluate", [](const std::string& text) {
        const Instrument i = eval(parse_diagram(text));
        std::vector<std::pair<std::string, Matrix>> events;
        for (std::size_t k = 0; k < i.size(); ++k) events.emplace_back(i.outcomes[k], text_matrix(i.events[k].ext));
        return py::make_tuple(i.in.dims, i.out.dims, events);
    });
    m.def("normalize", [](const std::string& text) {
        const Diagram d = parse_diagram(text);
        const JellyfishForm j = to_jellyfish(d);
        const Instrument a = eval(d), b = eval(j.diagram);
        std::map<std::string, RatMat> ma, mb;
        for (std::size_t k = 0; k < a.size(); ++k) ma.emplace(a.outcomes[k], a.events[k].ext);
        for (std::size_t k = 0; k < b.size(); ++k) mb.emplace(b.outcomes[k], b.events[k].ext);
        return py::make_tuple(print_diagram(j.diagram), ma == mb);
    });
    m.def("claims", &cli::claim_names);
    m.def(
        "check",
        [](const std::string& claim, const std::map<std::string, std::string>& settings) {
            cli::CheckedCertificate k;
            {
                py::gil_scoped_release release;
                k = cli::run_check(claim, config_of(settings));
            }
            return cli::certificates_jsonl({k});
        },
        py::arg("claim"), py::arg("settings") = std::map<std::string, std::string>{});
    m.def("reverify", [](const std::string& json) { return reverify(certificate_from_json(Json::parse(json))); });
    m.def(
        "suite",
        [](const std::map<std::string, std::string>& settings) {
            py::gil_scoped_release release;
            return cli::report_jsonl(cli::run_suite(config_of(settings)));
        },
        py::arg("settings") = std::map<std::string, std::string>{});
}
