#pragma once

#include "optkit/verify.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace optkit::cli {

struct RunConfig {
    Theory theory = Theory::BCT;
    Policy policy = Policy::MinimalSC;
    int depth = 2;
    std::size_t ancilla_bound = 8;
    Catalogue catalogue = Catalogue::AllDims;
    int grid = 3;
    std::size_t outcome_cap = 8;
    std::uint32_t seed = 1;
    std::vector<int> system{2};
    std::string out;  // directory; empty: stdout

    TheoryHandle handle() const;
    SystemType system_type() const;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// key = value lines; '#' starts a comment. Unknown keys are errors.
void apply_setting(RunConfig& c, const std::string& key, const std::string& value);
void load_config(RunConfig& c, const std::string& path);
std::vector<int> parse_dims(const std::string& s);

struct CheckedCertificate {
    Certificate cert;
    bool reverified = false;
    bool informational = false;  // reported but not part of the verdict
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::vector<std::string> details;
    std::vector<CheckedCertificate> certificates;
};

// Criteria 1..11 at the given seed.
std::vector<CriterionResult> run_criteria(const RunConfig& c);
// Criteria 1..11, then 12: a second run must serialise to the same bytes.
std::vector<CriterionResult> run_suite(const RunConfig& c);

// One JSON object per line, then a markdown summary. Both deterministic.
std::string report_jsonl(const std::vector<CriterionResult>& r);
std::string report_markdown(const std::vector<CriterionResult>& r);
std::string certificates_jsonl(const std::vector<CheckedCertificate>& certs);

// Writes via a temporary file and rename.
void write_atomic(const std::string& path, const std::string& text);

std::vector<std::string> claim_names();
CheckedCertificate run_check(const std::string& claim, const RunConfig& c);

}  // namespace optkit::cli
