// One pass/fail line per acceptance criterion. Exit status 0 iff all pass.
#include "suite.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    optkit::cli::RunConfig c;
    try {
        for (int i = 1; i + 1 < argc; i += 2) optkit::cli::apply_setting(c, std::string(argv[i]).substr(2), argv[i + 1]);
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 2;
    }
    const auto rs = optkit::cli::run_suite(c);
    bool all = true;
    for (const auto& r : rs) {
        all = all && r.pass;
        std::cout << "criterion " << r.id << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.name;
        if (!r.details.empty()) {
            std::cout << "  (";
            for (std::size_t k = 0; k < r.details.size(); ++k) std::cout << (k ? "; " : "") << r.details[k];
            std::cout << ")";
        }
        std::cout << "\n";
    }
    return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
