#pragma once

#include <string>
#include <vector>

namespace safin {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double limit = 0.0;
    bool pass = false;
};

struct SuiteResult {
    std::string name;
    std::vector<CheckResult> checks;
    bool pass = true;
    double worst = 0.0; // largest measured error across checks

    void add(const std::string& check_name, double measured, double limit);
};

// Invariant suites shared by the verify CLI command and the acceptance
// runner. Each is deterministic (fixed seeds) and self-contained.
SuiteResult verify_wavelet(); // perfect reconstruction, golden values, Parseval, linearity
SuiteResult verify_norm();    // FIN semantics, normalization statistics, attention contract
SuiteResult verify_loss();    // loss definitions and the weighted total
SuiteResult verify_grad();    // finite differences vs analytic gradients, primitives to full graph

std::vector<SuiteResult> verify_suites(const std::string& which); // "all" or a suite name

} // namespace safin
