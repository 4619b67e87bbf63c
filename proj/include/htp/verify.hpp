#pragma once

#include <string>
#include <vector>

namespace htp {

// Finite-difference verification of the reverse-mode gradients: one named
// check per graph operation, plus the full trajectory-model training loss.
// Shared by the `gradcheck` CLI subcommand and the acceptance suite.
struct GradSuiteCheck {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

std::vector<GradSuiteCheck> gradient_verification_suite(std::uint64_t seed = 0);
bool gradient_suite_passes(const std::vector<GradSuiteCheck>& checks);

}  // namespace htp
