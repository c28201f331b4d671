#ifndef STROKEGAN_GRADCHECK_SUITE_HPP
#define STROKEGAN_GRADCHECK_SUITE_HPP

#include <string>
#include <vector>

namespace strokegan {

struct GradCheckCaseResult {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool passed = false;
    // The harness-sanity fixture wires in a wrong backward on purpose; the
    // suite passes only if that case is reported as a failure.
    bool expected_failure = false;
};

struct GradCheckSummary {
    std::vector<GradCheckCaseResult> cases;
    bool all_passed = false;
    double worst_rel_err = 0.0; // over genuine (non-fixture) cases
};

// Checks every differentiable op at random points (eps 1e-5, tolerance 1e-4)
// plus a tiny end-to-end generator loss, and runs the corrupted-backward
// control. Deterministic.
GradCheckSummary run_gradcheck_suite();

} // namespace strokegan

#endif
