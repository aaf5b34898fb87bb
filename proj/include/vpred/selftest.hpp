#pragma once

#include <string>
#include <vector>

namespace vpred {

struct SelftestResult {
    int passed = 0;
    int failed = 0;
    std::vector<std::string> lines;

    bool ok() const { return failed == 0; }
};

// End-to-end oracle and invariant suite: analytic identities, autodiff
// finite-difference checks, dataset invariants, container round trips,
// sampler algebra and determinism. Fixed seeds; no trained model required;
// runs in well under a minute.
SelftestResult run_selftest();

}  // namespace vpred
