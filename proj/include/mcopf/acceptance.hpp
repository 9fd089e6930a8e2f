#pragma once

#include <string>
#include <vector>

namespace mcopf {

struct AcceptanceRow {
    int criterion = 0; // 1-based group
    std::string name;
    std::string expected;
    std::string observed;
    std::string tolerance;
    bool pass = false;
};

struct AcceptanceReport {
    std::vector<AcceptanceRow> rows;

    bool all_pass() const;
    bool criterion_pass(int criterion) const;
    int criteria() const; // highest criterion index present
};

// Runs the full regression suite on the bundled case. perturb_z scales the
// branch impedances by (1 + perturb_z) before the Kron row, deliberately
// breaking it; seed feeds the multistart solver.
AcceptanceReport run_acceptance(const std::string& case_path, unsigned seed = 42,
                                double perturb_z = 0.0);

} // namespace mcopf
