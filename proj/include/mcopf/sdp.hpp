#pragma once

#include "mcopf/solve.hpp"

namespace mcopf {

// Conic data extracted from an affine instance:
//   min c'x  s.t.  A x = b,  G x + s = h,  s in R+^linear x PSD(sides).
// PSD blocks are stored as scaled upper-triangle vectors (off-diagonal
// entries carry sqrt(2)) of the real symmetric embedding.
struct ConicData {
    RVec c;
    RMat A;
    RVec b;
    RMat G;
    RVec h;
    int linear = 0;
    std::vector<int> block_sides; // real embedding sides
};

ConicData build_conic(const ProblemInstance& inst, double theta);

// Homogeneous self-dual interior point with Nesterov-Todd scaling; detects
// primal/dual infeasibility via certificate residuals.
SolveResult solve_sdp(const ProblemInstance& inst, double theta, const SolverOptions& opts = {});

} // namespace mcopf
