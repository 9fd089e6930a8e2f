#pragma once

#include "mcopf/solve.hpp"

namespace mcopf {

// Primal-dual interior point with slacked inequalities, Mehrotra-style
// adaptive centering, and inertia-corrected dense KKT solves. Multistart
// clusters distinct local solutions at point distance 1e-4.
SolveResult solve_nlp(const ProblemInstance& inst, double theta, const SolverOptions& opts = {});

// Single run from one starting point.
LocalSolution solve_nlp_from(const ProblemInstance& inst, double theta, const RVec& x0,
                             const SolverOptions& opts = {});

// Deterministic start family: the warm start when one is given, then flat,
// then Gaussian perturbations of the voltage coordinates (odd starts: all of
// them; even starts: only those with a strictly positive lower magnitude
// bound, leaving the rest at the flat profile).
std::vector<RVec> multistart_points(const ProblemInstance& inst, const SolverOptions& opts);

} // namespace mcopf
