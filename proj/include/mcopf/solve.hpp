#pragma once

#include "mcopf/problem.hpp"

#include <map>
#include <string>
#include <vector>

namespace mcopf {

enum class SolveStatus { optimal, infeasible_detected, max_iterations, numerical_failure };

const char* status_name(SolveStatus s);

struct SolverOptions {
    double feas_tol = 1e-8;
    double opt_tol = 1e-8;
    int max_iter = 200;
    int multistart = 8;
    unsigned seed = 42;
    // Tried before the built-in start family when nonempty. The conic path
    // ignores it.
    RVec warm_start;
};

// One converged (or abandoned) local run of the interior point method.
struct LocalSolution {
    RVec x;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    int start_index = 0;
};

struct SolveResult {
    SolveStatus status = SolveStatus::numerical_failure;
    RVec x;
    double objective = 0.0;
    std::map<std::string, cx> dispatch; // generator id -> P + jQ
    int iterations = 0;
    ResidualReport residuals;

    // nonlinear path: distinct local solutions, best objective first
    std::vector<LocalSolution> local_solutions;
    double kkt_residual = 0.0;

    // conic path
    double duality_gap = 0.0;
    double psd_complementarity = 0.0; // max over blocks of trace(M Z)
    RVec certificate;                 // nonempty when infeasibility was proven

    std::string message;
};

// Dispatches on the instance kind: interior point NLP for the nonconvex
// kinds, the conic solver for the lifted kinds.
SolveResult solve(const ProblemInstance& inst, double theta, const SolverOptions& opts = {});

} // namespace mcopf
