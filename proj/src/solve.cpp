#include "mcopf/solve.hpp"

#include "mcopf/errors.hpp"
#include "mcopf/nlp.hpp"
#include "mcopf/sdp.hpp"

namespace mcopf {

const char* status_name(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible_detected: return "infeasible-detected";
    case SolveStatus::max_iterations: return "max-iterations";
    case SolveStatus::numerical_failure: return "numerical-failure";
    }
    return "unknown";
}

SolveResult solve(const ProblemInstance& inst, double theta, const SolverOptions& opts) {
    switch (inst.kind) {
    case FormulationKind::ivr:
    case FormulationKind::svr1:
    case FormulationKind::svr2: return solve_nlp(inst, theta, opts);
    case FormulationKind::swr1:
    case FormulationKind::swr2: return solve_sdp(inst, theta, opts);
    }
    throw contract_error("unreachable formulation kind");
}

} // namespace mcopf
