#pragma once

#include "mcopf/network.hpp"
#include "mcopf/point.hpp"

#include <functional>
#include <map>
#include <vector>

namespace mcopf {

struct NewtonOptions {
    int max_iter = 60;
    double tol = 1e-12;
    double fd_step = 1e-7;
    int max_halvings = 30;
};

struct NewtonResult {
    RVec x;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
};

// Damped Newton with finite-difference Jacobian on a square system.
NewtonResult damped_newton(const std::function<RVec(const RVec&)>& f, RVec x0,
                           const NewtonOptions& opts = {});

// Extra power source feeding one conductor of a bus; the realized current is
// conj(power / U) at that conductor, so it enters the Newton system.
struct PowerInjection {
    std::string bus;
    int conductor = 0;
    cx power;
};

struct PowerFlowResult {
    IvrPoint point;
    std::map<std::string, CVec> voltages; // every bus, slack included
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
};

// Circuit solve on the validated network: unknowns are the non-slack bus
// voltages, loads draw conj(s / drop) through their terminal pair, the slack
// generator absorbs the balance. Setpoint shifts and injections parameterize
// the relaxed-circuit enumeration; both default empty for the plain solve.
// Throws no_solution_error when Newton fails and singular_load_error when a
// load drop (or a nonzero injection's voltage) falls below 1e-9 in magnitude.
PowerFlowResult solve_circuit(const Network& net,
                              const std::map<std::string, cx>& setpoint_shift = {},
                              const std::vector<PowerInjection>& injections = {},
                              const NewtonOptions& opts = {},
                              const std::map<std::string, CVec>* warm = nullptr);

IvrPoint solve_power_flow_newton(const Network& net);

} // namespace mcopf
