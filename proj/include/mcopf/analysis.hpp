#pragma once

#include "mcopf/network.hpp"
#include "mcopf/newton.hpp"
#include "mcopf/point.hpp"
#include "mcopf/problem.hpp"
#include "mcopf/solve.hpp"

#include <array>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mcopf {

struct SweepSample {
    double theta = 0.0;
    SolveStatus status = SolveStatus::numerical_failure;
    double p = std::numeric_limits<double>::quiet_NaN();
    double q = std::numeric_limits<double>::quiet_NaN();
    RVec x; // solver point; empty unless the sample solved
};

struct SweepReport {
    FormulationKind kind = FormulationKind::ivr;
    std::string variant;
    std::vector<SweepSample> records; // one per sample, theta increasing

    int optimal_count() const;
    double min_p() const; // over solved samples; quiet NaN when none solved
    std::vector<std::array<double, 2>> pq_points() const;
};

// Minimizes cos(theta) P + sin(theta) Q at theta_k = 2 pi k / samples.
// Failed samples stay in the report with their status. samples >= 4.
SweepReport sweep_objective(const Network& net, FormulationKind kind, int samples,
                            const SolverOptions& opts = {});

// Same sweep on a caller-built instance; used for the feature-flag probes.
SweepReport sweep_instance(const ProblemInstance& inst, int samples,
                           const SolverOptions& opts = {});

// 100 (p_exact - p_relaxed) / p_exact; requires p_exact > 0.
double relaxation_gap(double p_exact, double p_relaxed);

struct NamedPoint {
    std::string name;
    IvrPoint point;
};

struct FeasibilityCell {
    bool feasible = false;
    bool error = false; // embedding failed; message says why
    std::string message;
    double equality_inf = 0.0;
    double inequality_max = 0.0;
    double psd_min = 0.0;
};

struct FeasibilityMatrix {
    std::vector<std::string> point_names;
    std::vector<FormulationKind> kinds;
    std::vector<std::vector<FeasibilityCell>> cells; // [point][kind]
    double tol = 1e-6;
};

FeasibilityMatrix feasibility_matrix(const std::vector<NamedPoint>& points, const Network& net,
                                     const std::vector<FormulationKind>& kinds, double tol);

// One extra source on a conductor of a bus. The strength is a complex power:
// the circuit realizes it as the current conj(value / U) into the conductor
// while the co-located load absorbs s_ref + value, so the net set point drawn
// from the network stays s_ref for every grid value.
struct SlackSourceSpec {
    std::string bus;
    int conductor = 0;
    cx value;
};

// Square grid of source strengths, row-major with the real axis fastest.
struct SlackGrid {
    std::string bus;
    int conductor = 0;
    double lo = -0.2;
    double hi = 0.2;
    int n = 41;

    std::vector<SlackSourceSpec> specs() const;
};

enum class BruteForceMode { svr1_circuit, svr2_circuit };

BruteForceMode parse_brute_mode(std::string name); // "svr1-circuit" / "svr2-circuit"

struct CloudPoint {
    cx source;           // grid value; zero in svr2 mode
    double p = 0.0;      // objective generator dispatch
    double q = 0.0;
    double un_mag = 0.0; // |U| at the load's out terminal
    std::map<std::string, CVec> voltages;
};

struct BruteForceResult {
    BruteForceMode mode = BruteForceMode::svr1_circuit;
    std::vector<CloudPoint> points;
    int attempted = 0;
    int rootless = 0; // grid values with no admissible root

    std::vector<std::array<double, 2>> pq_points() const;
};

// Enumerates the relaxed-circuit solution set. svr1 mode sweeps the grid of
// sources, seeding Newton from the base solution, a collapsed-conductor
// guess, and the neighbouring cells' roots; roots are kept only when every
// voltage magnitude respects the bus bounds. svr2 mode ignores the grid and
// solves the single circuit with the load's out terminal grounded.
BruteForceResult brute_force_set(const Network& net, const SlackGrid& grid, BruteForceMode mode,
                                 const NewtonOptions& opts = {});

// Physical completion of the grounded-circuit root as an operating point:
// line currents from the branch admittance, the load returning its draw on
// its out terminal, the slack generator carrying the conductor-a flow with a
// conserving return. Bus balance at the load bus deliberately stays broken on
// the grounded conductor; that is the point's defining property.
IvrPoint grounded_circuit_point(const Network& net, const NewtonOptions& opts = {});

// Geometry probes for the solved (P, Q) sets.
double hull_area(std::vector<std::array<double, 2>> pts);
double max_line_deviation(const std::vector<std::array<double, 2>>& pts);
// Smallest over sampled directions of max_x d.x - d.p; negative means p sits
// outside the cloud's hull by that margin, near zero means on the boundary.
double support_margin(const std::vector<std::array<double, 2>>& cloud,
                      std::array<double, 2> p, int directions = 360);

// CSV emitters, 9 significant digits.
std::string sweep_csv(const SweepReport& rep);
std::string cloud_csv(const BruteForceResult& cloud);

} // namespace mcopf
