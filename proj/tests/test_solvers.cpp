#include <doctest.h>

#include "mcopf/errors.hpp"
#include "mcopf/formulations.hpp"
#include "mcopf/network.hpp"
#include "mcopf/newton.hpp"
#include "mcopf/nlp.hpp"
#include "mcopf/sdp.hpp"
#include "mcopf/solve.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace mcopf;

namespace {

// Reference figures for the bundled case, rounded at the sixth decimal.
constexpr double p_exact = 1.147226;
constexpr double q_exact = 0.565434;
constexpr double p_relaxed = 1.071996;
constexpr double q_relaxed = 0.552133;
constexpr double p_spurious = 1.076921;
constexpr double q_spurious = 0.549558;

std::string read_case() {
    std::ifstream in(MCOPF_CASE_DIR "/two_bus_two_wire.json");
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Network bundled_network() { return parse_network(read_case()); }

cx voltage_at(const ProblemInstance& inst, const RVec& x, const std::string& bus, int c) {
    int re = inst.registry.require("U[" + bus + "][" + std::to_string(c) + "].re");
    int im = inst.registry.require("U[" + bus + "][" + std::to_string(c) + "].im");
    return cx{x(re), x(im)};
}

} // namespace

TEST_CASE("damped newton solves and reports failure honestly") {
    auto quad = [](const RVec& v) {
        RVec r(1);
        r(0) = v(0) * v(0) - 4.0;
        return r;
    };
    RVec x0(1);
    x0 << 3.0;
    NewtonResult ok = damped_newton(quad, x0);
    CHECK(ok.converged);
    CHECK(ok.x(0) == doctest::Approx(2.0));
    CHECK(ok.residual < 1e-10);

    auto hopeless = [](const RVec& v) {
        RVec r(1);
        r(0) = v(0) * v(0) + 1.0;
        return r;
    };
    NewtonResult bad = damped_newton(hopeless, x0);
    CHECK(!bad.converged);
}

TEST_CASE("circuit oracle reproduces the reference operating point") {
    Network net = bundled_network();
    PowerFlowResult pf = solve_circuit(net);
    REQUIRE(pf.converged);
    CHECK(pf.residual < 1e-10);

    const CVec& uj = pf.voltages.at("j");
    CHECK(std::abs(uj(0) - cx{0.937066, 0.0025}) < 5e-6);
    CHECK(std::abs(uj(1) - cx{0.062934, -0.0025}) < 5e-6);
    CHECK(std::abs(uj(0)) == doctest::Approx(0.937069).epsilon(5e-6));
    CHECK(std::abs(uj(1)) == doctest::Approx(0.062983).epsilon(5e-6));
    CHECK(std::abs(uj(0) - uj(1)) == doctest::Approx(0.874146).epsilon(5e-6));

    cx s = pf.point.dispatch(net, "g");
    CHECK(std::abs(s - cx{p_exact, q_exact}) < 5e-6);

    // The load really absorbs its set point through the terminal pair.
    cx drawn = (uj(0) - uj(1)) * std::conj(pf.point.I_load.at("d")(0));
    CHECK(std::abs(drawn - net.loads.at(0).s_ref) < 1e-10);
}

TEST_CASE("zero set point collapses to the flat profile") {
    Network net = bundled_network();
    net.loads[0].s_ref = cx{0.0, 0.0};
    PowerFlowResult pf = solve_circuit(net);
    REQUIRE(pf.converged);
    const CVec& uf = *net.bus("i").fixed_voltage;
    CHECK((pf.voltages.at("j") - uf).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(pf.point.I_line.at("l").cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(pf.point.dispatch(net, "g")) < 1e-10);
}

TEST_CASE("unservable set point raises no_solution_error") {
    Network net = bundled_network();
    net.loads[0].s_ref = cx{100.0, 50.0};
    CHECK_THROWS_AS(solve_circuit(net), no_solution_error);
}

TEST_CASE("degenerate load drop raises singular_load_error") {
    Network net = bundled_network();
    // Put the load across two equal fixed potentials: the drop is exactly 0.
    net.buses[0].fixed_voltage = CVec::Constant(2, cx{1.0, 0.0});
    net.loads[0].bus = "i";
    REQUIRE(validate_network(net).ok());
    CHECK_THROWS_AS(solve_circuit(net), singular_load_error);
}

TEST_CASE("setpoint shifts and injections steer the oracle") {
    Network net = bundled_network();
    std::map<std::string, cx> shift{{"d", cx{-1.0, -0.5}}};
    PowerFlowResult pf = solve_circuit(net, shift);
    REQUIRE(pf.converged);
    // Shifting the set point to zero reproduces the flat profile.
    CHECK((pf.voltages.at("j") - *net.bus("i").fixed_voltage).cwiseAbs().maxCoeff() < 1e-10);

    // A tiny injection perturbs the solution but keeps it solvable.
    PowerFlowResult bumped = solve_circuit(net, {}, {PowerInjection{"j", 0, cx{0.01, 0.0}}});
    REQUIRE(bumped.converged);
    CHECK((bumped.voltages.at("j") - solve_circuit(net).voltages.at("j")).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("multistart family is deterministic and leaves grounded coordinates flat") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::svr2);
    SolverOptions opts;
    auto pts = multistart_points(inst, opts);
    REQUIRE(static_cast<int>(pts.size()) == opts.multistart);
    CHECK((pts[0] - inst.flat_start).cwiseAbs().maxCoeff() == 0.0);

    int re1 = inst.registry.require("U[j][1].re");
    int im1 = inst.registry.require("U[j][1].im");
    // Even starts only move coordinates with a positive magnitude floor, so
    // the second conductor stays on the flat profile there.
    CHECK(pts[2](re1) == inst.flat_start(re1));
    CHECK(pts[2](im1) == inst.flat_start(im1));
    CHECK((pts[1] - inst.flat_start).cwiseAbs().maxCoeff() > 0.0);

    auto again = multistart_points(inst, opts);
    for (size_t k = 0; k < pts.size(); ++k)
        CHECK((pts[k] - again[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nlp on ivr matches the circuit oracle") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::ivr);
    SolveResult res = solve(inst, 0.0);
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK(res.objective == doctest::Approx(p_exact).epsilon(5e-6));
    CHECK(res.kkt_residual < 1e-6);
    cx s = res.dispatch.at("g");
    CHECK(std::abs(s - cx{p_exact, q_exact}) < 5e-6);

    PowerFlowResult pf = solve_circuit(net);
    for (int c = 0; c < 2; ++c)
        CHECK(std::abs(voltage_at(inst, res.x, "j", c) - pf.voltages.at("j")(c)) < 1e-5);

    CHECK(res.residuals.equality_inf_norm() < 1e-6);
    CHECK(res.residuals.inequality_max_violation() < 1e-6);
}

TEST_CASE("nlp on svr1 reaches the relaxed optimum") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::svr1);
    SolveResult res = solve(inst, 0.0);
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK(res.objective == doctest::Approx(p_relaxed).epsilon(5e-6));
    cx s = res.dispatch.at("g");
    CHECK(s.real() == doctest::Approx(p_relaxed).epsilon(5e-6));
    CHECK(s.imag() == doctest::Approx(q_relaxed).epsilon(5e-6));
    CHECK(std::abs(voltage_at(inst, res.x, "j", 0)) == doctest::Approx(0.926333).epsilon(1e-5));
    CHECK(std::abs(voltage_at(inst, res.x, "j", 1)) == doctest::Approx(0.018483).epsilon(1e-3));
}

TEST_CASE("nlp multistart on svr2 separates the two branches") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::svr2);
    SolveResult res = solve(inst, 0.0);
    REQUIRE(res.status == SolveStatus::optimal);

    // Best cluster first: the grounded branch undercuts the physical one.
    CHECK(res.objective == doctest::Approx(p_spurious).epsilon(5e-6));
    CHECK(res.dispatch.at("g").imag() == doctest::Approx(q_spurious).epsilon(5e-6));

    const LocalSolution* grounded = nullptr;
    const LocalSolution* physical = nullptr;
    for (const LocalSolution& l : res.local_solutions) {
        if (!l.converged) continue;
        double un = std::abs(voltage_at(inst, l.x, "j", 1));
        if (un < 1e-6 && !grounded) grounded = &l;
        if (un > 1e-2 && !physical) physical = &l;
    }
    REQUIRE(grounded != nullptr);
    REQUIRE(physical != nullptr);
    CHECK(grounded->objective == doctest::Approx(p_spurious).epsilon(5e-6));
    CHECK(std::abs(voltage_at(inst, grounded->x, "j", 0)) == doctest::Approx(0.924730).epsilon(1e-5));
    CHECK(physical->objective == doctest::Approx(p_exact).epsilon(5e-6));
}

TEST_CASE("nlp rejects lifted kinds and sdp rejects nonconvex kinds") {
    Network net = bundled_network();
    ProblemInstance swr = build_formulation(net, FormulationKind::swr1);
    CHECK_THROWS_AS(solve_nlp(swr, 0.0), contract_error);
    ProblemInstance ivr = build_formulation(net, FormulationKind::ivr);
    CHECK_THROWS_AS(solve_sdp(ivr, 0.0), contract_error);
    CHECK_THROWS_AS(build_conic(ivr, 0.0), contract_error);
}

TEST_CASE("conic data shapes match the instance") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::swr1);
    ConicData cd = build_conic(inst, 0.0);
    CHECK(cd.c.size() == inst.num_vars());
    CHECK(cd.A.rows() == cd.b.size());
    CHECK(cd.linear == static_cast<int>(inst.inequalities.size()));
    REQUIRE(cd.block_sides.size() == 1);
    CHECK(cd.block_sides[0] == 8);
    // rows: linear slacks plus the scaled upper triangle of the embedding
    CHECK(cd.G.rows() == cd.linear + 8 * 9 / 2);
    CHECK(cd.G.cols() == inst.num_vars());
}

TEST_CASE("sdp solves the lifted pair to the published objectives") {
    Network net = bundled_network();

    ProblemInstance swr1 = build_formulation(net, FormulationKind::swr1);
    SolveResult r1 = solve(swr1, 0.0);
    REQUIRE(r1.status == SolveStatus::optimal);
    CHECK(std::abs(r1.objective - p_relaxed) < 1e-4);
    CHECK(r1.psd_complementarity <= 1e-6);

    ProblemInstance swr2 = build_formulation(net, FormulationKind::swr2);
    SolveResult r2 = solve(swr2, 0.0);
    REQUIRE(r2.status == SolveStatus::optimal);
    CHECK(std::abs(r2.objective - p_exact) < 1.2e-3);
    CHECK(r2.psd_complementarity <= 1e-6);

    // Relaxations never exceed their nonconvex counterparts.
    SolveResult svr1 = solve(build_formulation(net, FormulationKind::svr1), 0.0);
    SolveResult ivr = solve(build_formulation(net, FormulationKind::ivr), 0.0);
    REQUIRE(svr1.status == SolveStatus::optimal);
    REQUIRE(ivr.status == SolveStatus::optimal);
    CHECK(r1.objective <= svr1.objective + 1e-6);
    CHECK(r2.objective <= ivr.objective + 1e-6);
}

TEST_CASE("solved results satisfy their own feasibility report") {
    Network net = bundled_network();
    for (FormulationKind k : {FormulationKind::ivr, FormulationKind::svr1, FormulationKind::svr2,
                              FormulationKind::swr1, FormulationKind::swr2}) {
        ProblemInstance inst = build_formulation(net, k);
        SolveResult res = solve(inst, 0.0);
        CAPTURE(inst.variant);
        REQUIRE(res.status == SolveStatus::optimal);
        CHECK(res.residuals.equality_inf_norm() <= 1e-6);
        CHECK(res.residuals.inequality_max_violation() <= 1e-6);
        CHECK(res.residuals.psd_worst_eig() >= -1e-6);
        CHECK(res.x.size() == inst.num_vars());
    }
}

TEST_CASE("sdp certifies an unservable set point") {
    Network net = bundled_network();
    // Orders of magnitude beyond what the voltage window can carry, so even
    // the lifted set is empty and the solver must produce a certificate.
    net.loads[0].s_ref = cx{1000.0, 500.0};
    REQUIRE(validate_network(net).ok());
    ProblemInstance inst = build_formulation(net, FormulationKind::swr2);
    SolveResult res = solve(inst, 0.0);
    CHECK(res.status == SolveStatus::infeasible_detected);
    CHECK(res.certificate.size() > 0);
}

TEST_CASE("same seed reproduces the same iterates") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::svr2);
    SolverOptions opts;
    opts.seed = 7;
    SolveResult a = solve(inst, 0.0, opts);
    SolveResult b = solve(inst, 0.0, opts);
    REQUIRE(a.status == SolveStatus::optimal);
    REQUIRE(b.status == SolveStatus::optimal);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.objective == b.objective);
    CHECK(a.local_solutions.size() == b.local_solutions.size());
}

TEST_CASE("objective direction rotates the dispatch target") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::swr2);
    const double pi = 3.14159265358979323846;
    SolveResult res = solve(inst, pi / 2.0);
    REQUIRE(res.status == SolveStatus::optimal);
    // At theta = pi/2 the objective is Q; its minimum still sits on the
    // physical branch of the bundled case.
    CHECK(res.objective == doctest::Approx(res.dispatch.at("g").imag()).epsilon(1e-6));
    CHECK(res.dispatch.at("g").imag() < q_exact + 1e-4);
}
