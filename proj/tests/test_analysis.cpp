#include <doctest.h>

#include "mcopf/analysis.hpp"
#include "mcopf/errors.hpp"
#include "mcopf/formulations.hpp"
#include "mcopf/network.hpp"
#include "mcopf/newton.hpp"
#include "mcopf/solve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

using namespace mcopf;

namespace {

constexpr double p_exact = 1.147226;
constexpr double q_exact = 0.565434;
constexpr double p_relaxed = 1.071996;
constexpr double p_spurious = 1.076921;

std::string read_case() {
    std::ifstream in(MCOPF_CASE_DIR "/two_bus_two_wire.json");
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Network bundled_network() { return parse_network(read_case()); }

const std::vector<FormulationKind> all_kinds = {FormulationKind::ivr, FormulationKind::svr1,
                                                FormulationKind::svr2, FormulationKind::swr1,
                                                FormulationKind::swr2};

IvrPoint exact_point(const Network& net) {
    PowerFlowResult pf = solve_circuit(net);
    REQUIRE(pf.converged);
    IvrPoint p = pf.point;
    p.U = pf.voltages;
    return p;
}

} // namespace

TEST_CASE("relaxation gap percentages") {
    CHECK(relaxation_gap(p_exact, p_spurious) == doctest::Approx(6.1282).epsilon(1e-4));
    CHECK(relaxation_gap(p_exact, p_relaxed) == doctest::Approx(6.5575).epsilon(1e-4));
    CHECK(relaxation_gap(0.7, 0.7) == 0.0);
    CHECK_THROWS_AS(relaxation_gap(0.0, 0.5), contract_error);
    CHECK_THROWS_AS(relaxation_gap(-1.0, 0.5), contract_error);
}

TEST_CASE("sweep rejects too few samples") {
    Network net = bundled_network();
    CHECK_THROWS_AS(sweep_objective(net, FormulationKind::ivr, 3), contract_error);
    ProblemInstance inst = build_formulation(net, FormulationKind::swr1);
    CHECK_THROWS_AS(sweep_instance(inst, 2), contract_error);
}

TEST_CASE("ivr sweep collapses onto the circuit point") {
    Network net = bundled_network();
    SweepReport rep = sweep_objective(net, FormulationKind::ivr, 8);
    CHECK(rep.kind == FormulationKind::ivr);
    CHECK(rep.variant == "ivr");
    REQUIRE(rep.records.size() == 8);
    CHECK(rep.optimal_count() == 8);

    const double pi = 3.14159265358979323846;
    for (size_t k = 0; k < rep.records.size(); ++k)
        CHECK(rep.records[k].theta == doctest::Approx(2.0 * pi * static_cast<double>(k) / 8.0));

    auto pts = rep.pq_points();
    REQUIRE(pts.size() == 8);
    double spread = 0.0;
    for (const auto& a : pts)
        spread = std::max(spread, std::hypot(a[0] - pts[0][0], a[1] - pts[0][1]));
    CHECK(spread < 1e-4);
    CHECK(rep.min_p() == doctest::Approx(p_exact).epsilon(5e-6));

    // Stability: doubling the sample count leaves the minimum in place.
    SweepReport fine = sweep_objective(net, FormulationKind::ivr, 16);
    CHECK(std::abs(fine.min_p() - rep.min_p()) < 1e-4);
}

TEST_CASE("swr2 sweep is a collinear segment ending at the circuit point") {
    Network net = bundled_network();
    SweepReport rep = sweep_objective(net, FormulationKind::swr2, 64);
    REQUIRE(rep.records.size() == 64);
    CHECK(rep.optimal_count() == 64);
    auto pts = rep.pq_points();
    CHECK(max_line_deviation(pts) < 1e-4);

    double best = 1e9;
    std::array<double, 2> end{};
    for (const auto& a : pts)
        if (a[0] < best) {
            best = a[0];
            end = a;
        }
    CHECK(std::hypot(end[0] - p_exact, end[1] - q_exact) < 1e-4);
}

TEST_CASE("relaxed sweeps enclose real area") {
    Network net = bundled_network();
    SweepReport svr1 = sweep_objective(net, FormulationKind::svr1, 16);
    CHECK(svr1.optimal_count() == 16);
    CHECK(hull_area(svr1.pq_points()) > 1e-4);
    CHECK(svr1.min_p() == doctest::Approx(p_relaxed).epsilon(1e-4));

    SweepReport swr1 = sweep_objective(net, FormulationKind::swr1, 64);
    CHECK(swr1.optimal_count() == 64);
    CHECK(hull_area(swr1.pq_points()) > 1e-4);
}

TEST_CASE("feature probes keep most of the gap") {
    Network net = bundled_network();
    for (SwrFeatures f : {SwrFeatures{true, false}, SwrFeatures{false, true}}) {
        ProblemInstance inst = build_swr(net, f);
        SolveResult res = solve(inst, 0.0);
        CAPTURE(inst.variant);
        REQUIRE(res.status == SolveStatus::optimal);
        double gap = relaxation_gap(p_exact, res.objective);
        CHECK(gap > 1.0);
        CHECK(gap < 7.0);
    }

    // The published pair brackets them.
    SolveResult swr1 = solve(build_formulation(net, FormulationKind::swr1), 0.0);
    SolveResult swr2 = solve(build_formulation(net, FormulationKind::swr2), 0.0);
    double g1 = relaxation_gap(p_exact, swr1.objective);
    double g2 = relaxation_gap(p_exact, swr2.objective);
    CHECK(g1 > 6.0);
    CHECK(g1 < 7.0);
    CHECK(std::abs(g2) < 0.1);
}

TEST_CASE("feasibility matrix classifies the three reference points") {
    Network net = bundled_network();
    std::vector<NamedPoint> pts;
    pts.push_back({"exact", exact_point(net)});
    pts.push_back({"grounded", grounded_circuit_point(net)});

    IvrPoint zero;
    zero.U["i"] = CVec::Zero(2);
    zero.U["j"] = CVec::Zero(2);
    zero.I_line["l"] = CVec::Zero(2);
    zero.I_load["d"] = CVec::Zero(2);
    zero.I_gen["g"] = CVec::Zero(2);
    pts.push_back({"zero", zero});

    FeasibilityMatrix m = feasibility_matrix(pts, net, all_kinds, 1e-6);
    REQUIRE(m.cells.size() == 3);
    REQUIRE(m.cells[0].size() == 5);
    CHECK(m.point_names[0] == "exact");

    for (int k = 0; k < 5; ++k) {
        CAPTURE(k);
        CHECK(m.cells[0][static_cast<size_t>(k)].feasible);
    }
    const bool grounded_row[] = {false, true, true, true, false};
    for (int k = 0; k < 5; ++k) {
        CAPTURE(k);
        CHECK(m.cells[1][static_cast<size_t>(k)].feasible == grounded_row[k]);
        CHECK(!m.cells[1][static_cast<size_t>(k)].error);
    }
    for (int k = 0; k < 5; ++k) CHECK(!m.cells[2][static_cast<size_t>(k)].feasible);

    // The ivr cell records which rows break.
    CHECK(m.cells[2][0].equality_inf > 0.5);
}

TEST_CASE("feasibility matrix reports embedding failures as error cells") {
    Network net = bundled_network();
    IvrPoint crippled; // no currents at all
    crippled.U["i"] = CVec::Zero(2);
    crippled.U["j"] = CVec::Zero(2);
    FeasibilityMatrix m = feasibility_matrix({{"crippled", crippled}}, net, all_kinds, 1e-6);
    for (const FeasibilityCell& cell : m.cells[0]) {
        CHECK(cell.error);
        CHECK(!cell.feasible);
        CHECK(!cell.message.empty());
    }
}

TEST_CASE("grounded circuit mode yields the single spurious point") {
    Network net = bundled_network();
    SlackGrid grid;
    grid.bus = "j";
    grid.conductor = 1;
    BruteForceResult res = brute_force_set(net, grid, BruteForceMode::svr2_circuit);
    CHECK(res.mode == BruteForceMode::svr2_circuit);
    CHECK(res.attempted == 1);
    REQUIRE(res.points.size() == 1);
    const CloudPoint& c = res.points[0];
    CHECK(c.source == cx{0.0, 0.0});
    CHECK(c.p == doctest::Approx(1.076921).epsilon(1e-4));
    CHECK(c.q == doctest::Approx(0.549558).epsilon(1e-4));
    CHECK(c.un_mag == 0.0);
    CHECK(std::abs(c.voltages.at("j")(0)) == doctest::Approx(0.924730).epsilon(1e-4));

    // Completion agrees with the standalone helper.
    IvrPoint p = grounded_circuit_point(net);
    CHECK((p.U.at("j") - c.voltages.at("j")).cwiseAbs().maxCoeff() < 1e-9);
    cx s = p.dispatch(net, "g");
    CHECK(s.real() == doctest::Approx(c.p).epsilon(1e-9));
}

TEST_CASE("degenerate grid reproduces the base circuit solution") {
    Network net = bundled_network();
    SlackGrid grid;
    grid.bus = "j";
    grid.conductor = 1;
    grid.lo = 0.0;
    grid.hi = 0.0;
    grid.n = 1;
    BruteForceResult res = brute_force_set(net, grid, BruteForceMode::svr1_circuit);
    CHECK(res.attempted == 1);
    CHECK(res.rootless == 0);
    REQUIRE(!res.points.empty());

    PowerFlowResult pf = solve_circuit(net);
    bool found = false;
    for (const CloudPoint& c : res.points)
        if ((c.voltages.at("j") - pf.voltages.at("j")).cwiseAbs().maxCoeff() < 1e-8) found = true;
    CHECK(found);
    for (const CloudPoint& c : res.points) {
        if (std::abs(c.p - p_exact) > 1e-4) continue;
        CHECK(c.q == doctest::Approx(q_exact).epsilon(1e-5));
        CHECK(c.un_mag == doctest::Approx(0.062983).epsilon(1e-5));
    }
}

TEST_CASE("full grid sketches the relaxed circuit cloud") {
    Network net = bundled_network();
    SlackGrid grid;
    grid.bus = "j";
    grid.conductor = 1;
    BruteForceResult res = brute_force_set(net, grid, BruteForceMode::svr1_circuit);
    CHECK(res.attempted == 1681);
    CHECK(res.rootless > 1000);
    CHECK(res.points.size() > 500);

    double min_p = 1e9;
    for (const CloudPoint& c : res.points) min_p = std::min(min_p, c.p);
    CHECK(min_p < 1.0720188 + 1e-3);
    CHECK(min_p > p_relaxed - 1e-6);

    auto pts = res.pq_points();
    double area = hull_area(pts);
    CHECK(area > 0.030);
    CHECK(area < 0.041);

    // The circuit point sits on the cloud boundary, not inside it.
    double margin = support_margin(pts, {p_exact, q_exact});
    CHECK(margin > -1e-6);
    CHECK(margin < 1e-3);

    // Every root respects the voltage window.
    for (const CloudPoint& c : res.points) {
        const CVec& uj = c.voltages.at("j");
        CHECK(std::abs(uj(0)) <= 1.1 + 1e-8);
        CHECK(std::abs(uj(0)) >= 0.9 - 1e-8);
        CHECK(std::abs(uj(1)) <= 1.1 + 1e-8);
    }
}

TEST_CASE("geometry helpers") {
    std::vector<std::array<double, 2>> square = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
    CHECK(hull_area(square) == doctest::Approx(1.0));
    CHECK(hull_area({{0, 0}, {1, 1}}) == 0.0);

    std::vector<std::array<double, 2>> seg;
    for (int k = 0; k <= 10; ++k)
        seg.push_back({0.1 * k, 0.05 * k});
    CHECK(max_line_deviation(seg) < 1e-12);
    seg.push_back({0.0, 1.0});
    CHECK(max_line_deviation(seg) > 0.1);

    CHECK(support_margin(square, {0.5, 0.5}) > 0.4);
    CHECK(support_margin(square, {2.0, 0.5}) < -0.9);
}

TEST_CASE("csv emitters pin their headers") {
    Network net = bundled_network();
    SweepReport rep = sweep_objective(net, FormulationKind::swr2, 4);
    std::string csv = sweep_csv(rep);
    CHECK(csv.rfind("theta,status,P,Q\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("optimal") != std::string::npos);
    // nine significant digits: theta_1 = pi / 2
    CHECK(csv.find("1.57079633") != std::string::npos);

    SlackGrid grid;
    grid.bus = "j";
    grid.conductor = 1;
    BruteForceResult cloud = brute_force_set(net, grid, BruteForceMode::svr2_circuit);
    std::string ccsv = cloud_csv(cloud);
    CHECK(ccsv.rfind("re_slack,im_slack,P,Q,Un_mag\n", 0) == 0);
    CHECK(std::count(ccsv.begin(), ccsv.end(), '\n') == 2);
}

TEST_CASE("brute mode names") {
    CHECK(parse_brute_mode("svr1-circuit") == BruteForceMode::svr1_circuit);
    CHECK(parse_brute_mode("svr2-circuit") == BruteForceMode::svr2_circuit);
    CHECK_THROWS_AS(parse_brute_mode("swr1-circuit"), contract_error);
}
