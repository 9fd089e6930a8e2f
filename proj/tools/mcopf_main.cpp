#include "mcopf/acceptance.hpp"
#include "mcopf/analysis.hpp"
#include "mcopf/errors.hpp"
#include "mcopf/export.hpp"
#include "mcopf/formulations.hpp"
#include "mcopf/network.hpp"
#include "mcopf/newton.hpp"
#include "mcopf/point.hpp"
#include "mcopf/solve.hpp"
#include "mcopf/svg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace mcopf;
using json = nlohmann::json;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw parse_error("cannot write '" + path + "'");
    out << text;
}

std::string f6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// Voltage magnitude per conductor, readable for both the voltage-variable
// kinds and the lifted ones (where only the diagonal of W is available).
std::vector<double> bus_magnitudes(const ProblemInstance& inst, const RVec& x, const Bus& b) {
    std::vector<double> mags;
    for (int c = 0; c < b.n_conductors; ++c) {
        if (b.is_slack()) {
            mags.push_back(std::abs((*b.fixed_voltage)(c)));
            continue;
        }
        std::string uc = "U[" + b.id + "][" + std::to_string(c) + "]";
        int re = inst.registry.find(uc + ".re");
        if (re >= 0) {
            int im = inst.registry.require(uc + ".im");
            mags.push_back(std::hypot(x(re), x(im)));
            continue;
        }
        int wd = inst.registry.find("W[" + b.id + "](" + std::to_string(c) + "," +
                                    std::to_string(c) + ").re");
        if (wd >= 0)
            mags.push_back(std::sqrt(std::max(0.0, x(wd))));
        else
            mags.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    return mags;
}

double load_phase_to_neutral(const ProblemInstance& inst, const Network& net, const RVec& x,
                             const Load& d) {
    const Bus& b = net.bus(d.bus);
    if (b.is_slack()) return std::abs((*b.fixed_voltage)(d.term_in) - (*b.fixed_voltage)(d.term_out));
    std::string ui = "U[" + b.id + "][" + std::to_string(d.term_in) + "]";
    std::string uo = "U[" + b.id + "][" + std::to_string(d.term_out) + "]";
    int ire = inst.registry.find(ui + ".re");
    if (ire >= 0) {
        cx a{x(ire), x(inst.registry.require(ui + ".im"))};
        cx o{x(inst.registry.require(uo + ".re")), x(inst.registry.require(uo + ".im"))};
        return std::abs(a - o);
    }
    // |u_in - u_out|^2 = W_ii - 2 Re W_io + W_oo
    int lo = std::min(d.term_in, d.term_out), hi = std::max(d.term_in, d.term_out);
    auto wname = [&](int r, int c, const char* p) {
        return "W[" + b.id + "](" + std::to_string(r) + "," + std::to_string(c) + ")." + p;
    };
    int wii = inst.registry.find(wname(d.term_in, d.term_in, "re"));
    int woo = inst.registry.find(wname(d.term_out, d.term_out, "re"));
    int wio = inst.registry.find(wname(lo, hi, "re"));
    if (wii < 0 || woo < 0 || wio < 0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(std::max(0.0, x(wii) - 2.0 * x(wio) + x(woo)));
}

// Relative gap against the Newton oracle, when the circuit solve succeeds.
std::optional<double> gap_vs_ivr(const Network& net, const SolveResult& res) {
    try {
        PowerFlowResult pf = solve_circuit(net);
        double p_exact = 0.0;
        for (const Generator& g : net.generators)
            if (g.in_objective) p_exact += pf.point.dispatch(net, g.id).real();
        double p = 0.0;
        for (const auto& [id, s] : res.dispatch) p += s.real();
        return relaxation_gap(p_exact, p);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int cmd_solve(const std::string& net_path, const std::string& kind_str, double theta,
              std::optional<double> tol, unsigned seed, bool as_json, const std::string& out) {
    Network net = parse_network(slurp(net_path));
    FormulationKind kind = parse_kind(kind_str);
    ProblemInstance inst = build_formulation(net, kind);
    SolverOptions opts;
    opts.seed = seed;
    if (tol) opts.feas_tol = opts.opt_tol = *tol;
    SolveResult res = solve(inst, theta, opts);

    std::optional<double> gap;
    if (kind != FormulationKind::ivr && res.status == SolveStatus::optimal)
        gap = gap_vs_ivr(net, res);

    std::ostringstream text;
    json doc;
    doc["kind"] = kind_name(kind);
    doc["theta"] = theta;
    doc["status"] = status_name(res.status);
    doc["objective"] = res.objective;
    doc["iterations"] = res.iterations;
    text << "status: " << status_name(res.status) << '\n';
    text << "objective: " << f6(res.objective) << '\n';
    for (const auto& [id, s] : res.dispatch) {
        text << "dispatch[" << id << "]: P=" << f6(s.real()) << " Q=" << f6(s.imag()) << '\n';
        doc["dispatch"][id] = {s.real(), s.imag()};
    }
    if (res.x.size() > 0) {
        for (const Bus& b : net.buses) {
            std::vector<double> mags = bus_magnitudes(inst, res.x, b);
            text << "U[" << b.id << "]:";
            for (double m : mags) text << ' ' << f6(m);
            text << '\n';
            doc["voltage_magnitudes"][b.id] = mags;
        }
        for (const Load& d : net.loads) {
            double pn = load_phase_to_neutral(inst, net, res.x, d);
            text << "phase_to_neutral[" << d.id << "]: " << f6(pn) << '\n';
            doc["phase_to_neutral"][d.id] = pn;
        }
        text << "residuals: eq=" << res.residuals.equality_inf_norm()
             << " ineq=" << res.residuals.inequality_max_violation();
        doc["residuals"]["equality_inf"] = res.residuals.equality_inf_norm();
        doc["residuals"]["inequality_max"] = res.residuals.inequality_max_violation();
        if (!inst.psd_blocks.empty()) {
            text << " psd_min=" << res.residuals.psd_worst_eig();
            doc["residuals"]["psd_min_eig"] = res.residuals.psd_worst_eig();
        }
        text << '\n';
    }
    if (gap) {
        text << "gap_vs_ivr: " << *gap << '\n';
        doc["gap_vs_ivr"] = *gap;
    }
    if (!res.message.empty()) doc["message"] = res.message;

    emit(out, as_json ? doc.dump(2) + "\n" : text.str());
    return res.status == SolveStatus::optimal ? 0 : 1;
}

int cmd_sweep(const std::string& net_path, const std::string& kind_str, int samples,
              std::optional<double> tol, unsigned seed, bool as_json, const std::string& out,
              const std::string& svg_path) {
    Network net = parse_network(slurp(net_path));
    FormulationKind kind = parse_kind(kind_str);
    SolverOptions opts;
    opts.seed = seed;
    if (tol) opts.feas_tol = opts.opt_tol = *tol;
    SweepReport rep = sweep_objective(net, kind, samples, opts);

    if (as_json) {
        json doc;
        doc["kind"] = kind_name(rep.kind);
        doc["variant"] = rep.variant;
        doc["records"] = json::array();
        for (const SweepSample& s : rep.records)
            doc["records"].push_back({{"theta", s.theta},
                                      {"status", status_name(s.status)},
                                      {"P", s.p},
                                      {"Q", s.q}});
        emit(out, doc.dump(2) + "\n");
    } else {
        emit(out, sweep_csv(rep));
    }
    if (!svg_path.empty()) {
        SvgSeries series;
        series.label = rep.variant;
        series.points = rep.pq_points();
        emit(svg_path, render_scatter_svg({series}));
    }
    return rep.optimal_count() == static_cast<int>(rep.records.size()) ? 0 : 1;
}

int cmd_check(const std::string& net_path, const std::string& point_path, double tol,
              bool as_json, const std::string& out) {
    Network net = parse_network(slurp(net_path));
    IvrPoint point = parse_ivr_point(slurp(point_path), net);
    std::vector<FormulationKind> kinds{FormulationKind::ivr, FormulationKind::svr1,
                                       FormulationKind::svr2, FormulationKind::swr1,
                                       FormulationKind::swr2};
    FeasibilityMatrix fm = feasibility_matrix({{"point", point}}, net, kinds, tol);

    std::ostringstream text;
    json doc;
    doc["tol"] = tol;
    for (size_t k = 0; k < kinds.size(); ++k) {
        const FeasibilityCell& cell = fm.cells[0][k];
        const char* verdict = cell.error ? "error" : (cell.feasible ? "true" : "false");
        text << kind_name(kinds[k]) << ":" << verdict;
        if (cell.error) text << " (" << cell.message << ")";
        text << '\n';
        json jc;
        jc["feasible"] = cell.feasible;
        jc["error"] = cell.error;
        if (cell.error)
            jc["message"] = cell.message;
        else {
            jc["equality_inf"] = cell.equality_inf;
            jc["inequality_max"] = cell.inequality_max;
            jc["psd_min_eig"] = cell.psd_min;
        }
        doc["matrix"][kind_name(kinds[k])] = jc;
    }
    emit(out, as_json ? doc.dump(2) + "\n" : text.str());
    return 0;
}

int cmd_export(const std::string& net_path, const std::string& kind_str,
               const std::string& format, const std::string& out) {
    Network net = parse_network(slurp(net_path));
    ProblemInstance inst = build_formulation(net, parse_kind(kind_str));
    emit(out, export_problem(inst, parse_export_format(format)));
    return 0;
}

int cmd_selftest(const std::string& net_path, unsigned seed, double perturb_z, bool as_json,
              const std::string& out) {
    AcceptanceReport rep = run_acceptance(net_path, seed, perturb_z);

    std::ostringstream text;
    json doc;
    doc["rows"] = json::array();
    for (const AcceptanceRow& r : rep.rows) {
        text << (r.pass ? "   " : "!! ") << "[" << r.criterion << "] " << r.name
             << ": expected " << r.expected << ", observed " << r.observed << " (" << r.tolerance
             << ") " << (r.pass ? "PASS" : "FAIL") << '\n';
        doc["rows"].push_back({{"criterion", r.criterion},
                               {"name", r.name},
                               {"expected", r.expected},
                               {"observed", r.observed},
                               {"tolerance", r.tolerance},
                               {"pass", r.pass}});
    }
    for (int k = 1; k <= rep.criteria(); ++k) {
        text << "criterion " << k << ": " << (rep.criterion_pass(k) ? "PASS" : "FAIL") << '\n';
        doc["criteria"][std::to_string(k)] = rep.criterion_pass(k);
    }
    text << (rep.all_pass() ? "all criteria pass\n" : "some criteria fail\n");
    doc["all_pass"] = rep.all_pass();

    emit(out, as_json ? doc.dump(2) + "\n" : text.str());
    return rep.all_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiconductor OPF formulations, relaxations and oracles"};
    app.require_subcommand(1);

    std::string net_path, kind_str = "ivr", out, svg_path, point_path, format = "qcqp-json";
    double theta = 0.0, perturb_z = 0.0, check_tol = 1e-6;
    std::optional<double> tol;
    int samples = 64;
    unsigned seed = 42;
    bool as_json = false;

    auto add_common = [&](CLI::App* sub, bool needs_net) {
        auto* o = sub->add_option("--network", net_path, "network case file");
        if (needs_net) o->required();
        sub->add_option("--seed", seed, "rng seed (default 42)");
        sub->add_flag("--json", as_json, "machine-readable output");
        sub->add_option("--out", out, "output path (default stdout)");
    };

    CLI::App* solve_cmd = app.add_subcommand("solve", "solve one formulation");
    add_common(solve_cmd, true);
    solve_cmd->add_option("--formulation", kind_str, "ivr|svr1|svr2|swr1|swr2")->required();
    solve_cmd->add_option("--theta", theta, "objective angle (radians)");
    solve_cmd->add_option("--tol", tol, "solver tolerance override");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep the objective angle");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--formulation", kind_str, "ivr|svr1|svr2|swr1|swr2")->required();
    sweep_cmd->add_option("--samples", samples, "number of angles (>= 4, default 64)");
    sweep_cmd->add_option("--tol", tol, "solver tolerance override");
    sweep_cmd->add_option("--svg", svg_path, "also write an SVG scatter");

    CLI::App* check_cmd = app.add_subcommand("check", "feasibility of a stored point");
    add_common(check_cmd, true);
    check_cmd->add_option("solution", point_path, "operating point file")->required();
    check_cmd->add_option("--tol", check_tol, "feasibility tolerance (default 1e-6)");

    CLI::App* export_cmd = app.add_subcommand("export", "write the problem in an exchange format");
    add_common(export_cmd, true);
    export_cmd->add_option("--formulation", kind_str, "ivr|svr1|svr2|swr1|swr2")->required();
    export_cmd->add_option("--format", format, "qcqp-json|conic-text");

    CLI::App* selftest_cmd = app.add_subcommand("selftest", "run the bundled regression suite");
    add_common(selftest_cmd, true);
    selftest_cmd->add_option("--perturb-z", perturb_z, "scale impedances by (1+v) in the kron row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*solve_cmd) return cmd_solve(net_path, kind_str, theta, tol, seed, as_json, out);
        if (*sweep_cmd)
            return cmd_sweep(net_path, kind_str, samples, tol, seed, as_json, out, svg_path);
        if (*check_cmd) return cmd_check(net_path, point_path, check_tol, as_json, out);
        if (*export_cmd) return cmd_export(net_path, kind_str, format, out);
        if (*selftest_cmd) return cmd_selftest(net_path, seed, perturb_z, as_json, out);
    } catch (const no_solution_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
