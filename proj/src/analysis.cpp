#include "mcopf/analysis.hpp"

#include "mcopf/errors.hpp"
#include "mcopf/formulations.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mcopf {

namespace {

constexpr double pi = 3.14159265358979323846;

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

const Generator& objective_generator(const Network& net) {
    for (const Generator& g : net.generators)
        if (g.in_objective) return g;
    throw model_error("network has no objective generator");
}

} // namespace

int SweepReport::optimal_count() const {
    int n = 0;
    for (const SweepSample& s : records)
        if (s.status == SolveStatus::optimal) ++n;
    return n;
}

double SweepReport::min_p() const {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (const SweepSample& s : records)
        if (s.status == SolveStatus::optimal && (std::isnan(best) || s.p < best)) best = s.p;
    return best;
}

std::vector<std::array<double, 2>> SweepReport::pq_points() const {
    std::vector<std::array<double, 2>> pts;
    for (const SweepSample& s : records)
        if (s.status == SolveStatus::optimal) pts.push_back({s.p, s.q});
    return pts;
}

SweepReport sweep_instance(const ProblemInstance& inst, int samples, const SolverOptions& opts) {
    if (samples < 4) throw contract_error("sweep needs at least 4 samples");
    SweepReport rep;
    rep.kind = inst.kind;
    rep.variant = inst.variant;
    rep.records.reserve(static_cast<size_t>(samples));
    // Consecutive angles trace the same boundary, so each solution seeds the
    // next solve; flat starts alone miss the angles whose optimum sits where
    // the constraint Jacobian degenerates.
    SolverOptions step = opts;
    for (int k = 0; k < samples; ++k) {
        SweepSample s;
        s.theta = 2.0 * pi * k / samples;
        SolveResult res = solve(inst, s.theta, step);
        s.status = res.status;
        if (res.status == SolveStatus::optimal) {
            s.x = res.x;
            double p = 0.0, q = 0.0;
            for (int idx : inst.p_vars) p += res.x(idx);
            for (int idx : inst.q_vars) q += res.x(idx);
            s.p = p;
            s.q = q;
            step.warm_start = res.x;
        }
        rep.records.push_back(std::move(s));
    }
    return rep;
}

SweepReport sweep_objective(const Network& net, FormulationKind kind, int samples,
                            const SolverOptions& opts) {
    return sweep_instance(build_formulation(net, kind), samples, opts);
}

double relaxation_gap(double p_exact, double p_relaxed) {
    if (!(p_exact > 0.0)) throw contract_error("relaxation_gap needs p_exact > 0");
    return 100.0 * (p_exact - p_relaxed) / p_exact;
}

FeasibilityMatrix feasibility_matrix(const std::vector<NamedPoint>& points, const Network& net,
                                     const std::vector<FormulationKind>& kinds, double tol) {
    if (!(tol > 0.0)) throw contract_error("feasibility_matrix needs tol > 0");
    FeasibilityMatrix m;
    m.kinds = kinds;
    m.tol = tol;

    std::vector<ProblemInstance> insts;
    insts.reserve(kinds.size());
    for (FormulationKind k : kinds) insts.push_back(build_formulation(net, k));

    for (const NamedPoint& np : points) {
        m.point_names.push_back(np.name);
        std::vector<FeasibilityCell> row;
        for (const ProblemInstance& inst : insts) {
            FeasibilityCell cell;
            try {
                RVec x = embed_point(inst, net, np.point);
                ResidualReport rep = residuals(inst, x);
                cell.feasible = rep.feasible(tol);
                cell.equality_inf = rep.equality_inf_norm();
                cell.inequality_max = rep.inequality_max_violation();
                cell.psd_min = inst.psd_blocks.empty() ? 0.0 : rep.psd_worst_eig();
            } catch (const std::exception& e) {
                cell.error = true;
                cell.message = e.what();
            }
            row.push_back(std::move(cell));
        }
        m.cells.push_back(std::move(row));
    }
    return m;
}

std::vector<SlackSourceSpec> SlackGrid::specs() const {
    if (n < 1) throw contract_error("slack grid needs n >= 1");
    std::vector<SlackSourceSpec> out;
    out.reserve(static_cast<size_t>(n) * static_cast<size_t>(n));
    double step = n > 1 ? (hi - lo) / (n - 1) : 0.0;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix)
            out.push_back({bus, conductor, cx{lo + step * ix, lo + step * iy}});
    return out;
}

BruteForceMode parse_brute_mode(std::string name) {
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (name == "svr1-circuit") return BruteForceMode::svr1_circuit;
    if (name == "svr2-circuit") return BruteForceMode::svr2_circuit;
    throw contract_error("unknown brute-force mode '" + name + "'");
}

std::vector<std::array<double, 2>> BruteForceResult::pq_points() const {
    std::vector<std::array<double, 2>> pts;
    pts.reserve(points.size());
    for (const CloudPoint& c : points) pts.push_back({c.p, c.q});
    return pts;
}

namespace {

// Single grounded-return circuit: the load's out terminal is clamped to zero,
// the remaining conductor obeys U + Z_kron conj(s / U) = U_slack.
BruteForceResult brute_force_grounded(const Network& net, const NewtonOptions& opts) {
    if (net.loads.size() != 1)
        throw contract_error("grounded-circuit oracle needs exactly one load");
    if (net.branches.size() != 1)
        throw contract_error("grounded-circuit oracle needs exactly one branch");
    const Load& load = net.loads[0];
    const Branch& br = net.branches[0];
    const Bus& slack = net.slack();
    const Bus& jbus = net.bus(load.bus);
    if (jbus.is_slack() || (br.from_bus != slack.id && br.to_bus != slack.id) ||
        (br.from_bus != jbus.id && br.to_bus != jbus.id))
        throw contract_error("grounded-circuit oracle needs one slack-to-load branch");
    if (jbus.n_conductors != 2)
        throw contract_error("grounded-circuit oracle supports two conductors");

    const CVec& uf = *slack.fixed_voltage;
    if (std::abs(uf(load.term_out)) > 1e-9)
        throw contract_error("grounded-circuit oracle needs a grounded slack return");

    CMat zk = kron_reduce(br.Z(), {load.term_out});
    cx z = zk(0, 0);
    cx ua = uf(load.term_in);

    auto f = [&](const RVec& x) {
        cx u{x(0), x(1)};
        if (std::abs(u) < 1e-9) throw singular_load_error("grounded circuit: load voltage collapsed");
        cx r = u - ua + z * std::conj(load.s_ref / u);
        RVec out(2);
        out << r.real(), r.imag();
        return out;
    };
    RVec x0(2);
    x0 << ua.real(), ua.imag();
    NewtonResult nr = damped_newton(f, x0, opts);

    BruteForceResult res;
    res.mode = BruteForceMode::svr2_circuit;
    res.attempted = 1;
    if (!nr.converged) {
        res.rootless = 1;
        return res;
    }
    cx uj{nr.x(0), nr.x(1)};
    cx ia = std::conj(load.s_ref / uj);
    cx s = (uf(load.term_in) - uf(load.term_out)) * std::conj(ia);

    CloudPoint pt;
    pt.p = s.real();
    pt.q = s.imag();
    pt.un_mag = 0.0;
    CVec ujv = CVec::Zero(2);
    ujv(load.term_in) = uj;
    pt.voltages[slack.id] = uf;
    pt.voltages[jbus.id] = ujv;
    res.points.push_back(std::move(pt));
    return res;
}

double stack_diff(const std::map<std::string, CVec>& a, const std::map<std::string, CVec>& b) {
    double worst = 0.0;
    for (const auto& [id, va] : a) {
        const CVec& vb = b.at(id);
        for (Eigen::Index c = 0; c < va.size(); ++c)
            worst = std::max(worst, std::abs(va(c) - vb(c)));
    }
    return worst;
}

bool within_bounds(const Network& net, const std::map<std::string, CVec>& voltages) {
    for (const Bus& b : net.buses) {
        const CVec& u = voltages.at(b.id);
        for (int c = 0; c < b.n_conductors; ++c) {
            double mag = std::abs(u(c));
            if (mag < b.u_min(c) - 1e-9 || mag > b.u_max(c) + 1e-9) return false;
        }
    }
    return true;
}

} // namespace

BruteForceResult brute_force_set(const Network& net, const SlackGrid& grid, BruteForceMode mode,
                                 const NewtonOptions& opts) {
    if (mode == BruteForceMode::svr2_circuit) return brute_force_grounded(net, opts);

    const Load* load = nullptr;
    for (const Load& d : net.loads)
        if (d.bus == grid.bus) {
            if (load) throw contract_error("slack grid bus carries more than one load");
            load = &d;
        }
    if (!load) throw contract_error("slack grid bus '" + grid.bus + "' carries no load");
    const Generator& gen = objective_generator(net);

    PowerFlowResult base = solve_circuit(net, {}, {}, opts);

    std::vector<SlackSourceSpec> specs = grid.specs();
    BruteForceResult res;
    res.mode = mode;
    res.attempted = static_cast<int>(specs.size());

    // Roots per cell (pre-filter) seed the neighbouring cells.
    std::vector<std::vector<PowerFlowResult>> cell_roots(specs.size());

    for (size_t k = 0; k < specs.size(); ++k) {
        cx ss = specs[k].value;
        std::map<std::string, cx> shift{{load->id, ss}};
        std::vector<PowerInjection> inj{{grid.bus, grid.conductor, ss}};

        std::vector<std::map<std::string, CVec>> starts;
        starts.push_back(base.voltages);
        {
            // Collapsed-conductor guess: the out terminal sinks the whole
            // source through the flat-start load current.
            const CVec& uj = base.voltages.at(grid.bus);
            cx drop = uj(load->term_in) - uj(load->term_out);
            if (std::abs(drop) > 1e-9) {
                cx i_flat = std::conj((load->s_ref + ss) / drop);
                if (std::abs(i_flat) > 1e-12) {
                    auto low = base.voltages;
                    low[grid.bus](load->term_out) = -ss / std::conj(i_flat);
                    starts.push_back(std::move(low));
                }
            }
        }
        int ix = static_cast<int>(k) % grid.n;
        int iy = static_cast<int>(k) / grid.n;
        if (ix > 0)
            for (const PowerFlowResult& r : cell_roots[k - 1]) starts.push_back(r.voltages);
        if (iy > 0)
            for (const PowerFlowResult& r : cell_roots[k - static_cast<size_t>(grid.n)])
                starts.push_back(r.voltages);

        std::vector<PowerFlowResult> roots;
        for (const auto& warm : starts) {
            PowerFlowResult pf;
            try {
                pf = solve_circuit(net, shift, inj, opts, &warm);
            } catch (const no_solution_error&) {
                continue;
            } catch (const singular_load_error&) {
                continue;
            }
            bool dup = false;
            for (const PowerFlowResult& r : roots)
                if (stack_diff(r.voltages, pf.voltages) < 1e-8) dup = true;
            if (!dup) roots.push_back(std::move(pf));
        }

        bool any = false;
        for (const PowerFlowResult& r : roots) {
            if (!within_bounds(net, r.voltages)) continue;
            any = true;
            CloudPoint pt;
            pt.source = ss;
            cx s = r.point.dispatch(net, gen.id);
            pt.p = s.real();
            pt.q = s.imag();
            pt.un_mag = std::abs(r.voltages.at(grid.bus)(load->term_out));
            pt.voltages = r.voltages;
            res.points.push_back(std::move(pt));
        }
        if (!any) ++res.rootless;
        cell_roots[k] = std::move(roots);
    }
    return res;
}

IvrPoint grounded_circuit_point(const Network& net, const NewtonOptions& opts) {
    BruteForceResult res = brute_force_set(net, {}, BruteForceMode::svr2_circuit, opts);
    if (res.points.empty()) throw no_solution_error("grounded circuit did not converge");
    const CloudPoint& pt = res.points[0];
    const Load& load = net.loads[0];
    const Branch& br = net.branches[0];
    const Bus& slack = net.slack();

    IvrPoint p;
    p.U = pt.voltages;
    CVec du = pt.voltages.at(br.from_bus) - pt.voltages.at(br.to_bus);
    CVec il = br.Y() * du;
    p.I_line[br.id] = il;

    cx uj = pt.voltages.at(load.bus)(load.term_in);
    cx ia = std::conj(load.s_ref / uj);
    CVec id = CVec::Zero(2);
    id(load.term_in) = ia;
    id(load.term_out) = -ia;
    p.I_load[load.id] = id;

    // The slack generator sources the conductor-a branch current and returns
    // it on the other conductor, keeping the device conserving.
    cx flow = br.from_bus == slack.id ? il(load.term_in) : -il(load.term_in);
    CVec ig = CVec::Zero(2);
    ig(load.term_in) = flow;
    ig(load.term_out) = -flow;
    for (const Generator& g : net.generators)
        if (g.bus == slack.id) p.I_gen[g.id] = ig;
    return p;
}

double hull_area(std::vector<std::array<double, 2>> pts) {
    if (pts.size() < 3) return 0.0;
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return 0.0;

    auto cross = [](const std::array<double, 2>& o, const std::array<double, 2>& a,
                    const std::array<double, 2>& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<std::array<double, 2>> hull(2 * pts.size());
    size_t h = 0;
    for (const auto& p : pts) {
        while (h >= 2 && cross(hull[h - 2], hull[h - 1], p) <= 0) --h;
        hull[h++] = p;
    }
    size_t lower = h + 1;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        while (h >= lower && cross(hull[h - 2], hull[h - 1], *it) <= 0) --h;
        hull[h++] = *it;
    }
    hull.resize(h - 1);

    double area = 0.0;
    for (size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        area += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * std::abs(area);
}

double max_line_deviation(const std::vector<std::array<double, 2>>& pts) {
    if (pts.size() < 3) return 0.0;
    double cx_ = 0.0, cy = 0.0;
    for (const auto& p : pts) {
        cx_ += p[0];
        cy += p[1];
    }
    cx_ /= static_cast<double>(pts.size());
    cy /= static_cast<double>(pts.size());

    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : pts) {
        Eigen::Vector2d d(p[0] - cx_, p[1] - cy);
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    Eigen::Vector2d minor_axis = eig.eigenvectors().col(0); // smallest eigenvalue first

    double worst = 0.0;
    for (const auto& p : pts)
        worst = std::max(worst, std::abs(minor_axis(0) * (p[0] - cx_) + minor_axis(1) * (p[1] - cy)));
    return worst;
}

double support_margin(const std::vector<std::array<double, 2>>& cloud, std::array<double, 2> p,
                      int directions) {
    if (cloud.empty()) throw contract_error("support_margin needs a nonempty cloud");
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < directions; ++k) {
        double phi = 2.0 * pi * k / directions;
        double dx = std::cos(phi), dy = std::sin(phi);
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& c : cloud) best = std::max(best, dx * c[0] + dy * c[1]);
        margin = std::min(margin, best - (dx * p[0] + dy * p[1]));
    }
    return margin;
}

std::string sweep_csv(const SweepReport& rep) {
    std::ostringstream out;
    out << "theta,status,P,Q\n";
    for (const SweepSample& s : rep.records)
        out << fmt9(s.theta) << ',' << status_name(s.status) << ',' << fmt9(s.p) << ','
            << fmt9(s.q) << '\n';
    return out.str();
}

std::string cloud_csv(const BruteForceResult& cloud) {
    std::ostringstream out;
    out << "re_slack,im_slack,P,Q,Un_mag\n";
    for (const CloudPoint& c : cloud.points)
        out << fmt9(c.source.real()) << ',' << fmt9(c.source.imag()) << ',' << fmt9(c.p) << ','
            << fmt9(c.q) << ',' << fmt9(c.un_mag) << '\n';
    return out.str();
}

} // namespace mcopf
