#include "mcopf/newton.hpp"

#include "mcopf/errors.hpp"

#include <Eigen/Dense>

namespace mcopf {

NewtonResult damped_newton(const std::function<RVec(const RVec&)>& f, RVec x0,
                           const NewtonOptions& opts) {
    NewtonResult res;
    res.x = std::move(x0);
    RVec fx = f(res.x);
    const int n = static_cast<int>(res.x.size());
    for (int it = 0; it < opts.max_iter; ++it) {
        res.residual = fx.lpNorm<Eigen::Infinity>();
        res.iterations = it;
        if (res.residual < opts.tol) {
            res.converged = true;
            return res;
        }
        RMat jac(n, n);
        for (int k = 0; k < n; ++k) {
            RVec xp = res.x;
            xp(k) += opts.fd_step;
            jac.col(k) = (f(xp) - fx) / opts.fd_step;
        }
        Eigen::FullPivLU<RMat> lu(jac);
        if (!lu.isInvertible()) return res;
        RVec step = lu.solve(-fx);
        double fnorm = fx.norm();
        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
            RVec trial = res.x + t * step;
            RVec ft = f(trial);
            if (ft.norm() <= (1.0 - 1e-4 * t) * fnorm) {
                res.x = std::move(trial);
                fx = std::move(ft);
                accepted = true;
                break;
            }
        }
        if (!accepted) return res; // stalled
    }
    res.residual = fx.lpNorm<Eigen::Infinity>();
    res.iterations = opts.max_iter;
    res.converged = res.residual < opts.tol;
    return res;
}

namespace {

struct CircuitSystem {
    const Network& net;
    const std::map<std::string, cx>& shift;
    const std::vector<PowerInjection>& injections;
    std::vector<const Bus*> unknown_buses; // non-slack, network order
    std::map<std::string, int> offset;     // bus id -> first real index
    int dim = 0;

    CircuitSystem(const Network& n, const std::map<std::string, cx>& sh,
                  const std::vector<PowerInjection>& inj)
        : net(n), shift(sh), injections(inj) {
        for (const auto& b : net.buses) {
            if (b.is_slack()) continue;
            for (const auto& g : net.generators)
                if (g.bus == b.id)
                    throw contract_error("circuit oracle requires generators at the slack bus only");
            offset[b.id] = dim;
            unknown_buses.push_back(&b);
            dim += 2 * b.n_conductors;
        }
    }

    std::map<std::string, CVec> voltages(const RVec& x) const {
        std::map<std::string, CVec> u;
        for (const auto& b : net.buses) {
            if (b.is_slack()) {
                u[b.id] = *b.fixed_voltage;
                continue;
            }
            CVec v(b.n_conductors);
            int at = offset.at(b.id);
            for (int c = 0; c < b.n_conductors; ++c)
                v(c) = cx{x(at + 2 * c), x(at + 2 * c + 1)};
            u[b.id] = std::move(v);
        }
        return u;
    }

    cx load_setpoint(const Load& d) const {
        auto it = shift.find(d.id);
        return it == shift.end() ? d.s_ref : d.s_ref + it->second;
    }

    cx load_current(const Load& d, const CVec& u_bus) const {
        cx drop = u_bus(d.term_in) - u_bus(d.term_out);
        if (std::abs(drop) < 1e-9)
            throw singular_load_error("load " + d.id + " drop magnitude below 1e-9");
        return std::conj(load_setpoint(d) / drop);
    }

    cx injection_current(const PowerInjection& inj, const CVec& u_bus) const {
        if (inj.power == cx{0.0, 0.0}) return {0.0, 0.0};
        cx u = u_bus(inj.conductor);
        if (std::abs(u) < 1e-9)
            throw singular_load_error("injection at bus " + inj.bus + " sees near-zero voltage");
        return std::conj(inj.power / u);
    }

    // Mismatch: current into each non-slack bus (branches + injections) minus
    // the load draws, stacked re/im.
    RVec residual(const RVec& x) const {
        auto u = voltages(x);
        std::map<std::string, CVec> in;
        for (const Bus* b : unknown_buses) in[b->id] = CVec::Zero(b->n_conductors);
        for (const auto& br : net.branches) {
            CVec i = br.Y() * (u.at(br.from_bus) - u.at(br.to_bus));
            if (in.count(br.to_bus)) in[br.to_bus] += i;
            if (in.count(br.from_bus)) in[br.from_bus] -= i;
        }
        for (const auto& inj : injections)
            if (in.count(inj.bus)) in[inj.bus](inj.conductor) += injection_current(inj, u.at(inj.bus));
        for (const auto& d : net.loads) {
            if (!in.count(d.bus)) continue;
            cx i = load_current(d, u.at(d.bus));
            in[d.bus](d.term_in) -= i;
            in[d.bus](d.term_out) += i;
        }
        RVec f(dim);
        for (const Bus* b : unknown_buses) {
            int at = offset.at(b->id);
            const CVec& v = in.at(b->id);
            for (int c = 0; c < b->n_conductors; ++c) {
                f(at + 2 * c) = v(c).real();
                f(at + 2 * c + 1) = v(c).imag();
            }
        }
        return f;
    }
};

} // namespace

PowerFlowResult solve_circuit(const Network& net, const std::map<std::string, cx>& setpoint_shift,
                              const std::vector<PowerInjection>& injections,
                              const NewtonOptions& opts, const std::map<std::string, CVec>* warm) {
    CircuitSystem sys(net, setpoint_shift, injections);
    const Bus& slack = net.slack();

    RVec x0 = RVec::Zero(sys.dim);
    for (const Bus* b : sys.unknown_buses) {
        CVec start;
        if (warm && warm->count(b->id)) start = warm->at(b->id);
        else if (b->n_conductors == slack.n_conductors) start = *slack.fixed_voltage;
        else throw contract_error("no start profile for bus " + b->id);
        int at = sys.offset.at(b->id);
        for (int c = 0; c < b->n_conductors; ++c) {
            x0(at + 2 * c) = start(c).real();
            x0(at + 2 * c + 1) = start(c).imag();
        }
    }

    NewtonResult nr = damped_newton([&](const RVec& x) { return sys.residual(x); }, std::move(x0), opts);
    if (!nr.converged)
        throw no_solution_error("circuit Newton stalled at residual " + std::to_string(nr.residual));

    PowerFlowResult out;
    out.converged = true;
    out.iterations = nr.iterations;
    out.residual = nr.residual;
    out.voltages = sys.voltages(nr.x);

    IvrPoint& p = out.point;
    for (const auto& [id, v] : out.voltages) p.U[id] = v;
    for (const auto& br : net.branches)
        p.I_line[br.id] = br.Y() * (out.voltages.at(br.from_bus) - out.voltages.at(br.to_bus));
    for (const auto& d : net.loads) {
        const Bus& b = net.bus(d.bus);
        cx i = sys.load_current(d, out.voltages.at(d.bus));
        CVec v = CVec::Zero(b.n_conductors);
        v(d.term_in) = i;
        v(d.term_out) = -i;
        p.I_load[d.id] = std::move(v);
    }
    for (const auto& g : net.generators) {
        const Bus& b = net.bus(g.bus);
        for (const auto& other : net.generators)
            if (&other != &g && other.bus == g.bus)
                throw contract_error("circuit oracle requires at most one generator per bus");
        CVec out_flow = CVec::Zero(b.n_conductors);
        for (const auto& br : net.branches) {
            if (br.from_bus == b.id) out_flow += p.I_line.at(br.id);
            if (br.to_bus == b.id) out_flow -= p.I_line.at(br.id);
        }
        for (const auto& d : net.loads)
            if (d.bus == b.id) out_flow += p.I_load.at(d.id);
        for (const auto& inj : injections)
            if (inj.bus == b.id)
                out_flow(inj.conductor) -= sys.injection_current(inj, out.voltages.at(b.id));
        p.I_gen[g.id] = out_flow;
    }
    return out;
}

IvrPoint solve_power_flow_newton(const Network& net) { return solve_circuit(net).point; }

} // namespace mcopf
