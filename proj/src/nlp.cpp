#include "mcopf/nlp.hpp"

#include "mcopf/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <sstream>

namespace mcopf {

namespace {

void add_hessian(const QExpr& q, double w, RMat& h) {
    for (const auto& [key, coeff] : q.quad) {
        auto [a, b] = key;
        if (a == b) {
            h(a, a) += 2.0 * w * coeff;
        } else {
            h(a, b) += w * coeff;
            h(b, a) += w * coeff;
        }
    }
}

RVec dense_coeffs(const LinExpr& lin, int n) {
    RVec c = RVec::Zero(n);
    for (const auto& [idx, v] : lin.terms) c(idx) += v;
    return c;
}

double max_ratio_step(const RVec& v, const RVec& dv) {
    double a = std::numeric_limits<double>::infinity();
    for (int k = 0; k < v.size(); ++k)
        if (dv(k) < 0.0) a = std::min(a, -v(k) / dv(k));
    return a;
}

struct NlpWork {
    const ProblemInstance& inst;
    int n, me, mi;
    RVec c; // objective gradient

    explicit NlpWork(const ProblemInstance& i, double theta)
        : inst(i),
          n(i.num_vars()),
          me(static_cast<int>(i.equalities.size())),
          mi(static_cast<int>(i.inequalities.size())),
          c(dense_coeffs(i.objective(theta), i.num_vars())) {}

    void evaluate(const RVec& x, RVec& ge, RVec& gi, RMat& je, RMat& ji) const {
        ge.resize(me);
        je.resize(me, n);
        for (int k = 0; k < me; ++k) {
            ge(k) = inst.equalities[static_cast<size_t>(k)].q.eval(x);
            je.row(k) = inst.equalities[static_cast<size_t>(k)].q.gradient(x, n);
        }
        gi.resize(mi);
        ji.resize(mi, n);
        for (int k = 0; k < mi; ++k) {
            gi(k) = inst.inequalities[static_cast<size_t>(k)].q.eval(x);
            ji.row(k) = inst.inequalities[static_cast<size_t>(k)].q.gradient(x, n);
        }
    }

    RMat lagrangian_hessian(const RVec& y, const RVec& z) const {
        RMat h = RMat::Zero(n, n);
        for (int k = 0; k < me; ++k) add_hessian(inst.equalities[static_cast<size_t>(k)].q, y(k), h);
        for (int k = 0; k < mi; ++k) add_hessian(inst.inequalities[static_cast<size_t>(k)].q, z(k), h);
        return h;
    }

    // Stacked KKT residual at complementarity target mu_t.
    RVec kkt_vector(const RVec& x, const RVec& s, const RVec& y, const RVec& z, double mu_t) const {
        RVec ge, gi;
        RMat je, ji;
        evaluate(x, ge, gi, je, ji);
        RVec f(n + 2 * mi + me);
        f.segment(0, n) = c + je.transpose() * y + ji.transpose() * z;
        if (mi > 0) f.segment(n, mi) = s.cwiseProduct(z).array() - mu_t;
        f.segment(n + mi, me) = ge;
        if (mi > 0) f.segment(n + mi + me, mi) = gi + s;
        return f;
    }
};

} // namespace

std::vector<RVec> multistart_points(const ProblemInstance& inst, const SolverOptions& opts) {
    std::vector<RVec> starts;
    if (opts.warm_start.size() > 0) {
        if (opts.warm_start.size() != inst.flat_start.size())
            throw contract_error("warm start dimension does not match the instance");
        starts.push_back(opts.warm_start);
    }
    std::mt19937 rng(opts.seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    int count = std::max(1, opts.multistart);
    for (int k = 0; k < count; ++k) {
        RVec x = inst.flat_start;
        if (k > 0) {
            const auto& coords = (k % 2 == 1) ? inst.voltage_vars : inst.bounded_voltage_vars;
            for (int idx : coords) x(idx) += noise(rng);
        }
        starts.push_back(std::move(x));
    }
    return starts;
}

LocalSolution solve_nlp_from(const ProblemInstance& inst, double theta, const RVec& x0,
                             const SolverOptions& opts) {
    NlpWork w(inst, theta);
    const int n = w.n, me = w.me, mi = w.mi;
    const double tol = std::min(opts.feas_tol, opts.opt_tol);

    LocalSolution sol;
    RVec x = x0;
    RVec ge, gi;
    RMat je, ji;
    w.evaluate(x, ge, gi, je, ji);
    RVec s(mi), z(mi);
    for (int k = 0; k < mi; ++k) {
        s(k) = std::max(-gi(k), 0.1);
        z(k) = 1.0;
    }
    RVec y = RVec::Zero(me);

    int stalls = 0;
    for (int it = 0; it < opts.max_iter; ++it) {
        w.evaluate(x, ge, gi, je, ji);
        RVec r_d = w.c + je.transpose() * y + ji.transpose() * z;
        RVec r_pi = mi ? RVec(gi + s) : RVec(0);
        double kkt = std::max(r_d.lpNorm<Eigen::Infinity>(),
                              me ? ge.lpNorm<Eigen::Infinity>() : 0.0);
        if (mi) {
            kkt = std::max(kkt, r_pi.lpNorm<Eigen::Infinity>());
            kkt = std::max(kkt, s.cwiseProduct(z).lpNorm<Eigen::Infinity>());
        }
        sol.kkt_residual = kkt;
        sol.iterations = it;
        if (kkt <= tol) {
            sol.converged = true;
            break;
        }

        RMat h = w.lagrangian_hessian(y, z);
        if (mi) {
            RVec d = z.cwiseQuotient(s);
            h += ji.transpose() * d.asDiagonal() * ji;
        }

        // inertia-corrected condensed KKT
        const int dim = n + me;
        RMat m(dim, dim);
        Eigen::SelfAdjointEigenSolver<RMat> eig;
        double delta_p = 0.0;
        bool factored = false;
        while (true) {
            m.setZero();
            m.topLeftCorner(n, n) = h + delta_p * RMat::Identity(n, n);
            if (me) {
                m.topRightCorner(n, me) = je.transpose();
                m.bottomLeftCorner(me, n) = je;
                m.bottomRightCorner(me, me) = -1e-10 * RMat::Identity(me, me);
            }
            eig.compute(m);
            int pos = 0, neg = 0;
            for (int k = 0; k < dim; ++k) {
                if (eig.eigenvalues()(k) > 0) ++pos;
                else if (eig.eigenvalues()(k) < 0) ++neg;
            }
            if (pos == n && neg == me) {
                factored = true;
                break;
            }
            delta_p = delta_p == 0.0 ? 1e-8 : delta_p * 10.0;
            if (delta_p > 1e6) break;
        }
        if (!factored) break;

        auto kkt_solve = [&](const RVec& rhs) -> RVec {
            RVec tmp = eig.eigenvectors().transpose() * rhs;
            tmp = tmp.cwiseQuotient(eig.eigenvalues());
            return eig.eigenvectors() * tmp;
        };
        auto direction = [&](const RVec& r_c, RVec& dx, RVec& ds, RVec& dy, RVec& dz) {
            RVec rhs(dim);
            RVec top = -r_d;
            if (mi) top += ji.transpose() * (r_c - z.cwiseProduct(r_pi)).cwiseQuotient(s);
            rhs.segment(0, n) = top;
            if (me) rhs.segment(n, me) = -ge;
            RVec u = kkt_solve(rhs);
            dx = u.segment(0, n);
            dy = me ? RVec(u.segment(n, me)) : RVec(0);
            if (mi) {
                ds = -r_pi - ji * dx;
                dz = (-r_c - z.cwiseProduct(ds)).cwiseQuotient(s);
            } else {
                ds.resize(0);
                dz.resize(0);
            }
        };

        double mu = mi ? s.dot(z) / mi : 0.0;
        double sigma = 0.0;
        if (mi) {
            RVec dx_a, ds_a, dy_a, dz_a;
            direction(s.cwiseProduct(z), dx_a, ds_a, dy_a, dz_a);
            double ap = std::min(1.0, 0.995 * max_ratio_step(s, ds_a));
            double ad = std::min(1.0, 0.995 * max_ratio_step(z, dz_a));
            double mu_aff = (s + ap * ds_a).dot(z + ad * dz_a) / mi;
            sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
        }

        double mu_t = sigma * mu;
        RVec dx, ds, dy, dz;
        RVec r_c = mi ? RVec(s.cwiseProduct(z).array() - mu_t) : RVec(0);
        direction(r_c, dx, ds, dy, dz);

        double ap = mi ? std::min(1.0, 0.995 * max_ratio_step(s, ds)) : 1.0;
        double ad = mi ? std::min(1.0, 0.995 * max_ratio_step(z, dz)) : 1.0;

        double f0 = w.kkt_vector(x, s, y, z, mu_t).norm();
        double t = 1.0;
        bool accepted = false;
        RVec xt, st, yt, zt;
        for (int half = 0; half <= 25; ++half, t *= 0.5) {
            xt = x + t * ap * dx;
            st = mi ? RVec(s + t * ap * ds) : s;
            yt = me ? RVec(y + t * ad * dy) : y;
            zt = mi ? RVec(z + t * ad * dz) : z;
            double ft = w.kkt_vector(xt, st, yt, zt, mu_t).norm();
            if (ft <= (1.0 - 1e-4 * t * std::min(ap, ad)) * f0) {
                accepted = true;
                break;
            }
        }
        x = xt;
        s = st;
        y = yt;
        z = zt;
        if (accepted) {
            stalls = 0;
        } else if (++stalls >= 5) {
            break;
        }
    }

    sol.x = x;
    sol.objective = inst.objective(theta).eval(x);
    return sol;
}

SolveResult solve_nlp(const ProblemInstance& inst, double theta, const SolverOptions& opts) {
    if (inst.kind != FormulationKind::ivr && inst.kind != FormulationKind::svr1 &&
        inst.kind != FormulationKind::svr2)
        throw contract_error("solve_nlp expects a nonconvex kind");

    std::vector<RVec> starts = multistart_points(inst, opts);
    std::vector<LocalSolution> runs;
    for (size_t k = 0; k < starts.size(); ++k) {
        LocalSolution run = solve_nlp_from(inst, theta, starts[k], opts);
        run.start_index = static_cast<int>(k);
        runs.push_back(std::move(run));
    }

    std::vector<LocalSolution> good;
    for (const auto& r : runs)
        if (r.converged) good.push_back(r);
    std::sort(good.begin(), good.end(),
              [](const LocalSolution& a, const LocalSolution& b) { return a.objective < b.objective; });
    std::vector<LocalSolution> clusters;
    for (const auto& r : good) {
        bool fresh = true;
        for (const auto& rep : clusters)
            if ((r.x - rep.x).lpNorm<Eigen::Infinity>() < 1e-4) {
                fresh = false;
                break;
            }
        if (fresh) clusters.push_back(r);
    }

    SolveResult res;
    if (clusters.empty()) {
        res.status = SolveStatus::numerical_failure;
        res.local_solutions = runs;
        std::ostringstream msg;
        msg << "no start converged;";
        for (const auto& r : runs)
            msg << " start " << r.start_index << ": kkt " << r.kkt_residual << " after "
                << r.iterations << " iterations;";
        res.message = msg.str();
        return res;
    }
    const LocalSolution& best = clusters.front();
    res.status = SolveStatus::optimal;
    res.x = best.x;
    res.objective = best.objective;
    res.iterations = best.iterations;
    res.kkt_residual = best.kkt_residual;
    res.local_solutions = clusters;
    res.residuals = residuals(inst, best.x);
    for (const auto& v : inst.registry.vars)
        if (v.sym == Sym::P_disp)
            res.dispatch[v.owner] =
                cx{best.x(inst.registry.require("P[" + v.owner + "]")),
                   best.x(inst.registry.require("Q[" + v.owner + "]"))};
    std::ostringstream msg;
    msg << good.size() << " of " << runs.size() << " starts converged into " << clusters.size()
        << " distinct solutions";
    res.message = msg.str();
    return res;
}

} // namespace mcopf
