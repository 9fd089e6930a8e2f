#include "mcopf/sdp.hpp"

#include "mcopf/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace mcopf {

namespace {

const double RT2 = std::sqrt(2.0);

int svec_dim(int side) { return side * (side + 1) / 2; }

RVec svec(const RMat& m) {
    const int r = static_cast<int>(m.rows());
    RVec v(svec_dim(r));
    int k = 0;
    for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) v(k++) = i == j ? m(i, j) : RT2 * m(i, j);
    return v;
}

RMat smat(const RVec& v, int side) {
    RMat m(side, side);
    int k = 0;
    for (int i = 0; i < side; ++i)
        for (int j = i; j < side; ++j) {
            double x = i == j ? v(k) : v(k) / RT2;
            m(i, j) = x;
            m(j, i) = x;
            ++k;
        }
    return m;
}

LinExpr scaled_lin(LinExpr lin, double f) {
    for (auto& [idx, v] : lin.terms) v *= f;
    lin.constant *= f;
    return lin;
}

// Entry (i, j) of the real symmetric embedding [[Re M, -Im M], [Im M, Re M]]
// as an affine function of the registry.
LinExpr embedding_entry(const PsdBlock& blk, int i, int j) {
    const int n = blk.cdim;
    if (i < n && j < n) return re_part(blk.entries[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    if (i < n) return scaled_lin(im_part(blk.entries[static_cast<size_t>(i)][static_cast<size_t>(j - n)]), -1.0);
    if (j < n) return im_part(blk.entries[static_cast<size_t>(i - n)][static_cast<size_t>(j)]);
    return re_part(blk.entries[static_cast<size_t>(i - n)][static_cast<size_t>(j - n)]);
}

struct Cone {
    int linear = 0;
    std::vector<int> sides;
    std::vector<int> offsets; // start of each block segment
    int dim = 0;
    int degree = 0;

    void finish() {
        dim = linear;
        degree = linear;
        for (int s : sides) {
            offsets.push_back(dim);
            dim += svec_dim(s);
            degree += s;
        }
    }
};

// Nesterov-Todd scaling state for the current (s, z).
struct Scaling {
    RVec wl; // linear part
    std::vector<RMat> r, rinv;
    RVec lambda; // scaled point, full cone dimension

    static RMat chol(RMat m) {
        Eigen::LLT<RMat> llt(m);
        if (llt.info() != Eigen::Success) {
            double bump = 1e-13 * (1.0 + m.trace());
            llt.compute(m + bump * RMat::Identity(m.rows(), m.cols()));
            if (llt.info() != Eigen::Success)
                throw no_solution_error("cone iterate lost positive definiteness");
        }
        return llt.matrixL();
    }

    void compute(const Cone& cone, const RVec& s, const RVec& z) {
        lambda.resize(cone.dim);
        wl = s.head(cone.linear).cwiseQuotient(z.head(cone.linear)).cwiseSqrt();
        lambda.head(cone.linear) = s.head(cone.linear).cwiseProduct(z.head(cone.linear)).cwiseSqrt();
        r.clear();
        rinv.clear();
        for (size_t b = 0; b < cone.sides.size(); ++b) {
            int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
            RMat ls = chol(smat(s.segment(at, len), side));
            RMat lz = chol(smat(z.segment(at, len), side));
            Eigen::JacobiSVD<RMat> svd(lz.transpose() * ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
            RVec d = svd.singularValues().cwiseMax(1e-150);
            RVec dih = d.cwiseSqrt().cwiseInverse();
            r.push_back(ls * svd.matrixV() * dih.asDiagonal());
            rinv.push_back(dih.asDiagonal() * svd.matrixU().transpose() * lz.transpose());
            RMat lam = RMat::Zero(side, side);
            lam.diagonal() = d;
            lambda.segment(at, len) = svec(lam);
        }
    }

    // z-space scaling: v -> svec(R' mat(v) R); inverse of the s-space one.
    RVec scale_z(const Cone& cone, const RVec& v) const {
        RVec out(cone.dim);
        out.head(cone.linear) = wl.cwiseProduct(v.head(cone.linear));
        for (size_t b = 0; b < cone.sides.size(); ++b) {
            int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
            out.segment(at, len) = svec(r[b].transpose() * smat(v.segment(at, len), side) * r[b]);
        }
        return out;
    }

    RVec scale_s(const Cone& cone, const RVec& v) const {
        RVec out(cone.dim);
        out.head(cone.linear) = v.head(cone.linear).cwiseQuotient(wl);
        for (size_t b = 0; b < cone.sides.size(); ++b) {
            int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
            out.segment(at, len) =
                svec(rinv[b] * smat(v.segment(at, len), side) * rinv[b].transpose());
        }
        return out;
    }

    // W' v: adjoint of scale_z; maps scaled-space values back to s-space.
    RVec apply_wt(const Cone& cone, const RVec& v) const {
        RVec out(cone.dim);
        out.head(cone.linear) = wl.cwiseProduct(v.head(cone.linear));
        for (size_t b = 0; b < cone.sides.size(); ++b) {
            int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
            out.segment(at, len) = svec(r[b] * smat(v.segment(at, len), side) * r[b].transpose());
        }
        return out;
    }

    RMat wtw_matrix(const Cone& cone) const {
        RMat m = RMat::Zero(cone.dim, cone.dim);
        m.topLeftCorner(cone.linear, cone.linear) = wl.cwiseAbs2().asDiagonal();
        for (size_t b = 0; b < cone.sides.size(); ++b) {
            int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
            RMat p = r[b] * r[b].transpose();
            RVec e = RVec::Zero(len);
            for (int k = 0; k < len; ++k) {
                e(k) = 1.0;
                m.block(at, at, len, len).col(k) = svec(p * smat(e, side) * p);
                e(k) = 0.0;
            }
        }
        return m;
    }
};

// Jordan product u o v and the inverse action of lambda.
RVec jordan(const Cone& cone, const RVec& u, const RVec& v) {
    RVec out(cone.dim);
    out.head(cone.linear) = u.head(cone.linear).cwiseProduct(v.head(cone.linear));
    for (size_t b = 0; b < cone.sides.size(); ++b) {
        int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
        RMat mu = smat(u.segment(at, len), side);
        RMat mv = smat(v.segment(at, len), side);
        out.segment(at, len) = svec(0.5 * (mu * mv + mv * mu));
    }
    return out;
}

// Solves lambda o u = v for u, exploiting that lambda is diagonal in scaled
// space: entries divide by (d_i + d_j) / 2.
RVec lambda_inv(const Cone& cone, const RVec& lambda, const RVec& v) {
    RVec out(cone.dim);
    out.head(cone.linear) = v.head(cone.linear).cwiseQuotient(lambda.head(cone.linear));
    for (size_t b = 0; b < cone.sides.size(); ++b) {
        int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
        RVec d(side);
        {
            RMat lm = smat(lambda.segment(at, len), side);
            d = lm.diagonal();
        }
        int k = at;
        for (int i = 0; i < side; ++i)
            for (int j = i; j < side; ++j) out(k) = v(k) / (0.5 * (d(i) + d(j))), ++k;
    }
    return out;
}

RVec cone_identity(const Cone& cone) {
    RVec e = RVec::Zero(cone.dim);
    e.head(cone.linear).setOnes();
    for (size_t b = 0; b < cone.sides.size(); ++b)
        e.segment(cone.offsets[b], svec_dim(cone.sides[b])) =
            svec(RMat::Identity(cone.sides[b], cone.sides[b]));
    return e;
}

// Largest step alpha with lambda + alpha v staying in the cone (scaled space).
double cone_step(const Cone& cone, const RVec& lambda, const RVec& v) {
    double a = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cone.linear; ++k)
        if (v(k) < 0.0) a = std::min(a, -lambda(k) / v(k));
    for (size_t b = 0; b < cone.sides.size(); ++b) {
        int side = cone.sides[b], at = cone.offsets[b], len = svec_dim(side);
        RMat lm = smat(lambda.segment(at, len), side);
        RVec dih = lm.diagonal().cwiseSqrt().cwiseInverse();
        RMat h = dih.asDiagonal() * smat(v.segment(at, len), side) * dih.asDiagonal();
        Eigen::SelfAdjointEigenSolver<RMat> eig(h, Eigen::EigenvaluesOnly);
        double lo = eig.eigenvalues().minCoeff();
        if (lo < 0.0) a = std::min(a, -1.0 / lo);
    }
    return a;
}

RVec dense_coeffs(const LinExpr& lin, int n) {
    RVec c = RVec::Zero(n);
    for (const auto& [idx, v] : lin.terms) c(idx) += v;
    return c;
}

} // namespace

ConicData build_conic(const ProblemInstance& inst, double theta) {
    if (!inst.is_conic())
        throw contract_error("conic data requires an affine instance, got " + inst.variant);
    const int n = inst.num_vars();
    ConicData cd;
    cd.c = dense_coeffs(inst.objective(theta), n);
    const int me = static_cast<int>(inst.equalities.size());
    cd.A.resize(me, n);
    cd.b.resize(me);
    for (int k = 0; k < me; ++k) {
        const LinExpr& lin = inst.equalities[static_cast<size_t>(k)].q.affine;
        cd.A.row(k) = dense_coeffs(lin, n);
        cd.b(k) = -lin.constant;
    }
    cd.linear = static_cast<int>(inst.inequalities.size());
    int mz = cd.linear;
    for (const auto& blk : inst.psd_blocks) {
        cd.block_sides.push_back(blk.rdim());
        mz += svec_dim(blk.rdim());
    }
    cd.G.resize(mz, n);
    cd.h.resize(mz);
    for (int k = 0; k < cd.linear; ++k) {
        const LinExpr& lin = inst.inequalities[static_cast<size_t>(k)].q.affine;
        cd.G.row(k) = dense_coeffs(lin, n);
        cd.h(k) = -lin.constant;
    }
    int row = cd.linear;
    for (const auto& blk : inst.psd_blocks) {
        const int side = blk.rdim();
        for (int i = 0; i < side; ++i)
            for (int j = i; j < side; ++j) {
                double f = i == j ? 1.0 : RT2;
                LinExpr lin = embedding_entry(blk, i, j);
                lin.compress();
                cd.G.row(row) = -f * dense_coeffs(lin, n);
                cd.h(row) = f * lin.constant;
                ++row;
            }
    }
    return cd;
}

SolveResult solve_sdp(const ProblemInstance& inst, double theta, const SolverOptions& opts) {
    if (inst.kind != FormulationKind::swr1 && inst.kind != FormulationKind::swr2)
        throw contract_error("solve_sdp expects a lifted kind");
    ConicData cd = build_conic(inst, theta);
    Cone cone;
    cone.linear = cd.linear;
    cone.sides = cd.block_sides;
    cone.finish();

    const int n = static_cast<int>(cd.c.size());
    const int me = static_cast<int>(cd.b.size());
    const int mz = cone.dim;
    const double ftol = opts.feas_tol, otol = opts.opt_tol;
    const double resx0 = std::max(1.0, cd.c.norm());
    const double resy0 = std::max(1.0, cd.b.norm());
    const double resz0 = std::max(1.0, cd.h.norm());

    RVec x = RVec::Zero(n), y = RVec::Zero(me);
    RVec s = cone_identity(cone), z = s;
    double tau = 1.0, kappa = 1.0;

    SolveResult res;
    res.x = RVec::Zero(n);

    auto finish = [&](SolveStatus st, const std::string& msg) {
        res.status = st;
        res.message = msg;
        res.x = x / tau;
        res.objective = cd.c.dot(res.x);
        res.duality_gap = s.dot(z) / (tau * tau);
        res.residuals = residuals(inst, res.x);
        res.psd_complementarity = 0.0;
        for (size_t b = 0; b < cone.sides.size(); ++b) {
            int at = cone.offsets[b], len = svec_dim(cone.sides[b]);
            res.psd_complementarity = std::max(
                res.psd_complementarity, s.segment(at, len).dot(z.segment(at, len)) / (tau * tau));
        }
        for (const auto& v : inst.registry.vars)
            if (v.sym == Sym::P_disp)
                res.dispatch[v.owner] = cx{res.x(inst.registry.require("P[" + v.owner + "]")),
                                           res.x(inst.registry.require("Q[" + v.owner + "]"))};
        return res;
    };

    double best_metric = std::numeric_limits<double>::infinity();
    RVec best_x = x, best_s = s, best_z = z;
    double best_tau = tau;
    int slow_steps = 0;
    auto restore_best = [&]() {
        x = best_x;
        s = best_s;
        z = best_z;
        tau = best_tau;
    };

    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        RVec rx = cd.A.transpose() * y + cd.G.transpose() * z + cd.c * tau;
        RVec ry = cd.A * x - cd.b * tau;
        RVec rz = cd.G * x + s - cd.h * tau;
        double rt = cd.c.dot(x) + cd.b.dot(y) + cd.h.dot(z) + kappa;

        double pcost = cd.c.dot(x) / tau;
        double gap = s.dot(z) / (tau * tau);
        double relgap = gap / std::max(1.0, std::abs(pcost));
        double pres = std::max(ry.norm() / resy0, rz.norm() / resz0) / tau;
        double dres = rx.norm() / resx0 / tau;
        double metric = std::max({pres, dres, relgap});
        if (metric < best_metric) {
            best_metric = metric;
            best_x = x;
            best_s = s;
            best_z = z;
            best_tau = tau;
        }
        if (pres <= ftol && dres <= ftol && relgap <= otol)
            return finish(SolveStatus::optimal, "converged");

        // Certificates are only meaningful on the kappa-dominant ray, and the
        // ray must carry real mass: without the absolute floor a feasible
        // problem with no strict primal interior can drift into the corner
        // where tau and kappa are both roundoff and the normalized residual
        // tests pass on cancellation noise.
        const bool ray = kappa > 1e2 * tau && kappa > 1e-8;
        double hzby = cd.h.dot(z) + cd.b.dot(y);
        if (ray && hzby < 0.0) {
            double pinf = (cd.A.transpose() * y + cd.G.transpose() * z).norm() / resx0 / (-hzby);
            if (pinf <= ftol) {
                res.certificate.resize(me + mz);
                res.certificate << y / (-hzby), z / (-hzby);
                res.status = SolveStatus::infeasible_detected;
                res.message = "primal infeasibility certificate";
                res.x = RVec::Zero(n);
                res.iterations = it;
                return res;
            }
        }
        double ctx = cd.c.dot(x);
        if (ray && ctx < 0.0) {
            double dinf =
                std::max((cd.A * x).norm() / resy0, (cd.G * x + s).norm() / resz0) / (-ctx);
            if (dinf <= ftol) {
                res.certificate = x / (-ctx);
                res.status = SolveStatus::infeasible_detected;
                res.message = "dual infeasibility certificate (objective unbounded below)";
                res.x = RVec::Zero(n);
                res.iterations = it;
                return res;
            }
        }

        // A near-feasible snapshot rules infeasibility out, so once tau dives
        // well below that snapshot the remaining path only loses digits;
        // stop and keep the best point.
        if (best_metric <= 1e-6 && tau < 1e-3 * best_tau) {
            restore_best();
            return finish(SolveStatus::optimal, "homogenization collapsed; best iterate kept");
        }

        Scaling w;
        try {
            w.compute(cone, s, z);
        } catch (const no_solution_error& e) {
            restore_best();
            return finish(best_metric <= 1e-6 ? SolveStatus::optimal : SolveStatus::numerical_failure,
                          std::string("scaling breakdown; ") + e.what());
        }
        double mu = (s.dot(z) + tau * kappa) / (cone.degree + 1);

        const int dim = n + me + mz;
        RMat kmat = RMat::Zero(dim, dim);
        kmat.block(0, n, n, me) = cd.A.transpose();
        kmat.block(0, n + me, n, mz) = cd.G.transpose();
        kmat.block(n, 0, me, n) = cd.A;
        kmat.block(n + me, 0, mz, n) = cd.G;
        kmat.block(n + me, n + me, mz, mz) = -w.wtw_matrix(cone);
        RMat kreg = kmat;
        const double delta = 1e-9;
        kreg.topLeftCorner(n, n) += delta * RMat::Identity(n, n);
        kreg.block(n, n, me, me) -= delta * RMat::Identity(me, me);
        kreg.block(n + me, n + me, mz, mz) -= delta * RMat::Identity(mz, mz);
        Eigen::PartialPivLU<RMat> lu(kreg);

        auto kkt_solve = [&](const RVec& bx, const RVec& by, const RVec& bz) {
            RVec rhs(dim);
            rhs << bx, by, bz;
            RVec u = lu.solve(rhs);
            u += lu.solve(rhs - kmat * u); // one refinement pass
            return u;
        };

        RVec u1 = kkt_solve(-cd.c, cd.b, cd.h);
        RVec x1 = u1.segment(0, n), y1 = u1.segment(n, me), z1 = u1.segment(n + me, mz);
        double denom = cd.c.dot(x1) + cd.b.dot(y1) + cd.h.dot(z1) - kappa / tau;
        if (std::abs(denom) < 1e-300) {
            restore_best();
            return finish(best_metric <= 1e-6 ? SolveStatus::optimal : SolveStatus::numerical_failure,
                          "singular step system");
        }

        auto direction = [&](double eta, const RVec& dsbar_target, double dtau_target, RVec& dx,
                             RVec& dy, RVec& dz, RVec& ds, double& dtau, double& dkappa) {
            RVec u0 = kkt_solve(-eta * rx, -eta * ry, -eta * rz - w.apply_wt(cone, dsbar_target));
            RVec x0 = u0.segment(0, n), y0 = u0.segment(n, me), z0 = u0.segment(n + me, mz);
            dtau = (-eta * rt - dtau_target / tau - (cd.c.dot(x0) + cd.b.dot(y0) + cd.h.dot(z0))) /
                   denom;
            dx = x0 + dtau * x1;
            dy = y0 + dtau * y1;
            dz = z0 + dtau * z1;
            ds = w.apply_wt(cone, dsbar_target) - w.apply_wt(cone, w.scale_z(cone, dz));
            dkappa = (dtau_target - kappa * dtau) / tau;
        };

        // predictor
        RVec dx, dy, dz, ds;
        double dtau, dkappa;
        direction(1.0, -w.lambda, -tau * kappa, dx, dy, dz, ds, dtau, dkappa);
        RVec dsbar_a = w.scale_s(cone, ds), dzbar_a = w.scale_z(cone, dz);
        double a_cone = std::min(cone_step(cone, w.lambda, dsbar_a),
                                 cone_step(cone, w.lambda, dzbar_a));
        if (dtau < 0.0) a_cone = std::min(a_cone, -tau / dtau);
        if (dkappa < 0.0) a_cone = std::min(a_cone, -kappa / dkappa);
        double a_aff = std::min(1.0, a_cone);
        double sigma = std::pow(1.0 - a_aff, 3.0);

        // corrector
        RVec target = lambda_inv(
            cone, w.lambda,
            RVec(sigma * mu * cone_identity(cone) - jordan(cone, dsbar_a, dzbar_a)));
        target -= w.lambda;
        double dtau_t = sigma * mu - tau * kappa - dtau * dkappa;
        direction(1.0 - sigma, target, dtau_t, dx, dy, dz, ds, dtau, dkappa);

        RVec dsbar = w.scale_s(cone, ds), dzbar = w.scale_z(cone, dz);
        double amax = std::min(cone_step(cone, w.lambda, dsbar), cone_step(cone, w.lambda, dzbar));
        if (dtau < 0.0) amax = std::min(amax, -tau / dtau);
        if (dkappa < 0.0) amax = std::min(amax, -kappa / dkappa);
        double alpha = std::min(1.0, 0.99 * amax);

        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kappa += alpha * dkappa;

        if (alpha < 1e-3) {
            if (++slow_steps >= 3) {
                restore_best();
                return finish(best_metric <= 1e-6 ? SolveStatus::optimal
                                                  : SolveStatus::numerical_failure,
                              "progress stalled; best iterate accepted at reduced tolerance");
            }
        } else {
            slow_steps = 0;
        }
    }

    restore_best();
    return finish(best_metric <= 1e-6 ? SolveStatus::optimal : SolveStatus::max_iterations,
                  "iteration limit reached");
}

} // namespace mcopf
