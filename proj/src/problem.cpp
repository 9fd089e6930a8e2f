#include "mcopf/problem.hpp"

#include "mcopf/errors.hpp"

#include <algorithm>
#include <cctype>

namespace mcopf {

const char* kind_name(FormulationKind k) {
    switch (k) {
    case FormulationKind::ivr: return "ivr";
    case FormulationKind::svr1: return "svr1";
    case FormulationKind::svr2: return "svr2";
    case FormulationKind::swr1: return "swr1";
    case FormulationKind::swr2: return "swr2";
    }
    return "?";
}

FormulationKind parse_kind(std::string name) {
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (name == "ivr") return FormulationKind::ivr;
    if (name == "svr1") return FormulationKind::svr1;
    if (name == "svr2") return FormulationKind::svr2;
    if (name == "swr1") return FormulationKind::swr1;
    if (name == "swr2") return FormulationKind::swr2;
    throw contract_error("unknown formulation '" + name + "'");
}

int VariableRegistry::add(VarInfo v) {
    if (find(v.name) >= 0) throw contract_error("duplicate variable name " + v.name);
    vars.push_back(std::move(v));
    return static_cast<int>(vars.size()) - 1;
}

int VariableRegistry::find(const std::string& name) const {
    for (size_t k = 0; k < vars.size(); ++k)
        if (vars[k].name == name) return static_cast<int>(k);
    return -1;
}

int VariableRegistry::require(const std::string& name) const {
    int idx = find(name);
    if (idx < 0) throw contract_error("variable " + name + " is not registered");
    return idx;
}

CMat PsdBlock::eval(const RVec& x) const {
    CMat m(cdim, cdim);
    for (int r = 0; r < cdim; ++r)
        for (int c = 0; c < cdim; ++c) m(r, c) = entries[static_cast<size_t>(r)][static_cast<size_t>(c)].eval(x);
    return m;
}

RMat PsdBlock::eval_real_embedding(const RVec& x) const {
    CMat m = eval(x);
    const int n = cdim;
    RMat out(2 * n, 2 * n);
    out.topLeftCorner(n, n) = m.real();
    out.bottomRightCorner(n, n) = m.real();
    out.topRightCorner(n, n) = -m.imag();
    out.bottomLeftCorner(n, n) = m.imag();
    return out;
}

LinExpr ProblemInstance::objective(double theta) const {
    LinExpr obj;
    for (int v : p_vars) obj.add(v, std::cos(theta));
    for (int v : q_vars) obj.add(v, std::sin(theta));
    obj.compress();
    return obj;
}

bool ProblemInstance::is_conic() const {
    auto affine = [](const std::vector<RealConstraint>& rows) {
        return std::all_of(rows.begin(), rows.end(),
                           [](const RealConstraint& r) { return r.q.is_affine(); });
    };
    return affine(equalities) && affine(inequalities);
}

double ResidualReport::equality_inf_norm() const {
    double m = 0.0;
    for (const auto& e : equalities) m = std::max(m, std::abs(e.value));
    return m;
}

double ResidualReport::inequality_max_violation() const {
    double m = 0.0;
    for (const auto& e : inequalities) m = std::max(m, e.value);
    return m;
}

double ResidualReport::psd_worst_eig() const {
    double m = std::numeric_limits<double>::infinity();
    for (double e : psd_min_eig) m = std::min(m, e);
    return m;
}

bool ResidualReport::feasible(double tol) const {
    if (equality_inf_norm() > tol) return false;
    if (inequality_max_violation() > tol) return false;
    if (!psd_min_eig.empty() && psd_worst_eig() < -tol) return false;
    return true;
}

ResidualReport residuals(const ProblemInstance& inst, const RVec& point) {
    if (point.size() != inst.num_vars())
        throw contract_error("residuals: point length does not match registry");
    ResidualReport rep;
    for (const auto& c : inst.equalities) rep.equalities.push_back({c.label, c.q.eval(point)});
    for (const auto& c : inst.inequalities) rep.inequalities.push_back({c.label, c.q.eval(point)});
    for (const auto& blk : inst.psd_blocks) {
        Eigen::SelfAdjointEigenSolver<RMat> es(blk.eval_real_embedding(point));
        rep.psd_min_eig.push_back(es.eigenvalues().minCoeff());
    }
    return rep;
}

} // namespace mcopf
