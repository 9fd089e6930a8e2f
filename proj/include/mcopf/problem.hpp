#pragma once

#include "mcopf/expr.hpp"

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mcopf {

enum class FormulationKind { ivr, svr1, svr2, swr1, swr2 };

const char* kind_name(FormulationKind k);
FormulationKind parse_kind(std::string name); // case-insensitive; throws contract_error

enum class Sym {
    U,
    I_line,
    I_load,
    I_gen,
    S_line,
    S_load,
    S_gen,
    W,
    L,
    Sbar_line,
    Sbar_load,
    Sbar_gen,
    P_disp,
    Q_disp,
};

enum class Part { re, im };

struct VarInfo {
    std::string name; // unique, printable
    Sym sym = Sym::U;
    std::string owner; // entity id; directed flows carry an :ij / :ji suffix
    int row = 0;
    int col = 0;
    Part part = Part::re;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

struct VariableRegistry {
    std::vector<VarInfo> vars;

    int add(VarInfo v); // enforces name uniqueness
    int find(const std::string& name) const; // -1 when absent
    int require(const std::string& name) const; // throws contract_error when absent
    int size() const { return static_cast<int>(vars.size()); }
};

// One Hermitian PSD requirement M(x) >= 0 over complex side cdim. Entries are
// affine complex expressions kept Hermitian by construction: entry (r, c) with
// r > c is the conjugate of entry (c, r).
struct PsdBlock {
    std::string owner; // branch id
    int cdim = 0;
    std::vector<std::vector<CExpr>> entries;

    int rdim() const { return 2 * cdim; } // real symmetric embedding side
    CMat eval(const RVec& x) const;
    RMat eval_real_embedding(const RVec& x) const;
};

// Features toggled on top of the base lifted recipe; used for the published
// variant pair and for the two single-feature probes.
struct SwrFeatures {
    bool matrix_kcl = false;
    bool device_row_sums = false;
};

struct ProblemInstance {
    FormulationKind kind = FormulationKind::ivr;
    std::string variant; // kind name, with +matkcl / +rowsums when probing
    SwrFeatures features;
    VariableRegistry registry;
    std::vector<RealConstraint> equalities;   // q(x) = 0
    std::vector<RealConstraint> inequalities; // q(x) <= 0
    std::vector<PsdBlock> psd_blocks;
    std::vector<int> p_vars; // dispatch P per objective generator
    std::vector<int> q_vars;

    // Start hints filled by the builder: the slack profile copied to every
    // bus with all products zero, plus the voltage coordinates multistart may
    // perturb (voltage_vars) or must keep off zero (bounded_voltage_vars).
    RVec flat_start;
    std::vector<int> voltage_vars;
    std::vector<int> bounded_voltage_vars;

    LinExpr objective(double theta) const;
    bool is_conic() const; // every constraint affine (PSD blocks aside)
    int num_vars() const { return registry.size(); }
};

struct ResidualEntry {
    std::string label;
    double value = 0.0; // signed residual; for <= rows, positive means violated
};

struct ResidualReport {
    std::vector<ResidualEntry> equalities;
    std::vector<ResidualEntry> inequalities;
    std::vector<double> psd_min_eig;

    double equality_inf_norm() const;
    double inequality_max_violation() const;
    double psd_worst_eig() const; // +inf when there are no blocks
    bool feasible(double tol) const;
};

ResidualReport residuals(const ProblemInstance& inst, const RVec& point);

} // namespace mcopf
