#include "mcopf/formulations.hpp"

#include "mcopf/errors.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace mcopf {

namespace {

std::string part_suffix(Part p) { return p == Part::re ? ".re" : ".im"; }

std::string vec_name(const char* base, const std::string& owner, int c, Part p) {
    std::ostringstream os;
    os << base << "[" << owner << "][" << c << "]" << part_suffix(p);
    return os.str();
}

std::string mat_name(const char* base, const std::string& owner, int r, int c, Part p) {
    std::ostringstream os;
    os << base << "[" << owner << "](" << r << "," << c << ")" << part_suffix(p);
    return os.str();
}

std::string scalar_name(const char* base, const std::string& owner) {
    std::ostringstream os;
    os << base << "[" << owner << "]";
    return os.str();
}

// Complex vector variable: one (re, im) index pair per conductor.
struct CVecVar {
    std::vector<std::array<int, 2>> idx;

    CExpr entry(int c) const { return CExpr::var(idx[static_cast<size_t>(c)][0], idx[static_cast<size_t>(c)][1]); }
    int size() const { return static_cast<int>(idx.size()); }
};

// Hermitian matrix variable: the diagonal stores real parts only and the
// strict upper triangle stores (re, im); the lower triangle is conjugated.
struct HermVar {
    int side = 0;
    std::vector<std::vector<std::array<int, 2>>> idx;

    CExpr entry(int r, int c) const {
        if (r == c) return CExpr::real_var(idx[static_cast<size_t>(r)][static_cast<size_t>(r)][0]);
        if (r < c) return CExpr::var(idx[static_cast<size_t>(r)][static_cast<size_t>(c)][0], idx[static_cast<size_t>(r)][static_cast<size_t>(c)][1]);
        return CExpr::var(idx[static_cast<size_t>(c)][static_cast<size_t>(r)][0], idx[static_cast<size_t>(c)][static_cast<size_t>(r)][1], cx{1.0, 0.0}, true);
    }
};

// General complex square matrix variable.
struct CMatVar {
    int side = 0;
    std::vector<std::vector<std::array<int, 2>>> idx;

    CExpr entry(int r, int c) const { return CExpr::var(idx[static_cast<size_t>(r)][static_cast<size_t>(c)][0], idx[static_cast<size_t>(r)][static_cast<size_t>(c)][1]); }
};

struct Builder {
    const Network& net;
    ProblemInstance inst;

    std::map<std::string, CVecVar> u, i_line, i_load, i_gen;
    std::map<std::string, CVecVar> s_ij, s_ji, s_load, s_gen;
    std::map<std::string, HermVar> w, l;
    std::map<std::string, CMatVar> sb_ij, sb_ji, sb_load, sb_gen;

    explicit Builder(const Network& n) : net(n) {}

    CVecVar add_cvec(Sym sym, const char* base, const std::string& owner, int n) {
        CVecVar v;
        for (int c = 0; c < n; ++c) {
            int re = inst.registry.add({vec_name(base, owner, c, Part::re), sym, owner, c, 0, Part::re});
            int im = inst.registry.add({vec_name(base, owner, c, Part::im), sym, owner, c, 0, Part::im});
            v.idx.push_back({re, im});
        }
        return v;
    }

    HermVar add_herm(Sym sym, const char* base, const std::string& owner, int side,
                     const RVec* diag_lo = nullptr, const RVec* diag_hi = nullptr) {
        HermVar h;
        h.side = side;
        h.idx.assign(static_cast<size_t>(side), std::vector<std::array<int, 2>>(static_cast<size_t>(side), {-1, -1}));
        for (int r = 0; r < side; ++r) {
            VarInfo d{mat_name(base, owner, r, r, Part::re), sym, owner, r, r, Part::re};
            if (diag_lo) d.lo = (*diag_lo)(r) * (*diag_lo)(r);
            if (diag_hi) d.hi = (*diag_hi)(r) * (*diag_hi)(r);
            h.idx[static_cast<size_t>(r)][static_cast<size_t>(r)] = {inst.registry.add(d), -1};
            for (int c = r + 1; c < side; ++c) {
                int re = inst.registry.add({mat_name(base, owner, r, c, Part::re), sym, owner, r, c, Part::re});
                int im = inst.registry.add({mat_name(base, owner, r, c, Part::im), sym, owner, r, c, Part::im});
                h.idx[static_cast<size_t>(r)][static_cast<size_t>(c)] = {re, im};
            }
        }
        return h;
    }

    CMatVar add_cmat(Sym sym, const char* base, const std::string& owner, int side) {
        CMatVar m;
        m.side = side;
        for (int r = 0; r < side; ++r) {
            m.idx.emplace_back();
            for (int c = 0; c < side; ++c) {
                int re = inst.registry.add({mat_name(base, owner, r, c, Part::re), sym, owner, r, c, Part::re});
                int im = inst.registry.add({mat_name(base, owner, r, c, Part::im), sym, owner, r, c, Part::im});
                m.idx.back().push_back({re, im});
            }
        }
        return m;
    }

    void add_dispatch_vars() {
        for (const auto& g : net.generators) {
            int p = inst.registry.add({scalar_name("P", g.id), Sym::P_disp, g.id, 0, 0, Part::re});
            int q = inst.registry.add({scalar_name("Q", g.id), Sym::Q_disp, g.id, 0, 0, Part::re});
            if (g.in_objective) {
                inst.p_vars.push_back(p);
                inst.q_vars.push_back(q);
            }
        }
    }

    CExpr disp_expr(const std::string& gen_id) const {
        int p = inst.registry.find(scalar_name("P", gen_id));
        int q = inst.registry.find(scalar_name("Q", gen_id));
        return CExpr::real_var(p) + CExpr::real_var(q, cx{0.0, 1.0});
    }

    // Bus voltage entry; the slack substitutes its fixed value as a constant.
    CExpr volt(const Bus& b, int c) const {
        if (b.is_slack()) return CExpr((*b.fixed_voltage)(c));
        return u.at(b.id).entry(c);
    }

    CExpr w_entry(const Bus& b, int r, int c) const {
        if (b.is_slack()) {
            const CVec& uf = *b.fixed_voltage;
            return CExpr(uf(r) * std::conj(uf(c)));
        }
        return w.at(b.id).entry(r, c);
    }

    void add_complex_eq(const CxEquality& eq) {
        for (auto& row : realify(eq))
            if (!row.removable) inst.equalities.push_back(std::move(row));
    }

    void add_linear_complex_eq(const std::string& label, const CExpr& e) {
        add_complex_eq({{CxProduct{{e}}}, label});
    }

    // q(x) <= 0
    void add_inequality(QExpr q, const std::string& label) {
        RealConstraint c;
        c.q = std::move(q);
        c.rel = Rel::le;
        c.label = label;
        inst.inequalities.push_back(std::move(c));
    }

    // Fills the start hints once every variable is registered.
    void finalize_hints() {
        const Bus& slack = net.slack();
        const CVec& uf = *slack.fixed_voltage;
        inst.flat_start = RVec::Zero(inst.num_vars());
        for (int k = 0; k < inst.num_vars(); ++k) {
            const VarInfo& v = inst.registry.vars[static_cast<size_t>(k)];
            if (v.sym == Sym::U) {
                inst.flat_start(k) = v.part == Part::re ? uf(v.row).real() : uf(v.row).imag();
                inst.voltage_vars.push_back(k);
                if (net.bus(v.owner).u_min(v.row) > 0.0) inst.bounded_voltage_vars.push_back(k);
            } else if (v.sym == Sym::W) {
                cx w = uf(v.row) * std::conj(uf(v.col));
                inst.flat_start(k) = v.part == Part::re ? w.real() : w.imag();
            }
        }
    }

    // ---- shared constraint groups ----

    void emit_voltage_bounds_quadratic() {
        for (const auto& b : net.buses) {
            if (b.is_slack()) continue; // vacuous once the voltage is data
            for (int c = 0; c < b.n_conductors; ++c) {
                CExpr uc = volt(b, c);
                QExpr mag = product_re(uc, uc.conjugate());
                QExpr hi = mag;
                hi.affine.constant -= b.u_max(c) * b.u_max(c);
                add_inequality(std::move(hi), "bound_hi[" + b.id + "]." + std::to_string(c));
                if (b.u_min(c) > 0.0) {
                    QExpr lo;
                    for (const auto& [k, v] : mag.quad) lo.quad[k] = -v;
                    for (const auto& [idx, v] : mag.affine.terms) lo.affine.add(idx, -v);
                    lo.affine.constant = b.u_min(c) * b.u_min(c) - mag.affine.constant;
                    add_inequality(std::move(lo), "bound_lo[" + b.id + "]." + std::to_string(c));
                }
            }
        }
    }

    void emit_voltage_bounds_linear() {
        for (const auto& b : net.buses) {
            if (b.is_slack()) continue;
            for (int c = 0; c < b.n_conductors; ++c) {
                const HermVar& wb = w.at(b.id);
                int diag = wb.idx[static_cast<size_t>(c)][static_cast<size_t>(c)][0];
                QExpr hi;
                hi.affine.add(diag, 1.0);
                hi.affine.constant = -b.u_max(c) * b.u_max(c);
                add_inequality(std::move(hi), "bound_hi[" + b.id + "]." + std::to_string(c));
                if (b.u_min(c) > 0.0) {
                    QExpr lo;
                    lo.affine.add(diag, -1.0);
                    lo.affine.constant = b.u_min(c) * b.u_min(c);
                    add_inequality(std::move(lo), "bound_lo[" + b.id + "]." + std::to_string(c));
                }
            }
        }
    }

    void emit_setpoint_sum() {
        for (const auto& d : net.loads) {
            CExpr sum;
            for (int c = 0; c < s_load.at(d.id).size(); ++c) sum += s_load.at(d.id).entry(c);
            sum -= CExpr(d.s_ref);
            add_linear_complex_eq("setpoint[" + d.id + "]", sum);
        }
    }

    void emit_dispatch_sum() {
        for (const auto& g : net.generators) {
            CExpr sum;
            for (int c = 0; c < s_gen.at(g.id).size(); ++c) sum += s_gen.at(g.id).entry(c);
            sum -= disp_expr(g.id);
            add_linear_complex_eq("dispatch[" + g.id + "]", sum);
        }
    }

    void emit_device_vector_zeros(const std::map<std::string, CVecVar>& vars,
                                  const std::string& label_base, bool is_load) {
        if (is_load) {
            for (const auto& d : net.loads) {
                const Bus& b = net.bus(d.bus);
                for (int c = 0; c < b.n_conductors; ++c)
                    if (c != d.term_in && c != d.term_out)
                        add_linear_complex_eq(label_base + "[" + d.id + "]." + std::to_string(c),
                                              vars.at(d.id).entry(c));
            }
        } else {
            for (const auto& g : net.generators) {
                const Bus& b = net.bus(g.bus);
                for (int c = 0; c < b.n_conductors; ++c)
                    if (std::find(g.conductors.begin(), g.conductors.end(), c) == g.conductors.end())
                        add_linear_complex_eq(label_base + "[" + g.id + "]." + std::to_string(c),
                                              vars.at(g.id).entry(c));
            }
        }
    }

    // ---- current-voltage recipe ----

    void emit_ohm_iv() {
        for (const auto& br : net.branches) {
            const Bus& bf = net.bus(br.from_bus);
            const Bus& bt = net.bus(br.to_bus);
            CMat z = br.Z();
            for (int c = 0; c < bf.n_conductors; ++c) {
                CExpr e = volt(bt, c) - volt(bf, c);
                for (int k = 0; k < bf.n_conductors; ++k)
                    e += z(c, k) * i_line.at(br.id).entry(k);
                add_linear_complex_eq("ohm[" + br.id + "]." + std::to_string(c), e);
            }
        }
    }

    void emit_kcl_iv() {
        for (const auto& b : net.buses) {
            for (int c = 0; c < b.n_conductors; ++c) {
                CExpr e;
                for (const auto& br : net.branches) {
                    if (br.from_bus == b.id) e += i_line.at(br.id).entry(c);
                    if (br.to_bus == b.id) e -= i_line.at(br.id).entry(c);
                }
                for (const auto& d : net.loads)
                    if (d.bus == b.id) e += i_load.at(d.id).entry(c);
                for (const auto& g : net.generators)
                    if (g.bus == b.id) e -= i_gen.at(g.id).entry(c);
                add_linear_complex_eq("kcl[" + b.id + "]." + std::to_string(c), e);
            }
        }
    }

    void emit_current_conservation(const std::map<std::string, CVecVar>& vars,
                                   const std::string& owner_id, const std::string& label) {
        CExpr sum;
        for (int c = 0; c < vars.at(owner_id).size(); ++c) sum += vars.at(owner_id).entry(c);
        add_linear_complex_eq(label, sum);
    }

    void emit_setpoint_drop() {
        for (const auto& d : net.loads) {
            const Bus& b = net.bus(d.bus);
            CExpr drop = volt(b, d.term_in) - volt(b, d.term_out);
            CExpr ida = i_load.at(d.id).entry(d.term_in);
            CxEquality eq;
            eq.label = "setpoint[" + d.id + "]";
            eq.terms.push_back({{drop, ida.conjugate()}});
            eq.terms.push_back({{CExpr(-d.s_ref)}});
            add_complex_eq(eq);
        }
    }

    void emit_dispatch_current() {
        for (const auto& g : net.generators) {
            const Bus& b = net.bus(g.bus);
            CxEquality eq;
            eq.label = "dispatch[" + g.id + "]";
            for (int c = 0; c < b.n_conductors; ++c)
                eq.terms.push_back({{volt(b, c), i_gen.at(g.id).entry(c).conjugate()}});
            eq.terms.push_back({{-disp_expr(g.id)}});
            add_complex_eq(eq);
        }
    }

    void emit_power_defs() {
        for (const auto& d : net.loads) {
            const Bus& b = net.bus(d.bus);
            for (int c = 0; c < b.n_conductors; ++c) {
                CxEquality eq;
                eq.label = "power[" + d.id + "]." + std::to_string(c);
                eq.terms.push_back({{s_load.at(d.id).entry(c)}});
                eq.terms.push_back({{-volt(b, c), i_load.at(d.id).entry(c).conjugate()}});
                add_complex_eq(eq);
            }
        }
        for (const auto& g : net.generators) {
            const Bus& b = net.bus(g.bus);
            for (int c = 0; c < b.n_conductors; ++c) {
                CxEquality eq;
                eq.label = "power[" + g.id + "]." + std::to_string(c);
                eq.terms.push_back({{s_gen.at(g.id).entry(c)}});
                eq.terms.push_back({{-volt(b, c), i_gen.at(g.id).entry(c).conjugate()}});
                add_complex_eq(eq);
            }
        }
    }

    // ---- power-voltage recipe ----

    void emit_ohm_sv() {
        for (const auto& br : net.branches) {
            const Bus& bf = net.bus(br.from_bus);
            const Bus& bt = net.bus(br.to_bus);
            CMat y = br.Y();
            auto one_direction = [&](const Bus& from, const Bus& to, const CVecVar& flow,
                                     const std::string& tag) {
                for (int c = 0; c < from.n_conductors; ++c) {
                    CExpr current; // row c of Y (U_from - U_to)
                    for (int k = 0; k < from.n_conductors; ++k)
                        current += y(c, k) * (volt(from, k) - volt(to, k));
                    CxEquality eq;
                    eq.label = "ohm_sv[" + br.id + ":" + tag + "]." + std::to_string(c);
                    eq.terms.push_back({{flow.entry(c)}});
                    eq.terms.push_back({{-volt(from, c), current.conjugate()}});
                    add_complex_eq(eq);
                }
            };
            one_direction(bf, bt, s_ij.at(br.id), "ij");
            one_direction(bt, bf, s_ji.at(br.id), "ji");
        }
    }

    void emit_kcl_sv() {
        for (const auto& b : net.buses) {
            for (int c = 0; c < b.n_conductors; ++c) {
                CExpr e;
                for (const auto& br : net.branches) {
                    if (br.from_bus == b.id) e += s_ij.at(br.id).entry(c);
                    if (br.to_bus == b.id) e += s_ji.at(br.id).entry(c);
                }
                for (const auto& d : net.loads)
                    if (d.bus == b.id) e += s_load.at(d.id).entry(c);
                for (const auto& g : net.generators)
                    if (g.bus == b.id) e -= s_gen.at(g.id).entry(c);
                add_linear_complex_eq("kcl_sv[" + b.id + "]." + std::to_string(c), e);
            }
        }
    }

    // ---- lifted recipe ----

    CExpr sb_line_entry(const std::string& branch_id, bool ij, int r, int c) const {
        return (ij ? sb_ij : sb_ji).at(branch_id).entry(r, c);
    }

    void emit_ohm_sw() {
        for (const auto& br : net.branches) {
            const Bus& bf = net.bus(br.from_bus);
            const Bus& bt = net.bus(br.to_bus);
            CMat z = br.Z();
            const int n = bf.n_conductors;
            for (int r = 0; r < n; ++r) {
                for (int c = r; c < n; ++c) {
                    // W_to = W_from - Sb Z^H - Z Sb^H + Z L Z^H, entry (r, c)
                    CExpr e = w_entry(bt, r, c) - w_entry(bf, r, c);
                    for (int k = 0; k < n; ++k) {
                        e += std::conj(z(c, k)) * sb_line_entry(br.id, true, r, k);
                        e += z(r, k) * sb_line_entry(br.id, true, c, k).conjugate();
                    }
                    for (int k = 0; k < n; ++k)
                        for (int m = 0; m < n; ++m)
                            e -= z(r, k) * std::conj(z(c, m)) * l.at(br.id).entry(k, m);
                    add_linear_complex_eq(
                        "ohm_sw[" + br.id + "].(" + std::to_string(r) + "," + std::to_string(c) + ")", e);
                }
            }
        }
    }

    void emit_flow_loss() {
        for (const auto& br : net.branches) {
            CMat z = br.Z();
            const int n = static_cast<int>(z.rows());
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) {
                    CExpr e = sb_line_entry(br.id, true, r, c) + sb_line_entry(br.id, false, r, c);
                    for (int k = 0; k < n; ++k) e -= z(r, k) * l.at(br.id).entry(k, c);
                    add_linear_complex_eq(
                        "flowloss[" + br.id + "].(" + std::to_string(r) + "," + std::to_string(c) + ")", e);
                }
            }
        }
    }

    void emit_kcl_diag() {
        for (const auto& b : net.buses) {
            for (int c = 0; c < b.n_conductors; ++c) {
                CExpr e;
                for (const auto& br : net.branches) {
                    if (br.from_bus == b.id) e += sb_line_entry(br.id, true, c, c);
                    if (br.to_bus == b.id) e += sb_line_entry(br.id, false, c, c);
                }
                for (const auto& d : net.loads)
                    if (d.bus == b.id) e += s_load.at(d.id).entry(c);
                for (const auto& g : net.generators)
                    if (g.bus == b.id) e -= s_gen.at(g.id).entry(c);
                add_linear_complex_eq("kcl_diag[" + b.id + "]." + std::to_string(c), e);
            }
        }
    }

    void emit_kcl_matrix() {
        for (const auto& b : net.buses) {
            const int n = b.n_conductors;
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) {
                    CExpr e;
                    for (const auto& br : net.branches) {
                        if (br.from_bus == b.id) e += sb_line_entry(br.id, true, r, c);
                        if (br.to_bus == b.id) e += sb_line_entry(br.id, false, r, c);
                    }
                    for (const auto& d : net.loads)
                        if (d.bus == b.id) e += sb_load.at(d.id).entry(r, c);
                    for (const auto& g : net.generators)
                        if (g.bus == b.id) e -= sb_gen.at(g.id).entry(r, c);
                    add_linear_complex_eq(
                        "kcl_mat[" + b.id + "].(" + std::to_string(r) + "," + std::to_string(c) + ")", e);
                }
            }
        }
    }

    void emit_diag_links() {
        for (const auto& d : net.loads) {
            const int n = net.bus(d.bus).n_conductors;
            for (int c = 0; c < n; ++c)
                add_linear_complex_eq("diaglink[" + d.id + "]." + std::to_string(c),
                                      sb_load.at(d.id).entry(c, c) - s_load.at(d.id).entry(c));
        }
        for (const auto& g : net.generators) {
            const int n = net.bus(g.bus).n_conductors;
            for (int c = 0; c < n; ++c)
                add_linear_complex_eq("diaglink[" + g.id + "]." + std::to_string(c),
                                      sb_gen.at(g.id).entry(c, c) - s_gen.at(g.id).entry(c));
        }
    }

    void emit_row_sums() {
        auto rows_of = [&](const CMatVar& m, const std::string& id) {
            for (int r = 0; r < m.side; ++r) {
                CExpr e;
                for (int c = 0; c < m.side; ++c) e += m.entry(r, c);
                add_linear_complex_eq("rowsum[" + id + "]." + std::to_string(r), e);
            }
        };
        for (const auto& d : net.loads) rows_of(sb_load.at(d.id), d.id);
        for (const auto& g : net.generators) rows_of(sb_gen.at(g.id), g.id);
    }

    void emit_psd_blocks() {
        for (const auto& br : net.branches) {
            const Bus& bf = net.bus(br.from_bus);
            const int n = bf.n_conductors;
            PsdBlock blk;
            blk.owner = br.id;
            blk.cdim = 2 * n;
            blk.entries.assign(static_cast<size_t>(blk.cdim), std::vector<CExpr>(static_cast<size_t>(blk.cdim)));
            for (int r = 0; r < blk.cdim; ++r) {
                for (int c = 0; c < blk.cdim; ++c) {
                    CExpr e;
                    if (r < n && c < n) e = w_entry(bf, r, c);
                    else if (r < n && c >= n) e = sb_line_entry(br.id, true, r, c - n);
                    else if (r >= n && c < n) e = sb_line_entry(br.id, true, c, r - n).conjugate();
                    else e = l.at(br.id).entry(r - n, c - n);
                    blk.entries[static_cast<size_t>(r)][static_cast<size_t>(c)] = std::move(e);
                }
            }
            inst.psd_blocks.push_back(std::move(blk));
        }
    }
};

void check_buildable(const Network& net) {
    ValidationReport rep = validate_network(net);
    if (!rep.ok()) {
        std::string msg = "network fails validation:";
        for (const auto& f : rep.findings) msg += " [" + f.code + " @ " + f.subject + "]";
        throw contract_error(msg);
    }
    if (std::none_of(net.generators.begin(), net.generators.end(),
                     [](const Generator& g) { return g.in_objective; }))
        throw model_error("no generator participates in the objective");
}

ProblemInstance build_ivr(const Network& net) {
    Builder b(net);
    b.inst.kind = FormulationKind::ivr;
    b.inst.variant = "ivr";
    for (const auto& bus : net.buses)
        if (!bus.is_slack()) b.u[bus.id] = b.add_cvec(Sym::U, "U", bus.id, bus.n_conductors);
    for (const auto& br : net.branches)
        b.i_line[br.id] = b.add_cvec(Sym::I_line, "Il", br.id, net.bus(br.from_bus).n_conductors);
    for (const auto& d : net.loads)
        b.i_load[d.id] = b.add_cvec(Sym::I_load, "Id", d.id, net.bus(d.bus).n_conductors);
    for (const auto& g : net.generators)
        b.i_gen[g.id] = b.add_cvec(Sym::I_gen, "Ig", g.id, net.bus(g.bus).n_conductors);
    b.add_dispatch_vars();

    b.emit_ohm_iv();
    b.emit_kcl_iv();
    for (const auto& d : net.loads) b.emit_current_conservation(b.i_load, d.id, "conserv[" + d.id + "]");
    b.emit_device_vector_zeros(b.i_load, "offterm", true);
    b.emit_setpoint_drop();
    for (const auto& g : net.generators) b.emit_current_conservation(b.i_gen, g.id, "conserv[" + g.id + "]");
    b.emit_device_vector_zeros(b.i_gen, "offspan", false);
    b.emit_dispatch_current();
    b.emit_voltage_bounds_quadratic();
    b.finalize_hints();
    return std::move(b.inst);
}

ProblemInstance build_svr(const Network& net, bool extended) {
    Builder b(net);
    b.inst.kind = extended ? FormulationKind::svr2 : FormulationKind::svr1;
    b.inst.variant = kind_name(b.inst.kind);
    for (const auto& bus : net.buses)
        if (!bus.is_slack()) b.u[bus.id] = b.add_cvec(Sym::U, "U", bus.id, bus.n_conductors);
    for (const auto& br : net.branches) {
        const int n = net.bus(br.from_bus).n_conductors;
        b.s_ij[br.id] = b.add_cvec(Sym::S_line, "Sl", br.id + ":ij", n);
        b.s_ji[br.id] = b.add_cvec(Sym::S_line, "Sl", br.id + ":ji", n);
    }
    for (const auto& d : net.loads)
        b.s_load[d.id] = b.add_cvec(Sym::S_load, "Sd", d.id, net.bus(d.bus).n_conductors);
    for (const auto& g : net.generators)
        b.s_gen[g.id] = b.add_cvec(Sym::S_gen, "Sg", g.id, net.bus(g.bus).n_conductors);
    if (extended) {
        for (const auto& d : net.loads)
            b.i_load[d.id] = b.add_cvec(Sym::I_load, "Id", d.id, net.bus(d.bus).n_conductors);
        for (const auto& g : net.generators)
            b.i_gen[g.id] = b.add_cvec(Sym::I_gen, "Ig", g.id, net.bus(g.bus).n_conductors);
    }
    b.add_dispatch_vars();

    b.emit_ohm_sv();
    b.emit_kcl_sv();
    b.emit_setpoint_sum();
    b.emit_device_vector_zeros(b.s_load, "offterm", true);
    b.emit_device_vector_zeros(b.s_gen, "offspan", false);
    b.emit_dispatch_sum();
    if (extended) {
        b.emit_power_defs();
        for (const auto& d : net.loads) b.emit_current_conservation(b.i_load, d.id, "conserv[" + d.id + "]");
        for (const auto& g : net.generators) b.emit_current_conservation(b.i_gen, g.id, "conserv[" + g.id + "]");
    }
    b.emit_voltage_bounds_quadratic();
    b.finalize_hints();
    return std::move(b.inst);
}

} // namespace

ProblemInstance build_swr(const Network& net, SwrFeatures features) {
    check_buildable(net);
    Builder b(net);
    const bool both = features.matrix_kcl && features.device_row_sums;
    const bool neither = !features.matrix_kcl && !features.device_row_sums;
    b.inst.kind = both ? FormulationKind::swr2 : FormulationKind::swr1;
    b.inst.features = features;
    b.inst.variant = both ? "swr2"
                   : neither ? "swr1"
                   : features.matrix_kcl ? "swr1+matkcl"
                                         : "swr1+rowsums";
    for (const auto& bus : net.buses)
        if (!bus.is_slack())
            b.w[bus.id] = b.add_herm(Sym::W, "W", bus.id, bus.n_conductors, &bus.u_min, &bus.u_max);
    for (const auto& br : net.branches) {
        const int n = net.bus(br.from_bus).n_conductors;
        b.l[br.id] = b.add_herm(Sym::L, "L", br.id, n);
        b.sb_ij[br.id] = b.add_cmat(Sym::Sbar_line, "Sb", br.id + ":ij", n);
        b.sb_ji[br.id] = b.add_cmat(Sym::Sbar_line, "Sb", br.id + ":ji", n);
    }
    for (const auto& d : net.loads)
        b.s_load[d.id] = b.add_cvec(Sym::S_load, "Sd", d.id, net.bus(d.bus).n_conductors);
    for (const auto& g : net.generators)
        b.s_gen[g.id] = b.add_cvec(Sym::S_gen, "Sg", g.id, net.bus(g.bus).n_conductors);
    const bool device_matrices = features.matrix_kcl || features.device_row_sums;
    if (device_matrices) {
        for (const auto& d : net.loads)
            b.sb_load[d.id] = b.add_cmat(Sym::Sbar_load, "Sbd", d.id, net.bus(d.bus).n_conductors);
        for (const auto& g : net.generators)
            b.sb_gen[g.id] = b.add_cmat(Sym::Sbar_gen, "Sbg", g.id, net.bus(g.bus).n_conductors);
    }
    b.add_dispatch_vars();

    b.emit_ohm_sw();
    b.emit_flow_loss();
    if (features.matrix_kcl)
        b.emit_kcl_matrix();
    else
        b.emit_kcl_diag();
    if (device_matrices) b.emit_diag_links();
    if (features.device_row_sums) b.emit_row_sums();
    b.emit_setpoint_sum();
    b.emit_device_vector_zeros(b.s_load, "offterm", true);
    b.emit_device_vector_zeros(b.s_gen, "offspan", false);
    b.emit_dispatch_sum();
    b.emit_voltage_bounds_linear();
    b.emit_psd_blocks();
    b.finalize_hints();
    return std::move(b.inst);
}

ProblemInstance build_formulation(const Network& net, FormulationKind kind) {
    check_buildable(net);
    switch (kind) {
    case FormulationKind::ivr: return build_ivr(net);
    case FormulationKind::svr1: return build_svr(net, false);
    case FormulationKind::svr2: return build_svr(net, true);
    case FormulationKind::swr1: return build_swr(net, {false, false});
    case FormulationKind::swr2: return build_swr(net, {true, true});
    }
    throw contract_error("unreachable formulation kind");
}

namespace {

// Writes one registry variable from physical data shared by all embeddings.
struct EmbedSource {
    explicit EmbedSource(const Network& n) : net(n) {}

    const Network& net;
    std::map<std::string, CVec> u;      // every bus
    std::map<std::string, CVec> i_line; // from-to direction
    std::map<std::string, CVec> i_load;
    std::map<std::string, CVec> i_gen;
    std::map<std::string, CVec> s_d; // may be completed rather than U o conj(I_d)
    std::map<std::string, CVec> s_g;
    bool have_device_currents = true;

    CVec flow(const std::string& branch_id, bool ij) const {
        const Branch& br = *std::find_if(net.branches.begin(), net.branches.end(),
                                         [&](const Branch& x) { return x.id == branch_id; });
        const CVec& i = i_line.at(branch_id);
        if (ij) return u.at(br.from_bus).array() * i.array().conjugate();
        return u.at(br.to_bus).array() * (-i).array().conjugate();
    }

    cx value(const VarInfo& v) const {
        auto pick = [&](cx z) { return v.part == Part::re ? cx(z.real(), 0) : cx(z.imag(), 0); };
        auto owner_dir = [&]() {
            auto pos = v.owner.find(':');
            return std::make_pair(v.owner.substr(0, pos), v.owner.substr(pos + 1) == "ij");
        };
        switch (v.sym) {
        case Sym::U: return pick(u.at(v.owner)(v.row));
        case Sym::I_line: return pick(i_line.at(v.owner)(v.row));
        case Sym::I_load: return pick(i_load.at(v.owner)(v.row));
        case Sym::I_gen: return pick(i_gen.at(v.owner)(v.row));
        case Sym::S_line: {
            auto [id, ij] = owner_dir();
            return pick(flow(id, ij)(v.row));
        }
        case Sym::S_load: return pick(s_d.at(v.owner)(v.row));
        case Sym::S_gen: return pick(s_g.at(v.owner)(v.row));
        case Sym::W: {
            const CVec& ub = u.at(v.owner);
            return pick(ub(v.row) * std::conj(ub(v.col)));
        }
        case Sym::L: {
            const CVec& i = i_line.at(v.owner);
            return pick(i(v.row) * std::conj(i(v.col)));
        }
        case Sym::Sbar_line: {
            auto [id, ij] = owner_dir();
            const Branch& br = *std::find_if(net.branches.begin(), net.branches.end(),
                                             [&](const Branch& x) { return x.id == id; });
            const CVec& i = i_line.at(id);
            if (ij) return pick(u.at(br.from_bus)(v.row) * std::conj(i(v.col)));
            return pick(u.at(br.to_bus)(v.row) * std::conj(-i(v.col)));
        }
        case Sym::Sbar_load: {
            const Load& d = *std::find_if(net.loads.begin(), net.loads.end(),
                                          [&](const Load& x) { return x.id == v.owner; });
            return pick(u.at(d.bus)(v.row) * std::conj(i_load.at(d.id)(v.col)));
        }
        case Sym::Sbar_gen: {
            const Generator& g = *std::find_if(net.generators.begin(), net.generators.end(),
                                               [&](const Generator& x) { return x.id == v.owner; });
            return pick(u.at(g.bus)(v.row) * std::conj(i_gen.at(g.id)(v.col)));
        }
        case Sym::P_disp: return cx(s_g.at(v.owner).sum().real(), 0);
        case Sym::Q_disp: return cx(s_g.at(v.owner).sum().imag(), 0);
        }
        throw contract_error("unreachable symbol");
    }
};

RVec run_embed(const ProblemInstance& inst, const EmbedSource& src) {
    RVec x(inst.num_vars());
    for (int k = 0; k < inst.num_vars(); ++k) {
        const VarInfo& v = inst.registry.vars[static_cast<size_t>(k)];
        if (!src.have_device_currents &&
            (v.sym == Sym::I_load || v.sym == Sym::I_gen || v.sym == Sym::Sbar_load ||
             v.sym == Sym::Sbar_gen))
            throw contract_error("embedding requires device currents for " + v.name);
        x(k) = src.value(v).real();
    }
    return x;
}

} // namespace

RVec embed_point(const ProblemInstance& inst, const Network& net, const IvrPoint& p) {
    EmbedSource src{net};
    for (const auto& b : net.buses) {
        auto it = p.U.find(b.id);
        if (it == p.U.end() || it->second.size() != b.n_conductors)
            throw contract_error("embed_point: missing voltage at bus " + b.id);
        src.u[b.id] = it->second;
    }
    src.i_line = p.I_line;
    src.i_load = p.I_load;
    src.i_gen = p.I_gen;
    for (const auto& d : net.loads)
        src.s_d[d.id] = src.u.at(d.bus).array() * p.I_load.at(d.id).array().conjugate();
    for (const auto& g : net.generators)
        src.s_g[g.id] = src.u.at(g.bus).array() * p.I_gen.at(g.id).array().conjugate();
    return run_embed(inst, src);
}

RVec embed_lifted(const ProblemInstance& inst, const Network&, const LiftedPoint& p) {
    if (inst.kind != FormulationKind::swr1 && inst.kind != FormulationKind::swr2)
        throw contract_error("embed_lifted supports only the lifted kinds");
    RVec x(inst.num_vars());
    auto owner_dir = [](const std::string& owner) {
        auto pos = owner.find(':');
        return std::make_pair(owner.substr(0, pos), owner.substr(pos + 1) == "ij");
    };
    for (int k = 0; k < inst.num_vars(); ++k) {
        const VarInfo& v = inst.registry.vars[static_cast<size_t>(k)];
        cx z;
        switch (v.sym) {
        case Sym::W: z = p.W.at(v.owner)(v.row, v.col); break;
        case Sym::L: z = p.L.at(v.owner)(v.row, v.col); break;
        case Sym::Sbar_line: {
            auto [id, ij] = owner_dir(v.owner);
            z = (ij ? p.Sbar_ij : p.Sbar_ji).at(id)(v.row, v.col);
            break;
        }
        case Sym::Sbar_load: z = p.Sbar_d.at(v.owner)(v.row, v.col); break;
        case Sym::Sbar_gen: z = p.Sbar_g.at(v.owner)(v.row, v.col); break;
        case Sym::S_load: z = p.S_d.at(v.owner)(v.row); break;
        case Sym::S_gen: z = p.S_g.at(v.owner)(v.row); break;
        case Sym::P_disp: z = p.S_disp.at(v.owner).real(); break;
        case Sym::Q_disp: z = p.S_disp.at(v.owner).imag(); break;
        default: throw contract_error("embed_lifted: unexpected symbol " + v.name);
        }
        x(k) = v.part == Part::im ? z.imag() : z.real();
    }
    return x;
}

RVec embed_from_voltages(const ProblemInstance& inst, const Network& net,
                         const std::map<std::string, CVec>& u_by_bus) {
    const bool svr_like = inst.kind == FormulationKind::svr1;
    const bool swr_like = (inst.kind == FormulationKind::swr1 || inst.kind == FormulationKind::swr2) &&
                          !(inst.features.matrix_kcl && inst.features.device_row_sums);
    if (!svr_like && !swr_like)
        throw contract_error("embed_from_voltages: unsupported variant " + inst.variant);

    EmbedSource src{net};
    src.have_device_currents = false;
    for (const auto& b : net.buses) {
        if (b.is_slack()) src.u[b.id] = *b.fixed_voltage;
        else src.u[b.id] = u_by_bus.at(b.id);
    }
    for (const auto& br : net.branches)
        src.i_line[br.id] = br.Y() * (src.u.at(br.from_bus) - src.u.at(br.to_bus));

    // Each bus's device absorbs the net side flow, making the bus balance an
    // identity. Requires at most one device per bus.
    for (const auto& b : net.buses) {
        CVec side_sum = CVec::Zero(b.n_conductors);
        for (const auto& br : net.branches) {
            if (br.from_bus == b.id) side_sum += src.flow(br.id, true);
            if (br.to_bus == b.id) side_sum += src.flow(br.id, false);
        }
        const Load* load = nullptr;
        const Generator* gen = nullptr;
        for (const auto& d : net.loads) {
            if (d.bus != b.id) continue;
            if (load) throw contract_error("two loads on bus " + b.id);
            load = &d;
        }
        for (const auto& g : net.generators) {
            if (g.bus != b.id) continue;
            if (gen) throw contract_error("two generators on bus " + b.id);
            gen = &g;
        }
        if (load && gen) throw contract_error("load and generator share bus " + b.id);
        if (load) src.s_d[load->id] = -side_sum;
        if (gen) src.s_g[gen->id] = side_sum;
        if (!load && !gen && side_sum.cwiseAbs().maxCoeff() > 1e-9)
            throw contract_error("bus " + b.id + " has flow but no device to absorb it");
    }

    RVec x(inst.num_vars());
    for (int k = 0; k < inst.num_vars(); ++k) {
        const VarInfo& v = inst.registry.vars[static_cast<size_t>(k)];
        if (v.sym == Sym::Sbar_load || v.sym == Sym::Sbar_gen) {
            // Free completion: diagonal carries the device power; with row-sum
            // rows present the next column offsets it, otherwise the matrix
            // balance absorbs the remainder through the off-diagonal slots.
            const CVec& s = v.sym == Sym::Sbar_load ? src.s_d.at(v.owner) : src.s_g.at(v.owner);
            const int n = static_cast<int>(s.size());
            cx z{0.0, 0.0};
            if (inst.features.device_row_sums) {
                if (v.row == v.col) z = s(v.row);
                else if (v.col == (v.row + 1) % n) z = -s(v.row);
            } else {
                // matrix balance only: mirror the net side flow matrix
                const std::string& bus_id = v.sym == Sym::Sbar_load
                    ? std::find_if(net.loads.begin(), net.loads.end(), [&](const Load& d) { return d.id == v.owner; })->bus
                    : std::find_if(net.generators.begin(), net.generators.end(), [&](const Generator& g) { return g.id == v.owner; })->bus;
                CMat side = CMat::Zero(n, n);
                for (const auto& br : net.branches) {
                    const CVec& i = src.i_line.at(br.id);
                    if (br.from_bus == bus_id) side += src.u.at(br.from_bus) * i.adjoint();
                    if (br.to_bus == bus_id) side += src.u.at(br.to_bus) * (-i).adjoint();
                }
                z = v.sym == Sym::Sbar_load ? -side(v.row, v.col) : side(v.row, v.col);
            }
            x(k) = v.part == Part::re ? z.real() : z.imag();
            continue;
        }
        x(k) = src.value(v).real();
    }
    return x;
}

} // namespace mcopf
