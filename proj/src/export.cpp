#include "mcopf/export.hpp"

#include "mcopf/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mcopf {

using json = nlohmann::json;

namespace {

const char* const sym_names[] = {
    "U",         "I_line",    "I_load",   "I_gen",  "S_line",
    "S_load",    "S_gen",     "W",        "L",      "Sbar_line",
    "Sbar_load", "Sbar_gen",  "P_disp",   "Q_disp",
};

constexpr int sym_count = static_cast<int>(sizeof(sym_names) / sizeof(sym_names[0]));

Sym sym_from_name(const std::string& s) {
    for (int k = 0; k < sym_count; ++k)
        if (s == sym_names[k]) return static_cast<Sym>(k);
    throw parse_error("unknown symbol class '" + s + "'");
}

json bound_to_json(double b) {
    if (std::isinf(b)) return nullptr;
    return b;
}

double bound_from_json(const json& j, double unbounded) {
    if (j.is_null()) return unbounded;
    return j.get<double>();
}

json expr_to_json(const CExpr& e) {
    json terms = json::array();
    for (const CAtom& t : e.terms)
        terms.push_back({{"coeff", {t.coeff.real(), t.coeff.imag()}},
                         {"conj", t.conj},
                         {"im", t.im},
                         {"re", t.re}});
    return {{"constant", {e.constant.real(), e.constant.imag()}}, {"terms", terms}};
}

CExpr expr_from_json(const json& j) {
    CExpr e;
    e.constant = cx{j.at("constant").at(0).get<double>(), j.at("constant").at(1).get<double>()};
    for (const json& t : j.at("terms")) {
        CAtom a;
        a.coeff = cx{t.at("coeff").at(0).get<double>(), t.at("coeff").at(1).get<double>()};
        a.conj = t.at("conj").get<bool>();
        a.re = t.at("re").get<int>();
        a.im = t.at("im").get<int>();
        e.terms.push_back(a);
    }
    return e;
}

json constraint_to_json(const RealConstraint& c) {
    // Cancelled coefficients are dropped so a round trip is byte-stable.
    json quad = json::array();
    for (const auto& [key, coeff] : c.q.quad)
        if (coeff != 0.0) quad.push_back({key.first, key.second, coeff});
    json linear = json::array();
    for (const auto& [idx, coeff] : c.q.affine.terms)
        if (coeff != 0.0) linear.push_back({idx, coeff});
    return {{"constant", c.q.affine.constant},
            {"label", c.label},
            {"linear", linear},
            {"quad", quad}};
}

RealConstraint constraint_from_json(const json& j, Rel rel) {
    RealConstraint c;
    c.rel = rel;
    c.label = j.at("label").get<std::string>();
    c.q.affine.constant = j.at("constant").get<double>();
    for (const json& t : j.at("linear"))
        c.q.affine.add(t.at(0).get<int>(), t.at(1).get<double>());
    for (const json& t : j.at("quad"))
        c.q.add_quad(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>());
    return c;
}

std::string export_qcqp_json(const ProblemInstance& inst) {
    json root;
    root["kind"] = kind_name(inst.kind);
    root["variant"] = inst.variant;
    root["features"] = {{"device_row_sums", inst.features.device_row_sums},
                        {"matrix_kcl", inst.features.matrix_kcl}};

    json vars = json::array();
    for (const VarInfo& v : inst.registry.vars)
        vars.push_back({{"col", v.col},
                        {"hi", bound_to_json(v.hi)},
                        {"lo", bound_to_json(v.lo)},
                        {"name", v.name},
                        {"owner", v.owner},
                        {"part", v.part == Part::re ? "re" : "im"},
                        {"row", v.row},
                        {"sym", sym_names[static_cast<int>(v.sym)]}});
    root["variables"] = vars;

    json eqs = json::array();
    for (const RealConstraint& c : inst.equalities) eqs.push_back(constraint_to_json(c));
    root["equalities"] = eqs;
    json ineqs = json::array();
    for (const RealConstraint& c : inst.inequalities) ineqs.push_back(constraint_to_json(c));
    root["inequalities"] = ineqs;

    json blocks = json::array();
    for (const PsdBlock& b : inst.psd_blocks) {
        json rows = json::array();
        for (const auto& row : b.entries) {
            json cols = json::array();
            for (const CExpr& e : row) cols.push_back(expr_to_json(e));
            rows.push_back(cols);
        }
        blocks.push_back({{"cdim", b.cdim}, {"entries", rows}, {"owner", b.owner}});
    }
    root["psd_blocks"] = blocks;

    root["p_vars"] = inst.p_vars;
    root["q_vars"] = inst.q_vars;
    root["flat_start"] = std::vector<double>(inst.flat_start.data(),
                                             inst.flat_start.data() + inst.flat_start.size());
    root["voltage_vars"] = inst.voltage_vars;
    root["bounded_voltage_vars"] = inst.bounded_voltage_vars;
    return root.dump(2) + "\n";
}

// Shortest decimal that parses back to the same double.
std::string fmt_num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// One linear row in solver order: sum coeff@var = rhs.
struct TextRow {
    std::vector<std::pair<int, double>> terms;
    double rhs = 0.0;
};

std::string export_conic_text(const ProblemInstance& inst) {
    if (!inst.is_conic())
        throw contract_error("conic-text export requires an affine instance; kind '" +
                             std::string(kind_name(inst.kind)) + "' has quadratic rows");

    int next_var = inst.registry.size();
    std::vector<std::vector<int>> block_vars; // per block, svec-ordered indices
    std::vector<TextRow> pin_rows;

    // Map one affine real part onto a plain variable index, minting a pinned
    // auxiliary when the expression is anything but a bare unit variable.
    auto slot = [&](const LinExpr& lin) {
        if (lin.terms.size() == 1 && lin.terms[0].second == 1.0 && lin.constant == 0.0)
            return lin.terms[0].first;
        int aux = next_var++;
        TextRow row;
        row.terms.emplace_back(aux, 1.0);
        for (const auto& [idx, coeff] : lin.terms) row.terms.emplace_back(idx, -coeff);
        row.rhs = lin.constant;
        pin_rows.push_back(std::move(row));
        return aux;
    };

    for (const PsdBlock& b : inst.psd_blocks) {
        std::vector<int> ids;
        for (int r = 0; r < b.cdim; ++r)
            for (int c = r; c < b.cdim; ++c) {
                const CExpr& e = b.entries[static_cast<size_t>(r)][static_cast<size_t>(c)];
                ids.push_back(slot(re_part(e)));
                if (c > r) ids.push_back(slot(im_part(e)));
            }
        block_vars.push_back(std::move(ids));
    }

    std::vector<TextRow> slack_rows;
    std::vector<int> slack_vars;
    for (const RealConstraint& c : inst.inequalities) {
        int s = next_var++;
        slack_vars.push_back(s);
        TextRow row;
        for (const auto& [idx, coeff] : c.q.affine.terms) row.terms.emplace_back(idx, coeff);
        row.terms.emplace_back(s, 1.0);
        row.rhs = -c.q.affine.constant;
        slack_rows.push_back(std::move(row));
    }

    size_t neq = inst.equalities.size() + pin_rows.size() + slack_rows.size();
    size_t nblocks = block_vars.size() + slack_vars.size();

    std::ostringstream out;
    out << next_var << ' ' << nblocks << ' ' << neq << '\n';
    for (size_t k = 0; k < block_vars.size(); ++k) {
        out << inst.psd_blocks[k].cdim;
        for (int idx : block_vars[k]) out << ' ' << idx;
        out << '\n';
    }
    for (int s : slack_vars) out << 1 << ' ' << s << '\n';

    auto put_row = [&](const std::vector<std::pair<int, double>>& terms, double rhs) {
        out << "row:";
        for (const auto& [idx, coeff] : terms) out << ' ' << fmt_num(coeff) << '@' << idx;
        out << " = " << fmt_num(rhs) << '\n';
    };
    for (const RealConstraint& c : inst.equalities)
        put_row(c.q.affine.terms, -c.q.affine.constant);
    for (const TextRow& r : pin_rows) put_row(r.terms, r.rhs);
    for (const TextRow& r : slack_rows) put_row(r.terms, r.rhs);

    // Objective frozen at the active-power ray (theta = 0).
    LinExpr obj = inst.objective(0.0);
    out << "obj:";
    for (const auto& [idx, coeff] : obj.terms) out << ' ' << fmt_num(coeff) << '@' << idx;
    out << '\n';
    return out.str();
}

} // namespace

ExportFormat parse_export_format(std::string name) {
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (name == "qcqp-json") return ExportFormat::qcqp_json;
    if (name == "conic-text") return ExportFormat::conic_text;
    throw contract_error("unknown export format '" + name + "'");
}

std::string export_problem(const ProblemInstance& inst, ExportFormat format) {
    if (format == ExportFormat::qcqp_json) return export_qcqp_json(inst);
    return export_conic_text(inst);
}

ProblemInstance import_qcqp_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("problem import: ") + e.what());
    }
    try {
        ProblemInstance inst;
        inst.kind = parse_kind(root.at("kind").get<std::string>());
        inst.variant = root.at("variant").get<std::string>();
        inst.features.device_row_sums = root.at("features").at("device_row_sums").get<bool>();
        inst.features.matrix_kcl = root.at("features").at("matrix_kcl").get<bool>();

        constexpr double inf = std::numeric_limits<double>::infinity();
        for (const json& jv : root.at("variables")) {
            VarInfo v;
            v.name = jv.at("name").get<std::string>();
            v.sym = sym_from_name(jv.at("sym").get<std::string>());
            v.owner = jv.at("owner").get<std::string>();
            v.row = jv.at("row").get<int>();
            v.col = jv.at("col").get<int>();
            v.part = jv.at("part").get<std::string>() == "im" ? Part::im : Part::re;
            v.lo = bound_from_json(jv.at("lo"), -inf);
            v.hi = bound_from_json(jv.at("hi"), inf);
            inst.registry.add(v);
        }

        for (const json& jc : root.at("equalities"))
            inst.equalities.push_back(constraint_from_json(jc, Rel::eq));
        for (const json& jc : root.at("inequalities"))
            inst.inequalities.push_back(constraint_from_json(jc, Rel::le));

        for (const json& jb : root.at("psd_blocks")) {
            PsdBlock b;
            b.owner = jb.at("owner").get<std::string>();
            b.cdim = jb.at("cdim").get<int>();
            for (const json& jr : jb.at("entries")) {
                std::vector<CExpr> row;
                for (const json& je : jr) row.push_back(expr_from_json(je));
                b.entries.push_back(std::move(row));
            }
            inst.psd_blocks.push_back(std::move(b));
        }

        inst.p_vars = root.at("p_vars").get<std::vector<int>>();
        inst.q_vars = root.at("q_vars").get<std::vector<int>>();
        auto flat = root.at("flat_start").get<std::vector<double>>();
        inst.flat_start = Eigen::Map<const RVec>(flat.data(), static_cast<Eigen::Index>(flat.size()));
        inst.voltage_vars = root.at("voltage_vars").get<std::vector<int>>();
        inst.bounded_voltage_vars = root.at("bounded_voltage_vars").get<std::vector<int>>();
        return inst;
    } catch (const json::exception& e) {
        throw schema_error(std::string("problem import: ") + e.what());
    }
}

} // namespace mcopf
