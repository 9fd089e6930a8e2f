#include <doctest.h>

#include "mcopf/errors.hpp"
#include "mcopf/export.hpp"
#include "mcopf/formulations.hpp"
#include "mcopf/network.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mcopf;

namespace {

std::string read_case() {
    std::ifstream in(MCOPF_CASE_DIR "/two_bus_two_wire.json");
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Network bundled_network() { return parse_network(read_case()); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

int token_count(const std::string& line) {
    std::stringstream ss(line);
    std::string tok;
    int n = 0;
    while (ss >> tok) ++n;
    return n;
}

} // namespace

TEST_CASE("qcqp json survives an export import export cycle byte for byte") {
    Network net = bundled_network();
    for (FormulationKind k : {FormulationKind::ivr, FormulationKind::svr1, FormulationKind::svr2,
                              FormulationKind::swr1, FormulationKind::swr2}) {
        ProblemInstance inst = build_formulation(net, k);
        std::string first = export_problem(inst, ExportFormat::qcqp_json);
        ProblemInstance again = import_qcqp_json(first);
        std::string second = export_problem(again, ExportFormat::qcqp_json);
        CAPTURE(inst.variant);
        CHECK(first == second);
    }
}

TEST_CASE("imported instance behaves like the original") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::swr2);
    ProblemInstance again = import_qcqp_json(export_problem(inst, ExportFormat::qcqp_json));

    CHECK(again.kind == inst.kind);
    CHECK(again.variant == inst.variant);
    CHECK(again.features.matrix_kcl == inst.features.matrix_kcl);
    CHECK(again.features.device_row_sums == inst.features.device_row_sums);
    REQUIRE(again.num_vars() == inst.num_vars());
    for (int k = 0; k < inst.num_vars(); ++k) {
        const VarInfo& a = inst.registry.vars[static_cast<size_t>(k)];
        const VarInfo& b = again.registry.vars[static_cast<size_t>(k)];
        CHECK(a.name == b.name);
        CHECK(a.sym == b.sym);
        CHECK(a.owner == b.owner);
        CHECK(a.lo == b.lo);
        CHECK(a.hi == b.hi);
    }
    REQUIRE(again.equalities.size() == inst.equalities.size());
    for (size_t k = 0; k < inst.equalities.size(); ++k)
        CHECK(again.equalities[k].label == inst.equalities[k].label);
    CHECK(again.p_vars == inst.p_vars);
    CHECK(again.q_vars == inst.q_vars);
    CHECK(again.voltage_vars == inst.voltage_vars);
    CHECK(again.bounded_voltage_vars == inst.bounded_voltage_vars);
    CHECK((again.flat_start - inst.flat_start).cwiseAbs().maxCoeff() == 0.0);

    // Same residuals at random points, PSD blocks included.
    std::mt19937 rng(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        RVec x(inst.num_vars());
        for (int k = 0; k < x.size(); ++k) x(k) = nd(rng);
        ResidualReport ra = residuals(inst, x);
        ResidualReport rb = residuals(again, x);
        CHECK(ra.equality_inf_norm() == rb.equality_inf_norm());
        CHECK(ra.inequality_max_violation() == rb.inequality_max_violation());
        REQUIRE(again.psd_blocks.size() == inst.psd_blocks.size());
        for (size_t b = 0; b < inst.psd_blocks.size(); ++b) {
            CMat ma = inst.psd_blocks[b].eval(x);
            CMat mb = again.psd_blocks[b].eval(x);
            CHECK((ma - mb).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("conic text lays out the lifted instance") {
    Network net = bundled_network();
    ProblemInstance inst = build_formulation(net, FormulationKind::swr1);
    std::string text = export_problem(inst, ExportFormat::conic_text);
    auto lines = lines_of(text);

    // header: variables (34 + 4 pinned + 3 slacks), blocks (1 psd + 3 slack),
    // equalities (24 + 4 pins + 3 slack rows)
    REQUIRE(!lines.empty());
    CHECK(lines[0] == "41 4 31");

    // one psd block line followed by three 1x1 slack block lines
    CHECK(token_count(lines[1]) == 17);
    CHECK(lines[1].rfind("4 ", 0) == 0);
    for (int k = 2; k <= 4; ++k) {
        CHECK(token_count(lines[k]) == 2);
        CHECK(lines[k].rfind("1 ", 0) == 0);
    }

    int rows = 0;
    for (const auto& l : lines)
        if (l.rfind("row:", 0) == 0) ++rows;
    CHECK(rows == 31);
    CHECK(text.find("obj: 1@32") != std::string::npos);
    CHECK(lines.size() == 1 + 4 + 31 + 1);
}

TEST_CASE("conic text refuses quadratic instances") {
    Network net = bundled_network();
    for (FormulationKind k : {FormulationKind::ivr, FormulationKind::svr1, FormulationKind::svr2}) {
        ProblemInstance inst = build_formulation(net, k);
        CHECK_THROWS_AS(export_problem(inst, ExportFormat::conic_text), contract_error);
    }
}

TEST_CASE("export format names") {
    CHECK(parse_export_format("qcqp-json") == ExportFormat::qcqp_json);
    CHECK(parse_export_format("QCQP-JSON") == ExportFormat::qcqp_json);
    CHECK(parse_export_format("Conic-Text") == ExportFormat::conic_text);
    CHECK_THROWS_AS(parse_export_format("sdpa"), contract_error);
}

TEST_CASE("import rejects malformed input") {
    CHECK_THROWS_AS(import_qcqp_json("not json at all"), parse_error);
    CHECK_THROWS_AS(import_qcqp_json("{\"kind\": \"ivr\"}"), schema_error);
    CHECK_THROWS_AS(import_qcqp_json("[]"), schema_error);
}
