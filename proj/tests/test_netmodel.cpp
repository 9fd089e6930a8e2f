#include <doctest.h>

#include "mcopf/complex_matrix.hpp"
#include "mcopf/errors.hpp"
#include "mcopf/network.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace mcopf;

namespace {

std::string read_case() {
    std::ifstream in(MCOPF_CASE_DIR "/two_bus_two_wire.json");
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool has_finding(const ValidationReport& rep, const std::string& code) {
    for (const Finding& f : rep.findings)
        if (f.code == code) return true;
    return false;
}

CMat random_symmetric(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    CMat m(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) {
            m(r, c) = cx{nd(rng), nd(rng)};
            m(c, r) = m(r, c);
        }
    // Diagonal dominance keeps every Schur block invertible.
    for (int k = 0; k < n; ++k) m(k, k) += cx{4.0, 4.0};
    return m;
}

} // namespace

TEST_CASE("bundled case decodes field by field") {
    Network net = parse_network(read_case());

    REQUIRE(net.buses.size() == 2);
    const Bus& i = net.bus("i");
    const Bus& j = net.bus("j");
    CHECK(i.is_slack());
    CHECK(!j.is_slack());
    CHECK(i.n_conductors == 2);
    REQUIRE(i.fixed_voltage.has_value());
    CHECK((*i.fixed_voltage)(0) == cx{1.0, 0.0});
    CHECK((*i.fixed_voltage)(1) == cx{0.0, 0.0});
    CHECK(j.u_min(0) == doctest::Approx(0.9));
    CHECK(j.u_min(1) == doctest::Approx(0.0));
    CHECK(j.u_max(0) == doctest::Approx(1.1));
    CHECK(j.u_max(1) == doctest::Approx(1.1));

    REQUIRE(net.branches.size() == 1);
    const Branch& l = net.branches[0];
    CHECK(l.from_bus == "i");
    CHECK(l.to_bus == "j");
    CHECK(l.R(0, 0) == doctest::Approx(0.05));
    CHECK(l.R(0, 1) == doctest::Approx(0.005));
    CHECK(l.X(0, 0) == doctest::Approx(0.04));
    CHECK(l.X(0, 1) == doctest::Approx(0.02));
    CHECK(l.Z()(1, 1) == cx{0.05, 0.04});

    REQUIRE(net.loads.size() == 1);
    CHECK(net.loads[0].bus == "j");
    CHECK(net.loads[0].term_in == 0);
    CHECK(net.loads[0].term_out == 1);
    CHECK(net.loads[0].s_ref == cx{1.0, 0.5});

    REQUIRE(net.generators.size() == 1);
    CHECK(net.generators[0].bus == "i");
    CHECK(net.generators[0].conductors == std::vector<int>{0, 1});
    CHECK(net.generators[0].in_objective);

    CHECK(net.slack().id == "i");
}

TEST_CASE("device arrays may be empty") {
    Network net = parse_network(R"({
        "buses": [{"id": "a", "n_conductors": 1, "u_min": [0.9], "u_max": [1.1],
                   "fixed_voltage": [[1.0, 0.0]]}],
        "branches": [], "loads": [], "generators": []
    })");
    CHECK(net.buses.size() == 1);
    CHECK(net.branches.empty());
    CHECK(validate_network(net).ok());
}

TEST_CASE("parse failure modes") {
    CHECK_THROWS_AS(parse_network("{ not json"), parse_error);
    CHECK_THROWS_AS(parse_network("[]"), schema_error);
    CHECK_THROWS_AS(parse_network(R"({"buses": [{"id": "a"}], "branches": [],
        "loads": [], "generators": []})"),
                    schema_error);

    // Dangling references are rejected at decode time.
    CHECK_THROWS_AS(parse_network(R"({
        "buses": [{"id": "a", "n_conductors": 1, "u_min": [0], "u_max": [2],
                   "fixed_voltage": [[1, 0]]}],
        "branches": [{"id": "l", "from": "a", "to": "ghost", "R": [[1]], "X": [[1]]}],
        "loads": [], "generators": []
    })"),
                    reference_error);
    CHECK_THROWS_AS(parse_network(R"({
        "buses": [{"id": "a", "n_conductors": 1, "u_min": [0], "u_max": [2],
                   "fixed_voltage": [[1, 0]]}],
        "branches": [],
        "loads": [{"id": "d", "bus": "ghost", "terminals": [0, 1], "s_ref": [1, 0]}],
        "generators": []
    })"),
                    reference_error);
    CHECK_THROWS_AS(parse_network(R"({
        "buses": [{"id": "a", "n_conductors": 1, "u_min": [0], "u_max": [2],
                   "fixed_voltage": [[1, 0]]}],
        "branches": [], "loads": [],
        "generators": [{"id": "g", "bus": "ghost", "conductors": [0], "in_objective": true}]
    })"),
                    reference_error);
}

TEST_CASE("serialize then parse reproduces every field") {
    Network a = parse_network(read_case());
    Network b = parse_network(serialize_network(a));

    REQUIRE(a.buses.size() == b.buses.size());
    for (size_t k = 0; k < a.buses.size(); ++k) {
        CHECK(a.buses[k].id == b.buses[k].id);
        CHECK(a.buses[k].n_conductors == b.buses[k].n_conductors);
        CHECK((a.buses[k].u_min - b.buses[k].u_min).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.buses[k].u_max - b.buses[k].u_max).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.buses[k].fixed_voltage.has_value() == b.buses[k].fixed_voltage.has_value());
        if (a.buses[k].fixed_voltage)
            CHECK((*a.buses[k].fixed_voltage - *b.buses[k].fixed_voltage).cwiseAbs().maxCoeff() ==
                  0.0);
    }
    REQUIRE(a.branches.size() == b.branches.size());
    for (size_t k = 0; k < a.branches.size(); ++k) {
        CHECK(a.branches[k].from_bus == b.branches[k].from_bus);
        CHECK(a.branches[k].to_bus == b.branches[k].to_bus);
        CHECK((a.branches[k].R - b.branches[k].R).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.branches[k].X - b.branches[k].X).cwiseAbs().maxCoeff() == 0.0);
    }
    REQUIRE(a.loads.size() == b.loads.size());
    for (size_t k = 0; k < a.loads.size(); ++k) {
        CHECK(a.loads[k].bus == b.loads[k].bus);
        CHECK(a.loads[k].term_in == b.loads[k].term_in);
        CHECK(a.loads[k].term_out == b.loads[k].term_out);
        CHECK(a.loads[k].s_ref == b.loads[k].s_ref);
    }
    REQUIRE(a.generators.size() == b.generators.size());

    // A second round trip is byte-stable.
    CHECK(serialize_network(a) == serialize_network(b));
}

TEST_CASE("bundled case validates clean") {
    Network net = parse_network(read_case());
    ValidationReport rep = validate_network(net);
    for (const Finding& f : rep.findings) {
        CAPTURE(f.code);
        CAPTURE(f.message);
    }
    CHECK(rep.ok());
}

TEST_CASE("validation findings") {
    Network base = parse_network(read_case());

    SUBCASE("asymmetric R") {
        Network net = base;
        net.branches[0].R(0, 1) = 0.009;
        CHECK(has_finding(validate_network(net), "asymmetric-R"));
    }
    SUBCASE("indefinite X") {
        Network net = base;
        net.branches[0].X = -RMat::Identity(2, 2);
        CHECK(has_finding(validate_network(net), "non-pd-X"));
    }
    SUBCASE("bound ordering") {
        Network net = base;
        net.buses[1].u_min(0) = 1.5;
        CHECK(has_finding(validate_network(net), "bound-ordering"));
    }
    SUBCASE("negative lower bound") {
        Network net = base;
        net.buses[1].u_min(0) = -0.1;
        CHECK(has_finding(validate_network(net), "bound-sign"));
    }
    SUBCASE("no slack bus") {
        Network net = base;
        net.buses[0].fixed_voltage.reset();
        CHECK(has_finding(validate_network(net), "slack-count"));
    }
    SUBCASE("two slack buses") {
        Network net = base;
        net.buses[1].fixed_voltage = *net.buses[0].fixed_voltage;
        CHECK(has_finding(validate_network(net), "slack-count"));
    }
    SUBCASE("self loop") {
        Network net = base;
        net.branches[0].to_bus = "i";
        CHECK(has_finding(validate_network(net), "self-loop"));
    }
    SUBCASE("impedance shape") {
        Network net = base;
        net.branches[0].R = RMat::Identity(3, 3);
        CHECK(has_finding(validate_network(net), "impedance-shape"));
    }
    SUBCASE("load terminal reuse") {
        Network net = base;
        net.loads[0].term_out = net.loads[0].term_in;
        CHECK(has_finding(validate_network(net), "load-terminals"));
    }
    SUBCASE("load terminal range") {
        Network net = base;
        net.loads[0].term_out = 7;
        CHECK(has_finding(validate_network(net), "load-terminal-range"));
    }
    SUBCASE("generator conductor range") {
        Network net = base;
        net.generators[0].conductors.push_back(5);
        CHECK(has_finding(validate_network(net), "generator-conductor-range"));
    }
    SUBCASE("duplicate generator conductor") {
        Network net = base;
        net.generators[0].conductors.push_back(0);
        CHECK(has_finding(validate_network(net), "generator-conductor-dup"));
    }
}

TEST_CASE("matrix predicates") {
    CMat h(2, 2);
    h << cx{2.0, 0.0}, cx{0.3, 0.1}, cx{0.3, -0.1}, cx{1.0, 0.0};
    CHECK(is_hermitian(h));
    CHECK(!is_symmetric(h));
    CHECK(is_positive_definite(h));

    CMat s(2, 2);
    s << cx{1.0, 1.0}, cx{0.2, 0.5}, cx{0.2, 0.5}, cx{2.0, -1.0};
    CHECK(is_symmetric(s));
    CHECK(!is_hermitian(s));

    CMat indef = CMat::Identity(2, 2);
    indef(1, 1) = cx{-1.0, 0.0};
    CHECK(!is_positive_definite(indef));
    CHECK(!is_positive_definite(CMat::Zero(2, 2)));
}

TEST_CASE("branch admittance inverts the impedance") {
    Network net = parse_network(read_case());
    const Branch& l = net.branches[0];
    CMat residual = l.Z() * l.Y() - CMat::Identity(2, 2);
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kron reduction of the bundled branch") {
    Network net = parse_network(read_case());
    CMat zk = kron_reduce(net.branches[0].Z(), {1});
    REQUIRE(zk.rows() == 1);
    // Independent closed form: z_aa - z_an^2 / z_nn.
    cx zaa{0.05, 0.04}, zan{0.005, 0.02};
    cx expect = zaa - zan * zan / zaa;
    CHECK(std::abs(zk(0, 0) - expect) < 1e-14);
    CHECK(std::abs(zk(0, 0) - cx{0.052622, 0.033902}) < 1e-5);
}

TEST_CASE("kron reduction leaves decoupled blocks alone") {
    CMat z = CMat::Zero(3, 3);
    z.topLeftCorner(2, 2) << cx{0.4, 0.3}, cx{0.1, 0.05}, cx{0.1, 0.05}, cx{0.5, 0.2};
    z(2, 2) = cx{1.0, 1.0};
    CMat zk = kron_reduce(z, {2});
    CHECK((zk - z.topLeftCorner(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sequential elimination equals joint elimination") {
    CMat z = random_symmetric(3, 7);
    CMat joint = kron_reduce(z, {1, 2});
    CMat seq = kron_reduce(kron_reduce(z, {2}), {1});
    REQUIRE(joint.rows() == 1);
    CHECK((joint - seq).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kron reduction preserves symmetry") {
    CMat z = random_symmetric(4, 11);
    CMat zk = kron_reduce(z, {1, 3});
    CHECK(is_symmetric(zk, 1e-12));
}

TEST_CASE("kron reduction error modes") {
    CMat z = CMat::Zero(2, 2);
    z(0, 0) = cx{1.0, 0.0}; // z(1,1) = 0 makes the eliminated block singular
    CHECK_THROWS_AS(kron_reduce(z, {1}), singular_block_error);
    CHECK_THROWS_AS(kron_reduce(z, {5}), contract_error);
    CHECK_THROWS_AS(kron_reduce(CMat::Zero(2, 3), {0}), contract_error);
}
