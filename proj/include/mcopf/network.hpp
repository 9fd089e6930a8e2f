#pragma once

#include "mcopf/complex_matrix.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcopf {

struct Bus {
    std::string id;
    int n_conductors = 0;
    RVec u_min; // per-unit magnitude bounds, one entry per conductor
    RVec u_max;
    std::optional<CVec> fixed_voltage; // set on the slack bus

    bool is_slack() const { return fixed_voltage.has_value(); }
};

struct Branch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    RMat R;
    RMat X;

    CMat Z() const { return R + J * X; }
    CMat Y() const; // matrix inverse of Z
};

struct Load {
    std::string id;
    std::string bus;
    int term_in = 0;  // conductor the current enters through
    int term_out = 0; // conductor the current returns through
    cx s_ref;
};

struct Generator {
    std::string id;
    std::string bus;
    std::vector<int> conductors;
    bool in_objective = true;
};

struct Network {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::map<std::string, double> base; // informational per-unit bases

    const Bus& bus(const std::string& id) const;
    int bus_index(const std::string& id) const;
    const Bus& slack() const; // exactly one fixed-voltage bus expected
};

struct Finding {
    std::string code;    // stable machine-readable tag
    std::string subject; // offending entity id
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;
    bool ok() const { return findings.empty(); }
};

// Structural decoding only; resolves references but does not check numerics.
// Throws parse_error / schema_error / reference_error.
Network parse_network(const std::string& json_text);

std::string serialize_network(const Network& net);

// Full invariant scan; every violation becomes a report entry, nothing throws.
ValidationReport validate_network(const Network& net);

} // namespace mcopf
