#include "mcopf/network.hpp"

#include "mcopf/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace mcopf {

using json = nlohmann::json;

CMat Branch::Y() const {
    CMat z = Z();
    Eigen::FullPivLU<CMat> lu(z);
    if (!lu.isInvertible())
        throw singular_block_error("branch " + id + ": impedance matrix is singular");
    return lu.inverse();
}

const Bus& Network::bus(const std::string& id) const {
    return buses[static_cast<size_t>(bus_index(id))];
}

int Network::bus_index(const std::string& id) const {
    for (size_t k = 0; k < buses.size(); ++k)
        if (buses[k].id == id) return static_cast<int>(k);
    throw reference_error("unknown bus id '" + id + "'");
}

const Bus& Network::slack() const {
    const Bus* found = nullptr;
    for (const auto& b : buses) {
        if (!b.is_slack()) continue;
        if (found) throw model_error("more than one fixed-voltage bus");
        found = &b;
    }
    if (!found) throw model_error("no fixed-voltage bus");
    return *found;
}

namespace {

const json& need(const json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end())
        throw schema_error("missing required field '" + std::string(field) + "' in " + where);
    return *it;
}

cx decode_complex(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw schema_error("expected [re, im] pair in " + where);
    return {v[0].get<double>(), v[1].get<double>()};
}

RVec decode_real_vector(const json& v, const std::string& where) {
    if (!v.is_array()) throw schema_error("expected array in " + where);
    RVec out(static_cast<Eigen::Index>(v.size()));
    for (size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number()) throw schema_error("expected number in " + where);
        out(static_cast<Eigen::Index>(k)) = v[k].get<double>();
    }
    return out;
}

RMat decode_real_matrix(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw schema_error("expected matrix in " + where);
    const auto rows = static_cast<Eigen::Index>(v.size());
    RMat out;
    for (Eigen::Index r = 0; r < rows; ++r) {
        RVec row = decode_real_vector(v[static_cast<size_t>(r)], where);
        if (r == 0) out.resize(rows, row.size());
        if (row.size() != out.cols()) throw schema_error("ragged matrix in " + where);
        out.row(r) = row;
    }
    return out;
}

json encode_complex(cx v) { return json::array({v.real(), v.imag()}); }

json encode_real_vector(const RVec& v) {
    json out = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
    return out;
}

json encode_real_matrix(const RMat& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(encode_real_vector(m.row(r)));
    return out;
}

} // namespace

Network parse_network(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw parse_error(e.what()); // message carries byte position and line
    }
    if (!doc.is_object()) throw schema_error("top-level JSON value must be an object");

    Network net;
    for (const auto& jb : need(doc, "buses", "document")) {
        Bus b;
        b.id = need(jb, "id", "bus").get<std::string>();
        b.n_conductors = need(jb, "n_conductors", "bus " + b.id).get<int>();
        b.u_min = decode_real_vector(need(jb, "u_min", "bus " + b.id), "bus " + b.id + " u_min");
        b.u_max = decode_real_vector(need(jb, "u_max", "bus " + b.id), "bus " + b.id + " u_max");
        const json& fv = need(jb, "fixed_voltage", "bus " + b.id);
        if (!fv.is_null()) {
            CVec u(static_cast<Eigen::Index>(fv.size()));
            for (size_t k = 0; k < fv.size(); ++k)
                u(static_cast<Eigen::Index>(k)) = decode_complex(fv[k], "bus " + b.id + " fixed_voltage");
            b.fixed_voltage = u;
        }
        net.buses.push_back(std::move(b));
    }
    std::set<std::string> bus_ids;
    for (const auto& b : net.buses) bus_ids.insert(b.id);
    auto check_bus_ref = [&](const std::string& id, const std::string& where) {
        if (!bus_ids.count(id))
            throw reference_error(where + " references unknown bus '" + id + "'");
    };

    for (const auto& jl : need(doc, "branches", "document")) {
        Branch br;
        br.id = need(jl, "id", "branch").get<std::string>();
        br.from_bus = need(jl, "from", "branch " + br.id).get<std::string>();
        br.to_bus = need(jl, "to", "branch " + br.id).get<std::string>();
        check_bus_ref(br.from_bus, "branch " + br.id);
        check_bus_ref(br.to_bus, "branch " + br.id);
        br.R = decode_real_matrix(need(jl, "R", "branch " + br.id), "branch " + br.id + " R");
        br.X = decode_real_matrix(need(jl, "X", "branch " + br.id), "branch " + br.id + " X");
        net.branches.push_back(std::move(br));
    }
    for (const auto& jd : need(doc, "loads", "document")) {
        Load d;
        d.id = need(jd, "id", "load").get<std::string>();
        d.bus = need(jd, "bus", "load " + d.id).get<std::string>();
        check_bus_ref(d.bus, "load " + d.id);
        const json& t = need(jd, "terminals", "load " + d.id);
        if (!t.is_array() || t.size() != 2)
            throw schema_error("load " + d.id + ": terminals must be a pair");
        d.term_in = t[0].get<int>();
        d.term_out = t[1].get<int>();
        d.s_ref = decode_complex(need(jd, "s_ref", "load " + d.id), "load " + d.id + " s_ref");
        net.loads.push_back(std::move(d));
    }
    for (const auto& jg : need(doc, "generators", "document")) {
        Generator g;
        g.id = need(jg, "id", "generator").get<std::string>();
        g.bus = need(jg, "bus", "generator " + g.id).get<std::string>();
        check_bus_ref(g.bus, "generator " + g.id);
        for (const auto& c : need(jg, "conductors", "generator " + g.id))
            g.conductors.push_back(c.get<int>());
        g.in_objective = need(jg, "in_objective", "generator " + g.id).get<bool>();
        net.generators.push_back(std::move(g));
    }
    if (doc.contains("base") && doc["base"].is_object())
        for (const auto& [k, v] : doc["base"].items()) net.base[k] = v.get<double>();
    return net;
}

std::string serialize_network(const Network& net) {
    json doc;
    doc["buses"] = json::array();
    for (const auto& b : net.buses) {
        json jb;
        jb["id"] = b.id;
        jb["n_conductors"] = b.n_conductors;
        jb["u_min"] = encode_real_vector(b.u_min);
        jb["u_max"] = encode_real_vector(b.u_max);
        if (b.fixed_voltage) {
            json fv = json::array();
            for (Eigen::Index k = 0; k < b.fixed_voltage->size(); ++k)
                fv.push_back(encode_complex((*b.fixed_voltage)(k)));
            jb["fixed_voltage"] = fv;
        } else {
            jb["fixed_voltage"] = nullptr;
        }
        doc["buses"].push_back(jb);
    }
    doc["branches"] = json::array();
    for (const auto& br : net.branches) {
        json jl;
        jl["id"] = br.id;
        jl["from"] = br.from_bus;
        jl["to"] = br.to_bus;
        jl["R"] = encode_real_matrix(br.R);
        jl["X"] = encode_real_matrix(br.X);
        doc["branches"].push_back(jl);
    }
    doc["loads"] = json::array();
    for (const auto& d : net.loads) {
        json jd;
        jd["id"] = d.id;
        jd["bus"] = d.bus;
        jd["terminals"] = json::array({d.term_in, d.term_out});
        jd["s_ref"] = encode_complex(d.s_ref);
        doc["loads"].push_back(jd);
    }
    doc["generators"] = json::array();
    for (const auto& g : net.generators) {
        json jg;
        jg["id"] = g.id;
        jg["bus"] = g.bus;
        jg["conductors"] = g.conductors;
        jg["in_objective"] = g.in_objective;
        doc["generators"].push_back(jg);
    }
    if (!net.base.empty()) doc["base"] = net.base;
    return doc.dump(2);
}

ValidationReport validate_network(const Network& net) {
    ValidationReport rep;
    auto add = [&](const std::string& code, const std::string& subject, const std::string& msg) {
        rep.findings.push_back({code, subject, msg});
    };

    int n_slack = 0;
    for (const auto& b : net.buses) {
        if (b.n_conductors <= 0) add("bad-conductor-count", b.id, "n_conductors must be positive");
        if (b.u_min.size() != b.n_conductors || b.u_max.size() != b.n_conductors)
            add("bound-length", b.id, "u_min/u_max length must equal n_conductors");
        for (Eigen::Index c = 0; c < std::min(b.u_min.size(), b.u_max.size()); ++c) {
            if (b.u_min(c) < 0.0)
                add("bound-sign", b.id, "u_min must be nonnegative");
            if (b.u_min(c) > b.u_max(c))
                add("bound-ordering", b.id,
                    "u_min exceeds u_max on conductor " + std::to_string(c));
        }
        if (b.is_slack()) {
            ++n_slack;
            if (b.fixed_voltage->size() != b.n_conductors)
                add("fixed-voltage-length", b.id, "fixed_voltage length must equal n_conductors");
        }
    }
    if (n_slack != 1)
        add("slack-count", "network",
            "expected exactly one fixed-voltage bus, found " + std::to_string(n_slack));

    for (const auto& br : net.branches) {
        const Bus* from = nullptr;
        const Bus* to = nullptr;
        for (const auto& b : net.buses) {
            if (b.id == br.from_bus) from = &b;
            if (b.id == br.to_bus) to = &b;
        }
        if (!from || !to) {
            add("dangling-branch", br.id, "branch endpoint references unknown bus");
            continue;
        }
        if (from == to) add("self-loop", br.id, "branch endpoints must be distinct");
        if (from->n_conductors != to->n_conductors)
            add("conductor-mismatch", br.id, "terminal buses disagree on conductor count");
        const Eigen::Index nc = from->n_conductors;
        if (br.R.rows() != nc || br.R.cols() != nc || br.X.rows() != nc || br.X.cols() != nc) {
            add("impedance-shape", br.id, "R and X must be n_conductors square");
            continue;
        }
        if (!is_symmetric(br.R.cast<cx>(), 1e-9)) add("asymmetric-R", br.id, "R is not symmetric");
        if (!is_symmetric(br.X.cast<cx>(), 1e-9)) add("asymmetric-X", br.id, "X is not symmetric");
        if (!is_positive_definite(br.R.cast<cx>())) add("non-pd-R", br.id, "R is not positive definite");
        if (!is_positive_definite(br.X.cast<cx>())) add("non-pd-X", br.id, "X is not positive definite");
        Eigen::FullPivLU<CMat> lu(br.Z());
        if (!lu.isInvertible()) {
            add("singular-Z", br.id, "Z = R + jX is not invertible");
        } else {
            CMat residual = br.Z() * lu.inverse() - CMat::Identity(nc, nc);
            if (residual.cwiseAbs().maxCoeff() >= 1e-12)
                add("bad-inverse", br.id, "Z*Y deviates from identity beyond 1e-12");
        }
    }

    for (const auto& d : net.loads) {
        const Bus* b = nullptr;
        for (const auto& bb : net.buses)
            if (bb.id == d.bus) b = &bb;
        if (!b) {
            add("dangling-load", d.id, "load references unknown bus");
            continue;
        }
        if (d.term_in == d.term_out) add("load-terminals", d.id, "terminals must be distinct");
        for (int t : {d.term_in, d.term_out})
            if (t < 0 || t >= b->n_conductors)
                add("load-terminal-range", d.id, "terminal index out of range");
    }
    for (const auto& g : net.generators) {
        const Bus* b = nullptr;
        for (const auto& bb : net.buses)
            if (bb.id == g.bus) b = &bb;
        if (!b) {
            add("dangling-generator", g.id, "generator references unknown bus");
            continue;
        }
        std::set<int> seen;
        for (int c : g.conductors) {
            if (c < 0 || c >= b->n_conductors)
                add("generator-conductor-range", g.id, "conductor index out of range");
            if (!seen.insert(c).second)
                add("generator-conductor-dup", g.id, "conductor listed twice");
        }
    }
    return rep;
}

} // namespace mcopf
