#include "mcopf/point.hpp"

#include "mcopf/errors.hpp"

#include <nlohmann/json.hpp>

namespace mcopf {

using json = nlohmann::json;

cx IvrPoint::dispatch(const Network& net, const std::string& gen_id) const {
    const auto& g = *std::find_if(net.generators.begin(), net.generators.end(),
                                  [&](const Generator& gg) { return gg.id == gen_id; });
    const CVec& u = U.at(g.bus);
    const CVec& ig = I_gen.at(g.id);
    return (u.array() * ig.array().conjugate()).sum();
}

LiftedPoint lift_point(const IvrPoint& p, const Network& net) {
    LiftedPoint out;
    for (const auto& b : net.buses) {
        auto it = p.U.find(b.id);
        if (it == p.U.end() || it->second.size() != b.n_conductors)
            throw contract_error("lift_point: missing or misshaped voltage at bus " + b.id);
        out.W[b.id] = it->second * it->second.adjoint();
    }
    for (const auto& br : net.branches) {
        auto it = p.I_line.find(br.id);
        if (it == p.I_line.end())
            throw contract_error("lift_point: missing current on branch " + br.id);
        const CVec& i = it->second;
        const CVec& uf = p.U.at(br.from_bus);
        const CVec& ut = p.U.at(br.to_bus);
        if (i.size() != uf.size())
            throw contract_error("lift_point: current length mismatch on branch " + br.id);
        out.L[br.id] = i * i.adjoint();
        out.Sbar_ij[br.id] = uf * i.adjoint();
        out.Sbar_ji[br.id] = ut * (-i).adjoint();
    }
    for (const auto& d : net.loads) {
        auto it = p.I_load.find(d.id);
        if (it == p.I_load.end())
            throw contract_error("lift_point: missing current on load " + d.id);
        const CVec& u = p.U.at(d.bus);
        out.Sbar_d[d.id] = u * it->second.adjoint();
        out.S_d[d.id] = out.Sbar_d[d.id].diagonal();
    }
    for (const auto& g : net.generators) {
        auto it = p.I_gen.find(g.id);
        if (it == p.I_gen.end())
            throw contract_error("lift_point: missing current on generator " + g.id);
        const CVec& u = p.U.at(g.bus);
        out.Sbar_g[g.id] = u * it->second.adjoint();
        out.S_g[g.id] = out.Sbar_g[g.id].diagonal();
        out.S_disp[g.id] = out.S_g[g.id].sum();
    }
    return out;
}

namespace {

CVec decode_cvec(const json& v, const std::string& where) {
    if (!v.is_array()) throw schema_error("expected array of [re, im] pairs in " + where);
    CVec out(static_cast<Eigen::Index>(v.size()));
    for (size_t k = 0; k < v.size(); ++k) {
        const json& e = v[k];
        if (!e.is_array() || e.size() != 2)
            throw schema_error("expected [re, im] pair in " + where);
        out(static_cast<Eigen::Index>(k)) = cx{e[0].get<double>(), e[1].get<double>()};
    }
    return out;
}

json encode_cvec(const CVec& v) {
    json out = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k)
        out.push_back(json::array({v(k).real(), v(k).imag()}));
    return out;
}

} // namespace

IvrPoint parse_ivr_point(const std::string& json_text, const Network& net) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw parse_error(e.what());
    }
    IvrPoint p;
    auto read_section = [&](const char* key, std::map<std::string, CVec>& dst) {
        if (!doc.contains(key)) return;
        for (const auto& [id, v] : doc[key].items())
            dst[id] = decode_cvec(v, std::string(key) + "." + id);
    };
    read_section("U", p.U);
    read_section("I_line", p.I_line);
    read_section("I_load", p.I_load);
    read_section("I_gen", p.I_gen);
    for (const auto& [id, _] : p.U) net.bus_index(id); // reference check
    return p;
}

std::string serialize_ivr_point(const IvrPoint& p) {
    json doc;
    for (const auto& [id, v] : p.U) doc["U"][id] = encode_cvec(v);
    for (const auto& [id, v] : p.I_line) doc["I_line"][id] = encode_cvec(v);
    for (const auto& [id, v] : p.I_load) doc["I_load"][id] = encode_cvec(v);
    for (const auto& [id, v] : p.I_gen) doc["I_gen"][id] = encode_cvec(v);
    return doc.dump(2);
}

} // namespace mcopf
