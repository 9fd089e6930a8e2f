#pragma once

#include "mcopf/network.hpp"

#include <map>
#include <string>

namespace mcopf {

// Physical operating point of the circuit in rectangular coordinates. Branch
// currents are stored in the from-to direction; the reverse is its negation.
struct IvrPoint {
    std::map<std::string, CVec> U;      // bus id -> voltage per conductor
    std::map<std::string, CVec> I_line; // branch id -> current per conductor
    std::map<std::string, CVec> I_load; // load id
    std::map<std::string, CVec> I_gen;  // generator id

    cx dispatch(const Network& net, const std::string& gen_id) const;
};

// Matrix-valued lift of an IvrPoint.
struct LiftedPoint {
    std::map<std::string, CMat> W;       // bus id
    std::map<std::string, CMat> L;       // branch id
    std::map<std::string, CMat> Sbar_ij; // branch id, from-side flow
    std::map<std::string, CMat> Sbar_ji; // branch id, to-side flow
    std::map<std::string, CMat> Sbar_d;  // load id
    std::map<std::string, CMat> Sbar_g;  // generator id
    std::map<std::string, CVec> S_d;     // load id, diagonal power vector
    std::map<std::string, CVec> S_g;     // generator id
    std::map<std::string, cx> S_disp;    // generator id
};

// Outer-product lift; throws contract_error on dimension mismatch.
LiftedPoint lift_point(const IvrPoint& p, const Network& net);

// JSON round-trip for operating points, mirroring the network's complex
// encoding: {"U": {bus: [[re, im], ...]}, "I_line": {...}, ...}.
IvrPoint parse_ivr_point(const std::string& json_text, const Network& net);
std::string serialize_ivr_point(const IvrPoint& p);

} // namespace mcopf
