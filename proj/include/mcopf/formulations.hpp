#pragma once

#include "mcopf/network.hpp"
#include "mcopf/point.hpp"
#include "mcopf/problem.hpp"

namespace mcopf {

// Compiles the network into the real-valued problem for one formulation kind.
// Requires validate_network(net) to be clean (contract_error otherwise) and at
// least one objective generator (model_error otherwise).
ProblemInstance build_formulation(const Network& net, FormulationKind kind);

// Lifted recipe with explicit feature toggles. {false,false} and {true,true}
// are the two published variants; the mixed settings exist to probe each
// strengthening constraint on its own.
ProblemInstance build_swr(const Network& net, SwrFeatures features);

// Maps a physical point onto the instance's registry, lifting as needed.
RVec embed_point(const ProblemInstance& inst, const Network& net, const IvrPoint& p);
RVec embed_lifted(const ProblemInstance& inst, const Network& net, const LiftedPoint& p);

// Voltage-only embedding: branch flows follow from the admittances and each
// bus's device absorbs its net inflow, so the bus balance holds by
// construction. Supports svr1 and every lifted variant except the one that
// imposes matrix balance and row sums together (their completion can clash).
RVec embed_from_voltages(const ProblemInstance& inst, const Network& net,
                         const std::map<std::string, CVec>& u_by_bus);

} // namespace mcopf
