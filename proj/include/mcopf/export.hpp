#pragma once

#include "mcopf/problem.hpp"

#include <string>

namespace mcopf {

enum class ExportFormat { qcqp_json, conic_text };

ExportFormat parse_export_format(std::string name); // "qcqp-json" / "conic-text"

// qcqp-json works for every kind and re-imports bit-identically; conic-text
// requires an affine (lifted) instance and throws contract_error otherwise.
std::string export_problem(const ProblemInstance& inst, ExportFormat format);

ProblemInstance import_qcqp_json(const std::string& text);

} // namespace mcopf
