#pragma once

#include <stdexcept>
#include <string>

namespace mcopf {

// Input-layer failures: bad JSON, schema violations, dangling references.
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct reference_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical-layer failures.
struct singular_block_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct no_solution_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct singular_load_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated API preconditions (caller bugs, unsupported combinations).
struct contract_error : std::logic_error {
    using std::logic_error::logic_error;
};
struct model_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct unsupported_expression_error : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace mcopf
