#pragma once

#include <stdexcept>
#include <string>

namespace kt {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes (matmul, elementwise, concat, ...).
struct shape_error : error {
    using error::error;
};

// Bad user-facing configuration: unknown activation name, k > student
// count, unknown modality, malformed column map.
struct config_error : error {
    using error::error;
};

// Malformed input data; message carries the line number.
struct parse_error : error {
    using error::error;
};

// API misuse, e.g. backward() called twice on the same graph.
struct state_error : error {
    using error::error;
};

// Metric undefined for the given trace (single-class labels, ...).
struct metric_error : error {
    using error::error;
};

// Structurally invalid architecture or fusion plan.
struct validation_error : error {
    using error::error;
};

// Nonfinite values where finite ones are required (optimizer input).
struct numeric_error : error {
    using error::error;
};

} // namespace kt
