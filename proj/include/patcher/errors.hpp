#pragma once

#include <stdexcept>
#include <string>

namespace patcher {

// Error taxonomy. Every failure mode maps onto one of these so callers
// (and tests) can distinguish bad shapes from bad configs from bad data.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes disagree (matmul inner dims, elementwise mismatch, ...).
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid hyperparameters or run configuration.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Patch-grid geometry violations (divisibility, grid mismatch).
struct GeometryError : Error {
    explicit GeometryError(const std::string& msg) : Error(msg) {}
};

// Bad input data: unreadable files, non-binary masks, size mismatches.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// API contract violations (non-scalar loss, empty tape, ...).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

}  // namespace patcher
