#pragma once

#include <stdexcept>
#include <string>

namespace ovlm {

// Shape/dimension contract violations (bad matmul dims, kernel larger than input, ...).
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration values (ratio not dividing the grid, eps <= 0, beta <= 0, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint file problems: bad magic, truncation, missing/mismatched tensors.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied input data (malformed image, empty dataset, ...).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse caught at runtime (non-scalar loss, empty response, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ovlm
