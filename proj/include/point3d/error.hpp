#pragma once

#include <stdexcept>
#include <string>

namespace point3d {

// Error categories map onto CLI exit codes: usage=1, config=2, data=3, numeric=4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated call contract: bad preconditions, misuse of a consumed tape, etc.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Shape mismatch between operands; message names both shapes.
struct DimensionError : ContractError {
    using ContractError::ContractError;
};

} // namespace point3d
