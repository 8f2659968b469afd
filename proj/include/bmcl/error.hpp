#pragma once

#include <stdexcept>
#include <string>

namespace bmcl {

// Error taxonomy shared by the library and the CLI. The CLI maps these onto
// process exit codes: usage/config problems -> 1, data and contract
// violations -> 2, numeric failures -> 3.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File contents disagree with the schema (header mismatch, wrong feature set).
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A cell or byte stream could not be parsed at all.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parsed fine but the value is outside its declared domain.
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A documented precondition of an operation was violated by the caller.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Persisted artifact is truncated or fails its digest check.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A batch cannot produce a well-defined loss (e.g. single-class batch under
// supervised contrastive, empty denominator under literal masking). Training
// loops catch this, skip the batch and log a warning.
struct DegenerateBatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Loss or gradient became non-finite.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 1;
    if (dynamic_cast<const NumericError*>(&e) != nullptr) return 3;
    if (dynamic_cast<const SchemaError*>(&e) != nullptr ||
        dynamic_cast<const ParseError*>(&e) != nullptr ||
        dynamic_cast<const DomainError*>(&e) != nullptr ||
        dynamic_cast<const ContractError*>(&e) != nullptr ||
        dynamic_cast<const IntegrityError*>(&e) != nullptr ||
        dynamic_cast<const DegenerateBatchError*>(&e) != nullptr) {
        return 2;
    }
    return 2;
}

}  // namespace bmcl
