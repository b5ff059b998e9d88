#pragma once

#include <stdexcept>
#include <string>

namespace dcin {

// Shape disagreement between tensors in a numeric op.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// An operation was called outside its contract (empty input, non-scalar loss, ...).
struct ContractViolation : std::runtime_error {
    explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Categorical index outside the table it addresses.
struct IndexLookupError : std::runtime_error {
    explicit IndexLookupError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data that fails a structural invariant (session shape, file schema, config).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// File parse failure; carries the offending line where known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Interest cache built under a different checkpoint than the one scoring with it.
struct StaleCacheError : std::runtime_error {
    explicit StaleCacheError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged; carries epoch/batch diagnostics in the message.
struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dcin
