#pragma once

#include <stdexcept>
#include <string>

namespace thz {

// Degenerate inputs to geometric computations: coincident points, zero distances.
class DegenerateGeometryError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Non-finite values surfaced from a numerical pipeline (loss, sampler, network).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or incompatible binary files (datasets, checkpoints).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Run-configuration validation; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace thz
