#pragma once

#include <stdexcept>
#include <string>

namespace dbloss {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or axis mismatch between tensors.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// A computation produced or would produce a non-finite value.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

/// An API precondition was violated by the caller.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

/// A run configuration is inconsistent or incomplete.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// A data file could not be read or parsed.
class IngestionError : public Error {
public:
    explicit IngestionError(const std::string& msg) : Error(msg) {}
};

}  // namespace dbloss
