#pragma once

#include <stdexcept>
#include <string>

namespace crys {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError/DimensionError -> 3, DataError/DomainError -> 4, NumericalError -> 5.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint file errors, all data-class.
struct FormatError : DataError {
    explicit FormatError(const std::string& msg) : DataError(msg) {}
};

struct VersionError : DataError {
    explicit VersionError(const std::string& msg) : DataError(msg) {}
};

struct CorruptionError : DataError {
    explicit CorruptionError(const std::string& msg) : DataError(msg) {}
};

} // namespace crys
