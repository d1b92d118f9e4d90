#pragma once
// Error taxonomy. Each class maps to one CLI exit code and one
// machine-parseable error tag, see tools/dalm_main.cpp.

#include <stdexcept>
#include <string>

namespace dalm {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string & msg) : std::runtime_error(msg) {}
};

// Bad schedule triples, indivisible lengths and the like.
struct ScheduleError : ConfigError {
    explicit ScheduleError(const std::string & msg) : ConfigError(msg) {}
};

struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string & msg) : std::runtime_error(msg) {}
};

// Corrupt or truncated files, checksum mismatches.
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string & msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string & msg) : std::runtime_error(msg) {}
};

// API misuse: calling an operation in a state its contract forbids.
struct ContractError : std::logic_error {
    explicit ContractError(const std::string & msg) : std::logic_error(msg) {}
};

} // namespace dalm
