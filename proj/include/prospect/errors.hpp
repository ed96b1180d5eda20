// Error taxonomy shared by the library and the CLI. Each class maps to a
// distinct process exit code so batch callers can tell configuration
// mistakes from bad data, solver failures and I/O trouble.
#pragma once

#include <stdexcept>
#include <string>

namespace prospect {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration (bad weights, missing seed, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (parse errors, misaligned grids, ...).
class DataError : public Error {
public:
    using Error::Error;
};

// Iterative solver failed to converge or diverged.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int unexpected = 1;
inline constexpr int config = 2;
inline constexpr int data = 3;
inline constexpr int convergence = 4;
inline constexpr int io = 5;
} // namespace exit_code

} // namespace prospect
