#pragma once
#include <stdexcept>
#include <string>

namespace nsfbm {

// Bad configuration or parameters (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or insufficient input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure; step is the pipeline step index when known, else 0 (exit code 4).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, int step = 0)
        : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

}  // namespace nsfbm
