#pragma once

#include <stdexcept>
#include <string>

namespace asvlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite integration result. Episode loops treat it as terminal.
struct SimulationFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// API misuse: stepping a finished episode, backward before forward, etc.
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Training diverged (NaN/inf loss).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace asvlab
