#pragma once

#include <stdexcept>
#include <string>

namespace specpoint {

/// Caller violated an operation's contract: bad shapes, invalid options,
/// inconsistent architecture settings.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A file or dataset could not be parsed or is internally inconsistent.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An iterative numerical procedure failed to converge.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace specpoint
