#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tsg {

// Error taxonomy. The CLI maps UsageError/ConfigError/DataError to exit
// code 1 and NumericError to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Forward-op output scanning for NaN/Inf. On by default; the hot training
// path may disable it and rely on the per-step loss check instead.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

}  // namespace tsg
