#pragma once

#include <stdexcept>
#include <string>

namespace zocert {

// Configuration / precondition violations. CLI maps these to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values, divergence, failed numerical checks. CLI maps these to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace zocert
