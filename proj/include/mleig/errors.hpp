#pragma once

#include <stdexcept>
#include <string>

namespace mleig {

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite forward map or derivative evaluation.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every inner weight of one outer sample was zero in linear space.
struct UnderflowError : NumericalError {
    UnderflowError(const std::string& what, long long outer)
        : NumericalError(what), outer_index(outer) {}
    long long outer_index;
};

struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mleig
