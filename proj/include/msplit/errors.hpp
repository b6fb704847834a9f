#pragma once

#include <stdexcept>

namespace msplit {

/// Shapes do not conform, or an argument is outside its domain.
struct DimensionError : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

struct InvalidArgument : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values, singular systems, diverging iterations.
struct NumericError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct ConvergenceError : NumericError
{
    using NumericError::NumericError;
};

} // namespace msplit
