#pragma once

#include <stdexcept>
#include <string>

namespace workbench {

/// Base class for every error raised by the workbench libraries.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input that violates a documented invariant (bad file, out-of-range value).
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace workbench
