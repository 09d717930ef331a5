#pragma once

#include <stdexcept>
#include <string>

namespace oneirotax {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty input, bad size...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Input data or configuration failed validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An embedding provider failed or returned inconsistent data.
class ProviderError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage was invoked before the stage it depends on.
class DependencyError : public Error {
public:
    DependencyError(std::string stage, const std::string& what)
        : Error(what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace oneirotax
