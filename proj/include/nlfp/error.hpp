#pragma once

#include <stdexcept>
#include <string>

namespace nlfp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (r < 0, eps <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A documented precondition does not hold, e.g. a step size at or above lambda_0.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// An iterative solve stopped at max_iter without reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_residual, int iterations)
        : Error(what), last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    int iterations_;
};

/// Malformed scenario or spec file. `path()` is a JSON-pointer-like field path.
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace nlfp
