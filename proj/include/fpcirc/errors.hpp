#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fpcirc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (bad JSON, unknown key, violated invariant).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Two fields (or a field and a weight vector) live on different grids.
class GridMismatch : public Error {
public:
    using Error::Error;
};

class EigenSolverError : public Error {
public:
    EigenSolverError(const std::string& what, std::vector<double> residuals = {})
        : Error(what), residuals_(std::move(residuals)) {}

    const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
    std::vector<double> residuals_;
};

class OptimizerError : public Error {
public:
    using Error::Error;
};

class LinearSolverError : public Error {
public:
    using Error::Error;
};

/// Reduced state became non-finite during a rollout.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, int step) : Error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

}  // namespace fpcirc
