#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Selects between the OpenMP kernels and their serial reference versions.
/// Both produce bit-identical results; the serial path exists for testing
/// and benchmarking.
enum class Exec { serial, parallel };

/// Caps OpenMP worker count for subsequent parallel kernels (0 = runtime default).
void set_thread_limit(int threads);

// Error hierarchy. Every failure the library reports derives from Error so the
// CLI can map categories to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Numerical preconditions (CFL, divergence) get their own exit status.
class NumericalError : public Error {
public:
    using Error::Error;
};

class CflError : public NumericalError {
public:
    CflError(const std::string& what, double required_dt, int required_steps)
        : NumericalError(what), required_dt_(required_dt), required_steps_(required_steps) {}
    double required_dt() const { return required_dt_; }
    int required_steps() const { return required_steps_; }

private:
    double required_dt_;
    int required_steps_;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, std::size_t path, std::size_t step)
        : NumericalError(what), path_(path), step_(step) {}
    std::size_t path() const { return path_; }
    std::size_t step() const { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rbsde
