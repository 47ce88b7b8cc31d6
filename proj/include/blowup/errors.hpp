#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace blowup {

/// Argument outside the mathematical domain of a formula (e.g. log s with s <= 1).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid configuration or numerical knob; maps to CLI exit status 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Base for failures of a numerical procedure; maps to CLI exit status 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class QuadratureError : public NumericalError {
public:
    QuadratureError(const std::string& what, double achieved_error)
        : NumericalError(what), achieved_error_(achieved_error) {}
    double achieved_error() const noexcept { return achieved_error_; }

private:
    double achieved_error_;
};

/// Adaptive step size collapsed before the stop condition was met.
class IntegratorStall : public NumericalError {
public:
    IntegratorStall(const std::string& what, double t, double v, double v_prime)
        : NumericalError(what), t(t), v(v), v_prime(v_prime) {}
    double t, v, v_prime;
};

class InsufficientData : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Picard iteration stopped contracting.
class ContractionFailure : public NumericalError {
public:
    ContractionFailure(const std::string& what, std::vector<double> ratios)
        : NumericalError(what), ratios(std::move(ratios)) {}
    std::vector<double> ratios;
};

}  // namespace blowup
