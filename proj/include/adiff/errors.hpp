#pragma once

#include <stdexcept>
#include <string>

namespace adiff {

/// Failure categories. The CLI maps Domain to exit code 2 and Numerical to 3.
enum class ErrorCategory { Domain, Numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), category_(category), kind_(std::move(kind)) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& kind() const noexcept { return kind_; }

protected:
    struct Verbatim {};
    Error(Verbatim, ErrorCategory category, std::string kind, const std::string& message)
        : std::runtime_error(message), category_(category), kind_(std::move(kind)) {}

private:
    ErrorCategory category_;
    std::string kind_;
};

// Domain errors: the caller asked for something outside the contract.

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorCategory::Domain, "DomainError", what) {}
};

class UnsupportedPerturbation : public Error {
public:
    explicit UnsupportedPerturbation(const std::string& what)
        : Error(ErrorCategory::Domain, "UnsupportedPerturbation", what) {}
};

// Numerical failures.

class NumericalError : public Error {
public:
    NumericalError(std::string kind, const std::string& what)
        : Error(ErrorCategory::Numerical, std::move(kind), what) {}
};

class NonFinite : public NumericalError {
public:
    explicit NonFinite(const std::string& what) : NumericalError("NonFinite", what) {}
};

class NonConvergence : public NumericalError {
public:
    explicit NonConvergence(const std::string& what) : NumericalError("NonConvergence", what) {}
};

class ShootingFailure : public NumericalError {
public:
    explicit ShootingFailure(const std::string& what) : NumericalError("ShootingFailure", what) {}
};

class NoCriticalPoint : public NumericalError {
public:
    explicit NoCriticalPoint(const std::string& what) : NumericalError("NoCriticalPoint", what) {}
};

class ChainBroken : public NumericalError {
public:
    ChainBroken(int link, const std::string& what)
        : NumericalError("ChainBroken", "link " + std::to_string(link) + ": " + what), link_(link) {}
    int link() const noexcept { return link_; }

private:
    int link_;
};

class MinimizationFailure : public NumericalError {
public:
    MinimizationFailure(const std::string& what, double best_value, double best_gradient)
        : NumericalError("MinimizationFailure", what), best_value_(best_value), best_gradient_(best_gradient) {}
    double best_value() const noexcept { return best_value_; }
    double best_gradient() const noexcept { return best_gradient_; }

private:
    double best_value_;
    double best_gradient_;
};

class EscapedBox : public NumericalError {
public:
    explicit EscapedBox(const std::string& what) : NumericalError("EscapedBox", what) {}
};

class JunctionDefect : public NumericalError {
public:
    explicit JunctionDefect(const std::string& what) : NumericalError("JunctionDefect", what) {}
};

/// Raised by the pipeline driver: wraps a stage failure with the stage name.
class StageError : public Error {
public:
    StageError(const std::string& stage, const Error& inner)
        : Error(Verbatim{}, inner.category(), inner.kind(), "stage '" + stage + "': " + inner.what()),
          stage_(stage) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace adiff
