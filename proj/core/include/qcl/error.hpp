#pragma once

#include <stdexcept>
#include <string>

namespace qcl {

// Raised when an iterative numerical method stops short of its target
// accuracy. `achieved_error` carries the best error estimate reached.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double achieved_error)
        : std::runtime_error(what), achieved_error_(achieved_error) {}

    double achieved_error() const noexcept { return achieved_error_; }

private:
    double achieved_error_;
};

class SingularityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Repeated roots of the characteristic quartic (confluent form unsupported).
class DegeneratePoleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Poles in the closed right half-plane, or an indefinite effective potential.
class InstabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qcl
