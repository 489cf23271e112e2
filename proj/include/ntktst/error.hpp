#pragma once

#include <stdexcept>
#include <string>

namespace ntktst {

// Gradient flow diverged or a solver failed; CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Requested detection level cannot be reached; carries the best attainable level.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, double max_attainable)
        : std::runtime_error(what), max_attainable_(max_attainable) {}
    double max_attainable() const noexcept { return max_attainable_; }

private:
    double max_attainable_;
};

// Reading a file written by an incompatible version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kFormatVersion = 1;

}  // namespace ntktst
