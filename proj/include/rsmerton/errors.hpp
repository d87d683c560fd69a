#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rsmerton {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation
/// (e.g. utility of zero consumption with gamma <= 0, g <= 0 during a solve).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative procedure hit its refinement cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A market specification or experiment config failed validation.
/// Carries every violation, not just the first.
class SpecError : public Error {
public:
    explicit SpecError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

} // namespace rsmerton
