#pragma once

#include "rsmerton/random.hpp"

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace rsmerton {

/// Monte-Carlo estimate with its standard error and provenance.
struct MCReport {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::size_t invalid_paths = 0;
    RngSpec rng;
    std::optional<double> target;

    /// (estimate - target) / std_error; 0 when both the gap and the error vanish.
    std::optional<double> z_score() const {
        if (!target) return std::nullopt;
        const double gap = estimate - *target;
        if (std_error == 0.0) return gap == 0.0 ? 0.0 : std::copysign(INFINITY, gap);
        return gap / std_error;
    }

    bool within(double n_sigma) const {
        auto z = z_score();
        return z && std::abs(*z) <= n_sigma;
    }
};

/// Welford accumulator; standard error = sample std / sqrt(n).
class RunningStats {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_error() const noexcept {
        return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

    MCReport report(const RngSpec& rng, std::optional<double> target = std::nullopt) const {
        return MCReport{mean(), std_error(), n_, 0, rng, target};
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline nlohmann::json to_json(const MCReport& r) {
    nlohmann::json j{{"estimate", r.estimate},
                     {"std_error", r.std_error},
                     {"n_paths", r.n_paths},
                     {"invalid_paths", r.invalid_paths},
                     {"rng", {{"algorithm", r.rng.algorithm}, {"seed", r.rng.seed}, {"stream", r.rng.stream}}}};
    if (r.target) {
        j["target"] = *r.target;
        const double z = *r.z_score();
        j["z_score"] = std::isfinite(z) ? nlohmann::json(z) : nlohmann::json(nullptr);
    }
    return j;
}

} // namespace rsmerton
