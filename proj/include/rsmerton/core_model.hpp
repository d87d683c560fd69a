#pragma once

// Problem data for a CRRA investor in a regime-switching market: per-regime
// coefficients, the regime generator, regime-dependent discount rates and the
// utility primitives shared by every other module.

#include "rsmerton/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsmerton {

/// |gamma| below this selects the logarithmic branch.
inline constexpr double kLogGammaThreshold = 1e-10;

/// Row sums of a generator must vanish to this absolute tolerance.
inline constexpr double kGeneratorRowTolerance = 1e-12;

namespace detail {
inline std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}
} // namespace detail

/// Transition-rate matrix of a finite continuous-time Markov chain.
struct RegimeGenerator {
    std::vector<std::vector<double>> rates;

    std::size_t size() const noexcept { return rates.size(); }
    double operator()(std::size_t i, std::size_t j) const { return rates[i][j]; }

    /// Total rate of leaving state i.
    double exit_rate(std::size_t i) const { return -rates[i][i]; }

    /// (Lambda G)(i) = sum_j lambda_ij G(j).
    double apply_row(std::size_t i, const std::vector<double>& values) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < rates[i].size(); ++j) acc += rates[i][j] * values[j];
        return acc;
    }

    static RegimeGenerator zero(std::size_t n) {
        return RegimeGenerator{std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0))};
    }
};

inline std::vector<std::string> generator_violations(const RegimeGenerator& gen) {
    std::vector<std::string> out;
    const std::size_t n = gen.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (gen.rates[i].size() != n) {
            out.push_back("generator row " + std::to_string(i) + " has " +
                          std::to_string(gen.rates[i].size()) + " entries, expected " +
                          std::to_string(n));
            continue;
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = gen.rates[i][j];
            if (!std::isfinite(v)) {
                out.push_back("generator[" + std::to_string(i) + "][" + std::to_string(j) +
                              "] is not finite");
                continue;
            }
            if (i != j && v < 0.0) {
                out.push_back("generator[" + std::to_string(i) + "][" + std::to_string(j) +
                              "] is a negative off-diagonal rate (" + detail::fmt_num(v) + ")");
            }
            sum += v;
        }
        if (std::abs(sum) > kGeneratorRowTolerance) {
            out.push_back("row " + std::to_string(i) + " sums to " + detail::fmt_num(sum));
        }
    }
    return out;
}

/// CRRA preferences: U(c) = c^gamma / gamma, or log c when is_log.
struct Preferences {
    double gamma = 0.0;
    bool is_log = true;

    static Preferences from_gamma(double gamma) {
        return Preferences{gamma, std::abs(gamma) < kLogGammaThreshold};
    }
};

/// Piecewise-constant override of (r, alpha, sigma) starting at t_start.
/// A piece is in force on [t_start, next piece's t_start).
struct CoefficientPiece {
    double t_start = 0.0;
    std::vector<double> r;
    std::vector<double> alpha;
    std::vector<double> sigma;
};

struct MarketSpec {
    std::size_t states = 0;
    std::vector<double> r;      // riskless rate per state, 1/year
    std::vector<double> alpha;  // stock return per state, 1/year
    std::vector<double> sigma;  // volatility per state, 1/sqrt(year)
    RegimeGenerator generator;
    std::vector<double> rho;    // discount rate per state, 1/year
    double gamma = 0.0;
    double horizon = 1.0;
    std::vector<CoefficientPiece> schedule;  // optional, sorted by t_start

    Preferences preferences() const { return Preferences::from_gamma(gamma); }

    double rate(double t, std::size_t i) const { return piece_or(t, &CoefficientPiece::r, r)[i]; }
    double drift(double t, std::size_t i) const {
        return piece_or(t, &CoefficientPiece::alpha, alpha)[i];
    }
    double vol(double t, std::size_t i) const {
        return piece_or(t, &CoefficientPiece::sigma, sigma)[i];
    }
    /// mu(t,i) = alpha(t,i) - r(t,i).
    double excess(double t, std::size_t i) const { return drift(t, i) - rate(t, i); }

    /// Interior times where the coefficients may jump.
    std::vector<double> breakpoints() const {
        std::vector<double> out;
        for (const auto& p : schedule) {
            if (p.t_start > 0.0 && p.t_start < horizon) out.push_back(p.t_start);
        }
        return out;
    }

    bool has_schedule() const noexcept { return !schedule.empty(); }

    /// True when every coefficient and discount rate is the same in all states.
    bool state_independent() const {
        auto flat = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
        };
        if (!flat(r) || !flat(alpha) || !flat(sigma) || !flat(rho)) return false;
        for (const auto& p : schedule) {
            if (!flat(p.r) || !flat(p.alpha) || !flat(p.sigma)) return false;
        }
        return true;
    }

private:
    const std::vector<double>& piece_or(double t, std::vector<double> CoefficientPiece::*field,
                                        const std::vector<double>& base) const {
        const std::vector<double>* cur = &base;
        for (const auto& p : schedule) {
            if (p.t_start <= t) cur = &(p.*field);
            else break;
        }
        return *cur;
    }
};

/// Every violated invariant of `spec`, empty when valid.
inline std::vector<std::string> spec_violations(const MarketSpec& spec) {
    std::vector<std::string> out;
    const std::size_t n = spec.states;
    if (n < 2) out.push_back("states must be >= 2 (got " + std::to_string(n) + ")");

    auto check_len = [&](const std::vector<double>& v, const char* name, const std::string& where) {
        if (v.size() != n) {
            out.push_back(where + name + " has " + std::to_string(v.size()) +
                          " entries, expected " + std::to_string(n));
            return false;
        }
        return true;
    };
    auto check_finite = [&](const std::vector<double>& v, const char* name, const std::string& where) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i]))
                out.push_back(where + name + "[" + std::to_string(i) + "] is not finite");
        }
    };
    auto check_positive = [&](const std::vector<double>& v, const char* name, const std::string& where) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0))
                out.push_back(where + name + "[" + std::to_string(i) + "] must be > 0 (got " +
                              detail::fmt_num(v[i]) + ")");
        }
    };

    if (check_len(spec.r, "r", "")) check_finite(spec.r, "r", "");
    if (check_len(spec.alpha, "alpha", "")) check_finite(spec.alpha, "alpha", "");
    if (check_len(spec.sigma, "sigma", "")) check_positive(spec.sigma, "sigma", "");
    if (check_len(spec.rho, "rho", "")) check_positive(spec.rho, "rho", "");

    if (spec.generator.size() != n) {
        out.push_back("generator has " + std::to_string(spec.generator.size()) +
                      " rows, expected " + std::to_string(n));
    } else {
        auto g = generator_violations(spec.generator);
        out.insert(out.end(), g.begin(), g.end());
    }

    if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon))
        out.push_back("horizon must be > 0 (got " + detail::fmt_num(spec.horizon) + ")");
    if (!(spec.gamma < 1.0) || !std::isfinite(spec.gamma))
        out.push_back("gamma must be < 1 (got " + detail::fmt_num(spec.gamma) + ")");

    double prev = -1.0;
    for (std::size_t k = 0; k < spec.schedule.size(); ++k) {
        const auto& p = spec.schedule[k];
        const std::string where = "schedule[" + std::to_string(k) + "].";
        if (!(p.t_start >= 0.0) || !(p.t_start < spec.horizon) || !(p.t_start > prev)) {
            out.push_back(where + "t_start must be increasing within [0, horizon)");
        }
        prev = p.t_start;
        if (check_len(p.r, "r", where)) check_finite(p.r, "r", where);
        if (check_len(p.alpha, "alpha", where)) check_finite(p.alpha, "alpha", where);
        if (check_len(p.sigma, "sigma", where)) check_positive(p.sigma, "sigma", where);
    }
    return out;
}

/// Returns `spec` unchanged when valid; throws SpecError listing every violation otherwise.
inline const MarketSpec& validate_spec(const MarketSpec& spec) {
    auto v = spec_violations(spec);
    if (!v.empty()) throw SpecError(std::move(v));
    return spec;
}

inline double utility(double c, const Preferences& prefs) {
    if (!(c >= 0.0)) throw DomainError("utility: consumption must be >= 0, got " + detail::fmt_num(c));
    if (prefs.is_log) {
        if (c == 0.0) throw DomainError("utility: log utility undefined at 0");
        return std::log(c);
    }
    if (c == 0.0 && prefs.gamma < 0.0)
        throw DomainError("utility: power utility with gamma < 0 diverges at 0");
    return std::pow(c, prefs.gamma) / prefs.gamma;
}

inline double marginal_utility(double c, const Preferences& prefs) {
    if (!(c > 0.0)) throw DomainError("marginal_utility: consumption must be > 0");
    return prefs.is_log ? 1.0 / c : std::pow(c, prefs.gamma - 1.0);
}

/// I(y) = (U')^{-1}(y).
inline double inverse_marginal_utility(double y, const Preferences& prefs) {
    if (!(y > 0.0))
        throw DomainError("inverse_marginal_utility: y must be > 0, got " + detail::fmt_num(y));
    return prefs.is_log ? 1.0 / y : std::pow(y, 1.0 / (prefs.gamma - 1.0));
}

inline double excess_return(const MarketSpec& spec, std::size_t i, double t = 0.0) {
    if (i >= spec.states || i >= spec.r.size() || i >= spec.alpha.size())
        throw std::out_of_range("excess_return: state " + std::to_string(i) + " out of range");
    return spec.excess(t, i);
}

/// The published two-regime experiment: mu = 0.15, sigma = 0.25, r = 0.05 in
/// both states, rho = (0.9, 0.3), generator [[-6.04, 6.04], [10.9, -10.9]].
inline MarketSpec fig1_market(double gamma, double horizon = 1.0) {
    MarketSpec s;
    s.states = 2;
    s.r = {0.05, 0.05};
    s.alpha = {0.20, 0.20};
    s.sigma = {0.25, 0.25};
    s.generator = RegimeGenerator{{{-6.04, 6.04}, {10.9, -10.9}}};
    s.rho = {0.9, 0.3};
    s.gamma = gamma;
    s.horizon = horizon;
    return s;
}

} // namespace rsmerton
