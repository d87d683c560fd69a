#pragma once

// Subgame-perfect investment-consumption policies for a CRRA investor with
// regime-dependent discounting.
//
// Power utility (gamma != 0): v(t,x,i) = g(t,i) x^gamma / gamma where
//   g_t + [gamma r + gamma mu^2 / (2 sigma^2 (1-gamma)) - rho_i] g_i
//       + sum_j lambda_ij g_j + (1-gamma) g_i^{gamma/(gamma-1)} = 0,  g(T,.) = 1.
// Log utility: v(t,x,i) = h(t,i) log x + l(t,i) where
//   h_t - rho_i h_i + sum_j lambda_ij h_j + 1 = 0,                     h(T,.) = 1
//   l_t + (r + mu^2/(2 sigma^2)) h_i - log h_i - rho_i l_i
//       + sum_j lambda_ij l_j - 1 = 0,                                 l(T,.) = 0.

#include "rsmerton/core_model.hpp"
#include "rsmerton/ctmc.hpp"
#include "rsmerton/mc_report.hpp"
#include "rsmerton/ode.hpp"
#include "rsmerton/random.hpp"

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

namespace rsmerton {

/// g below this during a solve is treated as a domain breach.
inline constexpr double kPositivityFloor = 1e-12;

/// Residual bound every equilibrium table must satisfy.
inline constexpr double kResidualBound = 1e-5;

struct EquilibriumSolution {
    MarketSpec spec;
    Preferences prefs;
    /// Power: S columns g(.,i). Log: 2S columns, h(.,0..S-1) then l(.,0..S-1).
    SolutionTable table;
    double residual = 0.0;
    SolveOptions options;

    bool is_log() const noexcept { return prefs.is_log; }
    std::size_t states() const noexcept { return spec.states; }
    double horizon() const noexcept { return spec.horizon; }

    double g(double t, std::size_t i) const { return table.value(t, i); }
    double h(double t, std::size_t i) const { return table.value(t, i); }
    double l(double t, std::size_t i) const { return table.value(t, spec.states + i); }

    /// C(t,i): consumption as a fraction of wealth, g^{1/(gamma-1)} or 1/h.
    double consumption_rate(double t, std::size_t i) const {
        const double v = table.value(t, i);
        return is_log() ? 1.0 / v : std::pow(v, 1.0 / (prefs.gamma - 1.0));
    }

    double consumption_rate_at(std::size_t k, std::size_t i) const {
        const double v = table.at(k, i);
        return is_log() ? 1.0 / v : std::pow(v, 1.0 / (prefs.gamma - 1.0));
    }
};

/// Per-state growth coefficient gamma r + gamma mu^2 / (2 sigma^2 (1-gamma)).
inline double power_growth(const MarketSpec& spec, double t, std::size_t i) {
    const double gamma = spec.gamma;
    const double mu = spec.excess(t, i);
    const double sig = spec.vol(t, i);
    return gamma * spec.rate(t, i) + mu * mu * gamma / (2.0 * sig * sig * (1.0 - gamma));
}

inline OdeSystem g_system(const MarketSpec& spec) {
    const std::size_t n = spec.states;
    const double gamma = spec.gamma;
    const double expo = gamma / (gamma - 1.0);
    OdeSystem sys;
    sys.dimension = n;
    sys.t_start = 0.0;
    sys.t_end = spec.horizon;
    sys.terminal_values.assign(n, 1.0);
    sys.floor.assign(n, kPositivityFloor);
    sys.rhs = [spec, n, gamma, expo](double t, std::span<const double> g, std::span<double> dg) {
        for (std::size_t i = 0; i < n; ++i) {
            double coupling = 0.0;
            for (std::size_t j = 0; j < n; ++j) coupling += spec.generator(i, j) * g[j];
            const double lin = (power_growth(spec, t, i) - spec.rho[i]) * g[i];
            dg[i] = -(lin + coupling + (1.0 - gamma) * std::pow(g[i], expo));
        }
    };
    return sys;
}

/// Joint (h, l) system; the l rows take h from the same state vector.
inline OdeSystem log_system(const MarketSpec& spec) {
    const std::size_t n = spec.states;
    OdeSystem sys;
    sys.dimension = 2 * n;
    sys.t_start = 0.0;
    sys.t_end = spec.horizon;
    sys.terminal_values.assign(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) sys.terminal_values[i] = 1.0;
    sys.rhs = [spec, n](double t, std::span<const double> y, std::span<double> dy) {
        for (std::size_t i = 0; i < n; ++i) {
            double ch = 0.0, cl = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                ch += spec.generator(i, j) * y[j];
                cl += spec.generator(i, j) * y[n + j];
            }
            const double h = y[i], l = y[n + i];
            const double mu = spec.excess(t, i), sig = spec.vol(t, i);
            dy[i] = -(-spec.rho[i] * h + ch + 1.0);
            dy[n + i] = -((spec.rate(t, i) + mu * mu / (2.0 * sig * sig)) * h - std::log(h) -
                          spec.rho[i] * l + cl - 1.0);
        }
    };
    return sys;
}

namespace detail {
inline EquilibriumSolution finish(const MarketSpec& spec, const OdeSystem& sys, const SolveOptions& opts) {
    EquilibriumSolution sol{spec, spec.preferences(), {}, 0.0, opts};
    const auto bps = spec.breakpoints();
    SolveOptions so = opts;
    for (;;) {
        sol.table = solve_terminal_ode_piecewise(sys, bps, so);
        sol.residual = residual_norm(sys, sol.table, bps);
        // the residual is limited by differencing on the output grid, so a
        // stiff system may need a finer grid than the integrator itself
        const std::size_t steps = sol.table.size() - 1;
        if (sol.residual <= kResidualBound || !so.refine || 2 * steps > so.max_steps) break;
        so.n_steps = 2 * steps;
    }
    if (!(sol.residual <= kResidualBound)) {
        throw ConvergenceError("equilibrium: residual " + std::to_string(sol.residual) +
                               " exceeds " + std::to_string(kResidualBound));
    }
    return sol;
}
} // namespace detail

/// Power-utility equilibrium. Throws DomainError on a positivity breach.
inline EquilibriumSolution solve_g(const MarketSpec& spec, const SolveOptions& opts = {}) {
    validate_spec(spec);
    if (spec.preferences().is_log) throw DomainError("solve_g: gamma ~ 0 selects the log branch; use solve_log");
    return detail::finish(spec, g_system(spec), opts);
}

inline EquilibriumSolution solve_log(const MarketSpec& spec, const SolveOptions& opts = {}) {
    validate_spec(spec);
    if (!spec.preferences().is_log) throw DomainError("solve_log: gamma must be 0 for the log branch");
    return detail::finish(spec, log_system(spec), opts);
}

/// Dispatches on the utility branch.
inline EquilibriumSolution solve_equilibrium(const MarketSpec& spec, const SolveOptions& opts = {}) {
    return spec.preferences().is_log ? solve_log(spec, opts) : solve_g(spec, opts);
}

/// C(t,i) on the solution grid; one column per state.
inline SolutionTable consumption_curve(const EquilibriumSolution& sol) {
    SolutionTable out;
    out.grid = sol.table.grid;
    out.values.assign(out.grid.size(), std::vector<double>(sol.states()));
    for (std::size_t k = 0; k < out.grid.size(); ++k)
        for (std::size_t i = 0; i < sol.states(); ++i) out.values[k][i] = sol.consumption_rate_at(k, i);
    return out;
}

struct Policy {
    double investment = 0.0;   // currency held in the stock
    double consumption = 0.0;  // currency per year
};

/// Feedback maps F1 (investment) and F2 (consumption), linear in wealth.
class PolicyField {
public:
    explicit PolicyField(std::shared_ptr<const EquilibriumSolution> sol) : sol_(std::move(sol)) {}
    explicit PolicyField(EquilibriumSolution sol)
        : sol_(std::make_shared<const EquilibriumSolution>(std::move(sol))) {}

    const EquilibriumSolution& solution() const { return *sol_; }
    std::shared_ptr<const EquilibriumSolution> shared() const { return sol_; }

    /// pi / x = mu / (sigma^2 (1 - gamma)); gamma = 0 on the log branch.
    double investment_fraction(double t, std::size_t i) const {
        const auto& s = sol_->spec;
        const double sig = s.vol(t, i);
        const double risk = sol_->is_log() ? 1.0 : 1.0 - s.gamma;
        return s.excess(t, i) / (sig * sig * risk);
    }

    double consumption_fraction(double t, std::size_t i) const { return sol_->consumption_rate(t, i); }

    Policy at(double t, double x, std::size_t i) const {
        return Policy{investment_fraction(t, i) * x, consumption_fraction(t, i) * x};
    }

private:
    std::shared_ptr<const EquilibriumSolution> sol_;
};

inline Policy policy_at(const PolicyField& field, double t, double x, std::size_t i) {
    const auto& sol = field.solution();
    if (!(t >= 0.0 && t <= sol.horizon())) throw DomainError("policy_at: t outside [0, T]");
    if (!(x >= 0.0)) throw DomainError("policy_at: wealth must be >= 0");
    if (i >= sol.states()) throw DomainError("policy_at: state out of range");
    return field.at(t, x, i);
}

/// g(t,i) x^gamma / gamma, or h(t,i) log x + l(t,i).
inline double value_at(const EquilibriumSolution& sol, double t, double x, std::size_t i) {
    if (!(x > 0.0)) throw DomainError("value_at: wealth must be > 0");
    if (i >= sol.states()) throw DomainError("value_at: state out of range");
    if (sol.is_log()) return sol.h(t, i) * std::log(x) + sol.l(t, i);
    return sol.g(t, i) * std::pow(x, sol.prefs.gamma) / sol.prefs.gamma;
}

// ---------------------------------------------------------------------------
// Constant-coefficient benchmark

struct MertonParams {
    double r = 0.0;
    double mu = 0.0;
    double sigma = 1.0;
    double rho = 0.0;
    double gamma = 0.0;
    double horizon = 1.0;
};

inline double merton_eta(const MertonParams& p) {
    return (p.rho - p.gamma * (p.mu * p.mu / (2.0 * p.sigma * p.sigma * (1.0 - p.gamma)) + p.r)) /
           (1.0 - p.gamma);
}

/// C(t) = eta / (1 + (eta - 1) e^{eta (t - T)}); 1 / (1 + T - t) when eta = 0.
inline double merton_closed_form(const MertonParams& p, double t) {
    const double eta = merton_eta(p);
    if (std::abs(eta) < 1e-12) return 1.0 / (1.0 + p.horizon - t);
    return eta / (1.0 + (eta - 1.0) * std::exp(eta * (t - p.horizon)));
}

/// Extracts the single effective regime. Throws DomainError unless every
/// coefficient and discount rate is state-independent and time-constant.
inline MertonParams merton_params(const MarketSpec& spec) {
    if (!spec.state_independent() || spec.has_schedule())
        throw DomainError("merton_params: spec is not a single effective regime");
    return MertonParams{spec.r[0], spec.alpha[0] - spec.r[0], spec.sigma[0], spec.rho[0], spec.gamma,
                        spec.horizon};
}

inline double merton_closed_form(const MarketSpec& spec, double t) {
    return merton_closed_form(merton_params(spec), t);
}

// ---------------------------------------------------------------------------
// Picard oracle
//
// g(t,i) = E[K(T)] + (1-gamma) E int_t^T K(v) g^{gamma/(gamma-1)}(v, J_v) dv,
// K(v) = exp int_t^v (power_growth - rho)(u, J_u) du, estimated by sampling
// chain paths and integrating along each with the trapezoidal rule on the
// candidate grid plus the path's jump times.

struct PicardOptions {
    std::size_t eval_points = 17;
};

struct PicardEstimate {
    SolutionTable values;      // evaluation grid x states
    SolutionTable std_errors;  // same shape
};

namespace detail {

/// Per-state cumulative tables on the candidate grid:
///   A_j(t)   = int_0^t kappa_j(u) du             (exact, piecewise linear)
///   Phi_j(t) = int_0^t e^{A_j(s)} phi_j(s) ds    (trapezoidal)
/// with phi_j = g(., j)^{gamma/(gamma-1)}.
class PicardIntegrand {
public:
    PicardIntegrand(const MarketSpec& spec, const SolutionTable& cand)
        : spec_(spec), cand_(cand), n_(spec.states), expo_(spec.gamma / (spec.gamma - 1.0)) {
        const std::size_t m = cand.size();
        a_.assign(n_, std::vector<double>(m, 0.0));
        phi_.assign(n_, std::vector<double>(m, 0.0));
        cum_.assign(n_, std::vector<double>(m, 0.0));
        for (std::size_t j = 0; j < n_; ++j) {
            for (std::size_t k = 0; k < m; ++k) phi_[j][k] = std::pow(cand.at(k, j), expo_);
            for (std::size_t k = 1; k < m; ++k) {
                const double t0 = cand.grid[k - 1], t1 = cand.grid[k];
                a_[j][k] = a_[j][k - 1] + kappa(0.5 * (t0 + t1), j) * (t1 - t0);
                cum_[j][k] = cum_[j][k - 1] + 0.5 * (t1 - t0) *
                                                  (std::exp(a_[j][k - 1]) * phi_[j][k - 1] +
                                                   std::exp(a_[j][k]) * phi_[j][k]);
            }
        }
    }

    double kappa(double t, std::size_t j) const { return power_growth(spec_, t, j) - spec_.rho[j]; }

    /// (A_j(t), Phi_j(t)) at arbitrary t, closing the partial cell by trapezoid.
    std::pair<double, double> cumulative(double t, std::size_t j) const {
        const auto [k, w] = cand_.locate(t);
        if (w == 0.0) return {a_[j][k], cum_[j][k]};
        const double t0 = cand_.grid[k];
        const double a = a_[j][k] + kappa(t0 + 0.5 * (t - t0), j) * (t - t0);
        const double phi = std::pow(cand_.at(k, j) + w * (cand_.at(k + 1, j) - cand_.at(k, j)), expo_);
        const double c = cum_[j][k] + 0.5 * (t - t0) * (std::exp(a_[j][k]) * phi_[j][k] + std::exp(a) * phi);
        return {a, c};
    }

private:
    const MarketSpec& spec_;
    const SolutionTable& cand_;
    std::size_t n_;
    double expo_;
    std::vector<std::vector<double>> a_, phi_, cum_;
};

} // namespace detail

/// Applies the integral operator to `g_candidate` at `eval_points` evenly
/// spaced times on [0, T] and every state. Stream (e, i) uses substream e*S+i.
inline PicardEstimate picard_apply(const MarketSpec& spec, const SolutionTable& g_candidate,
                                   std::size_t n_paths, const RngSpec& rng,
                                   const PicardOptions& opts = {}) {
    validate_spec(spec);
    if (spec.preferences().is_log) throw DomainError("picard_apply: power branch only");
    const std::size_t n = spec.states;
    if (g_candidate.dimension() != n) throw DomainError("picard_apply: candidate has wrong dimension");
    for (const auto& row : g_candidate.values)
        for (double v : row)
            if (!(v > 0.0)) throw DomainError("picard_apply: candidate must be positive");
    if (opts.eval_points < 2) throw DomainError("picard_apply: need at least 2 evaluation points");
    if (n_paths < 2) throw DomainError("picard_apply: need at least 2 paths");

    const double horizon = spec.horizon;
    detail::PicardIntegrand integrand(spec, g_candidate);
    const double weight = 1.0 - spec.gamma;

    PicardEstimate est;
    const std::size_t m = opts.eval_points;
    est.values.grid.resize(m);
    for (std::size_t e = 0; e < m; ++e)
        est.values.grid[e] = horizon * static_cast<double>(e) / static_cast<double>(m - 1);
    est.values.grid[m - 1] = horizon;
    est.values.values.assign(m, std::vector<double>(n));
    est.std_errors = est.values;

    for (std::size_t e = 0; e < m; ++e) {
        const double t = est.values.grid[e];
        for (std::size_t i = 0; i < n; ++i) {
            Engine eng = make_engine(purpose_stream(rng.substream(e * n + i), StreamPurpose::chain));
            RunningStats stats;
            for (std::size_t p = 0; p < n_paths; ++p) {
                const JumpPath path = sample_path(spec.generator, i, t, horizon, eng);
                double log_k = 0.0, acc = 0.0;
                double a_prev = t;
                std::size_t state = i;
                auto segment = [&](double b) {
                    const auto [aa, ca] = integrand.cumulative(a_prev, state);
                    const auto [ab, cb] = integrand.cumulative(b, state);
                    acc += std::exp(log_k - aa) * (cb - ca);
                    log_k += ab - aa;
                };
                for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
                    segment(path.jump_times[k]);
                    a_prev = path.jump_times[k];
                    state = path.jump_targets[k];
                }
                if (a_prev < horizon) segment(horizon);
                stats.add(std::exp(log_k) + weight * acc);
            }
            est.values.values[e][i] = stats.mean();
            est.std_errors.values[e][i] = stats.std_error();
        }
    }
    return est;
}

} // namespace rsmerton
