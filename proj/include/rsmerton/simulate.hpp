#pragma once

// Wealth simulation under proportional feedback strategies, Monte-Carlo
// estimation of the expected-utility functional, the Feynman-Kac ODE for the
// same functional, and the epsilon-perturbation slope test.

#include "rsmerton/core_model.hpp"
#include "rsmerton/ctmc.hpp"
#include "rsmerton/equilibrium.hpp"
#include "rsmerton/mc_report.hpp"
#include "rsmerton/ode.hpp"
#include "rsmerton/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace rsmerton {

/// pi = a(t,i) X and c = b(t,i) X. Maps are right-continuous at `breakpoints`.
struct ProportionalStrategy {
    using Map = std::function<double(double t, std::size_t i)>;

    Map invest;   // a: fraction of wealth in the stock
    Map consume;  // b: consumption per unit wealth, 1/year
    std::vector<double> breakpoints;

    static ProportionalStrategy constant(std::vector<double> a, std::vector<double> b) {
        return {[a](double, std::size_t i) { return a[i]; },
                [b](double, std::size_t i) { return b[i]; },
                {}};
    }

    /// Columns of `a` and `b` are states; linear interpolation in t.
    static ProportionalStrategy tabulated(SolutionTable a, SolutionTable b) {
        auto pa = std::make_shared<const SolutionTable>(std::move(a));
        auto pb = std::make_shared<const SolutionTable>(std::move(b));
        return {[pa](double t, std::size_t i) { return pa->value(t, i); },
                [pb](double t, std::size_t i) { return pb->value(t, i); },
                {}};
    }

    static ProportionalStrategy equilibrium(const PolicyField& field) {
        return {[field](double t, std::size_t i) { return field.investment_fraction(t, i); },
                [field](double t, std::size_t i) { return field.consumption_fraction(t, i); },
                field.solution().spec.breakpoints()};
    }

    /// a -> invest_scale * a, b -> consume_scale * b.
    static ProportionalStrategy scaled(const ProportionalStrategy& base, double invest_scale,
                                       double consume_scale) {
        return {[f = base.invest, invest_scale](double t, std::size_t i) { return invest_scale * f(t, i); },
                [f = base.consume, consume_scale](double t, std::size_t i) { return consume_scale * f(t, i); },
                base.breakpoints};
    }

    /// `window` on [t0, t1), `base` elsewhere.
    static ProportionalStrategy spliced(const ProportionalStrategy& base, const ProportionalStrategy& window,
                                        double t0, double t1) {
        auto pick = [t0, t1](const Map& b, const Map& w) {
            return [b, w, t0, t1](double t, std::size_t i) { return (t >= t0 && t < t1) ? w(t, i) : b(t, i); };
        };
        std::vector<double> bps = base.breakpoints;
        bps.insert(bps.end(), window.breakpoints.begin(), window.breakpoints.end());
        bps.push_back(t0);
        bps.push_back(t1);
        return {pick(base.invest, window.invest), pick(base.consume, window.consume), std::move(bps)};
    }
};

struct WealthPath {
    std::vector<double> times;
    std::vector<double> wealth;
    JumpPath chain;
    RngSpec brownian;
    bool valid = true;  // false once an Euler step leaves X > 0
};

enum class Scheme { exact, euler };

namespace detail {

/// Step times: uniform grid on [start, T] merged with interior breakpoints.
inline std::vector<double> step_times(double start, double horizon, std::size_t n_grid,
                                      const std::vector<double>& extra) {
    std::vector<double> t;
    t.reserve(n_grid + 1 + extra.size());
    for (std::size_t k = 0; k <= n_grid; ++k)
        t.push_back(start + (horizon - start) * static_cast<double>(k) / static_cast<double>(n_grid));
    t.back() = horizon;
    for (double b : extra)
        if (b > start && b < horizon) t.push_back(b);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

inline std::vector<double> merged_breakpoints(const ProportionalStrategy& s, const MarketSpec& spec,
                                              const JumpPath* path = nullptr) {
    std::vector<double> out = s.breakpoints;
    for (double b : spec.breakpoints()) out.push_back(b);
    if (path) out.insert(out.end(), path->jump_times.begin(), path->jump_times.end());
    return out;
}

/// Coefficients on one step, held at the step midpoint with the chain state
/// fixed (jump times are step boundaries).
struct StepCoeffs {
    double log_drift;  // r + mu a - b - sigma^2 a^2 / 2
    double lin_drift;  // r + mu a - b
    double vol;        // sigma a
};

inline StepCoeffs step_coeffs(const ProportionalStrategy& s, const MarketSpec& spec, double t0, double t1,
                              std::size_t state) {
    const double tm = 0.5 * (t0 + t1);
    const double a = s.invest(tm, state), b = s.consume(tm, state);
    const double sig = spec.vol(tm, state);
    const double lin = spec.rate(tm, state) + spec.excess(tm, state) * a - b;
    return {lin - 0.5 * sig * sig * a * a, lin, sig * a};
}

} // namespace detail

/// Integrates the wealth SDE along `times` with caller-supplied Brownian
/// increments (dw[k] over [times[k], times[k+1]]). `times` must contain the
/// chain's jump times inside the range.
inline WealthPath simulate_wealth_increments(const ProportionalStrategy& strategy, double x0,
                                             const JumpPath& path, const MarketSpec& spec,
                                             const std::vector<double>& times, const std::vector<double>& dw,
                                             Scheme scheme) {
    if (!(x0 > 0.0)) throw DomainError("simulate_wealth: x0 must be > 0");
    if (times.size() < 2 || dw.size() + 1 != times.size())
        throw DomainError("simulate_wealth: times/increments size mismatch");
    WealthPath wp;
    wp.times = times;
    wp.chain = path;
    wp.wealth.resize(times.size());
    wp.wealth[0] = x0;
    double x = x0;
    double logx = std::log(x0);
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double dt = times[k + 1] - times[k];
        const auto c = detail::step_coeffs(strategy, spec, times[k], times[k + 1], path.state_at(times[k]));
        if (scheme == Scheme::exact) {
            logx += c.log_drift * dt + c.vol * dw[k];
            x = std::exp(logx);
        } else if (wp.valid) {
            x += x * (c.lin_drift * dt + c.vol * dw[k]);
            if (!(x > 0.0)) wp.valid = false;
        }
        wp.wealth[k + 1] = x;
    }
    return wp;
}

/// One wealth path on the uniform n_grid grid over [path.start, T] plus the
/// chain's jump times and any coefficient/strategy breakpoints.
inline WealthPath simulate_wealth(const ProportionalStrategy& strategy, double x0, const JumpPath& path,
                                  const MarketSpec& spec, std::size_t n_grid, const RngSpec& rng,
                                  Scheme scheme = Scheme::exact) {
    const auto times = detail::step_times(path.start, path.horizon, n_grid,
                                          detail::merged_breakpoints(strategy, spec, &path));
    const RngSpec brown = purpose_stream(rng, StreamPurpose::brownian);
    Engine eng = make_engine(brown);
    std::normal_distribution<double> normal;
    std::vector<double> dw(times.size() - 1);
    for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = std::sqrt(times[k + 1] - times[k]) * normal(eng);
    WealthPath wp = simulate_wealth_increments(strategy, x0, path, spec, times, dw, scheme);
    wp.brownian = brown;
    return wp;
}

struct EstimateOptions {
    std::size_t n_grid = 2048;
};

/// Monte-Carlo estimate of
///   E[ int_t^T e^{-rho_i (s-t)} U(b X_s) ds + e^{-rho_i (T-t)} U(X_T) ]
/// with rho_i frozen at the starting state. Path p uses substream p for both
/// its chain and its Brownian motion (separate purposes).
inline MCReport estimate_J(const ProportionalStrategy& strategy, double t, double x, std::size_t i,
                           const MarketSpec& spec, std::size_t n_paths, const RngSpec& rng,
                           const EstimateOptions& opts = {}) {
    validate_spec(spec);
    const Preferences prefs = spec.preferences();
    const double horizon = spec.horizon;
    if (!(x > 0.0)) throw DomainError("estimate_J: wealth must be > 0");
    if (i >= spec.states) throw DomainError("estimate_J: state out of range");
    if (!(t >= 0.0 && t <= horizon)) throw DomainError("estimate_J: t outside [0, T]");
    if (n_paths < 2) throw DomainError("estimate_J: need at least 2 paths");

    if (t == horizon) {
        MCReport rep{utility(x, prefs), 0.0, n_paths, 0, rng, std::nullopt};
        return rep;
    }

    const auto base = detail::step_times(t, horizon, opts.n_grid, detail::merged_breakpoints(strategy, spec));
    if (prefs.is_log || prefs.gamma < 0.0) {
        for (double s : base)
            for (std::size_t j = 0; j < spec.states; ++j)
                if (!(strategy.consume(s, j) > 0.0))
                    throw DomainError("estimate_J: consumption fraction must be > 0 when gamma <= 0");
    }

    const double rho = spec.rho[i];
    const double nudge = 1e-12 * std::max(1.0, horizon);
    const std::size_t n_states = spec.states;
    const std::size_t cells = base.size() - 1;

    // per (cell, state): midpoint coefficients and b at both ends of the cell
    std::vector<detail::StepCoeffs> coeff(cells * n_states);
    std::vector<double> b_left(cells * n_states), b_right(cells * n_states);
    for (std::size_t m = 0; m < cells; ++m) {
        for (std::size_t j = 0; j < n_states; ++j) {
            coeff[m * n_states + j] = detail::step_coeffs(strategy, spec, base[m], base[m + 1], j);
            b_left[m * n_states + j] = strategy.consume(base[m] + nudge, j);
            b_right[m * n_states + j] = strategy.consume(base[m + 1] - nudge, j);
        }
    }

    RunningStats stats;
    std::normal_distribution<double> normal;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const RngSpec sub = rng.substream(p);
        Engine chain_eng = make_engine(purpose_stream(sub, StreamPurpose::chain));
        Engine brown_eng = make_engine(purpose_stream(sub, StreamPurpose::brownian));
        const JumpPath path = sample_path(spec.generator, i, t, horizon, chain_eng);
        normal.reset();

        double logx = std::log(x);
        double running = 0.0;
        std::size_t jump = 0;
        std::size_t state = i;
        auto advance = [&](double t0, double t1, const detail::StepCoeffs& c, double b0, double b1) {
            const double dt = t1 - t0;
            const double x0 = std::exp(logx);
            logx += c.log_drift * dt + c.vol * std::sqrt(dt) * normal(brown_eng);
            const double x1 = std::exp(logx);
            running += 0.5 * dt * (std::exp(-rho * (t0 - t)) * utility(b0 * x0, prefs) +
                                   std::exp(-rho * (t1 - t)) * utility(b1 * x1, prefs));
        };
        for (std::size_t m = 0; m < cells; ++m) {
            const double s0 = base[m], s1 = base[m + 1];
            if (jump == path.jump_times.size() || path.jump_times[jump] >= s1) {
                const std::size_t idx = m * n_states + state;
                advance(s0, s1, coeff[idx], b_left[idx], b_right[idx]);
            } else {
                double a = s0;
                while (a < s1) {
                    const double b = (jump < path.jump_times.size() && path.jump_times[jump] < s1)
                                         ? path.jump_times[jump] : s1;
                    if (b > a) {
                        advance(a, b, detail::step_coeffs(strategy, spec, a, b, state),
                                strategy.consume(a + nudge, state), strategy.consume(b - nudge, state));
                    }
                    if (b < s1) state = path.jump_targets[jump++];
                    a = b;
                }
            }
            if (jump < path.jump_times.size() && path.jump_times[jump] == s1) state = path.jump_targets[jump++];
        }
        stats.add(running + std::exp(-rho * (horizon - t)) * utility(std::exp(logx), prefs));
    }
    return stats.report(rng);
}

// ---------------------------------------------------------------------------
// Feynman-Kac representation
//
// For a proportional strategy the functional is homothetic:
//   power: J(t,x,i) = f(t,i) x^gamma / gamma with
//     f_t + [gamma (r + mu a - b) + gamma (gamma-1) sigma^2 a^2 / 2 - delta_i] f_i
//         + sum_j lambda_ij f_j + b^gamma = 0,  f(T,.) = 1
//   log:   J(t,x,i) = H(t,i) log x + L(t,i) with
//     H_t - delta_i H_i + sum_j lambda_ij H_j + 1 = 0,                 H(T,.) = 1
//     L_t + (r + mu a - b - sigma^2 a^2 / 2) H_i + log b - delta_i L_i
//         + sum_j lambda_ij L_j = 0,                                  L(T,.) = 0
// where delta is the discount applied in each row: a single frozen rate for
// the functional J, or rho_j per row for the equilibrium's own identity.

struct FeynmanKacTable {
    Preferences prefs;
    std::size_t states = 0;
    SolutionTable table;  // power: S columns f; log: 2S columns H then L

    double value(double t, double x, std::size_t i) const {
        if (prefs.is_log) return table.value(t, i) * std::log(x) + table.value(t, states + i);
        return table.value(t, i) * std::pow(x, prefs.gamma) / prefs.gamma;
    }
    double coefficient(double t, std::size_t i) const { return table.value(t, i); }
};

struct FeynmanKacOptions {
    double t_start = 0.0;
    SolveOptions solve{};
};

inline OdeSystem feynman_kac_system(const ProportionalStrategy& s, const std::vector<double>& discount,
                                    const MarketSpec& spec, double t_start) {
    const std::size_t n = spec.states;
    const Preferences prefs = spec.preferences();
    OdeSystem sys;
    sys.t_start = t_start;
    sys.t_end = spec.horizon;
    if (prefs.is_log) {
        sys.dimension = 2 * n;
        sys.terminal_values.assign(2 * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) sys.terminal_values[i] = 1.0;
        sys.rhs = [s, discount, spec, n](double t, std::span<const double> y, std::span<double> dy) {
            for (std::size_t i = 0; i < n; ++i) {
                double ch = 0.0, cl = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    ch += spec.generator(i, j) * y[j];
                    cl += spec.generator(i, j) * y[n + j];
                }
                const double a = s.invest(t, i), b = s.consume(t, i);
                const double sig = spec.vol(t, i);
                const double growth = spec.rate(t, i) + spec.excess(t, i) * a - b - 0.5 * sig * sig * a * a;
                dy[i] = -(-discount[i] * y[i] + ch + 1.0);
                dy[n + i] = -(growth * y[i] + std::log(b) - discount[i] * y[n + i] + cl);
            }
        };
    } else {
        const double gamma = prefs.gamma;
        sys.dimension = n;
        sys.terminal_values.assign(n, 1.0);
        sys.rhs = [s, discount, spec, n, gamma](double t, std::span<const double> f, std::span<double> df) {
            for (std::size_t i = 0; i < n; ++i) {
                double coupling = 0.0;
                for (std::size_t j = 0; j < n; ++j) coupling += spec.generator(i, j) * f[j];
                const double a = s.invest(t, i), b = s.consume(t, i);
                const double sig = spec.vol(t, i);
                const double k = gamma * (spec.rate(t, i) + spec.excess(t, i) * a - b) +
                                 0.5 * gamma * (gamma - 1.0) * sig * sig * a * a - discount[i];
                df[i] = -(k * f[i] + coupling + std::pow(b, gamma));
            }
        };
    }
    return sys;
}

/// Feynman-Kac table with an explicit per-row discount vector.
inline FeynmanKacTable feynman_kac_value(const ProportionalStrategy& strategy, const std::vector<double>& discount,
                                         const MarketSpec& spec, const FeynmanKacOptions& opts = {}) {
    validate_spec(spec);
    if (discount.size() != spec.states) throw DomainError("feynman_kac_value: discount size mismatch");
    const OdeSystem sys = feynman_kac_system(strategy, discount, spec, opts.t_start);
    FeynmanKacTable out{spec.preferences(), spec.states, {}};
    SolveOptions so = opts.solve;
    const double frac = (spec.horizon - opts.t_start) / spec.horizon;
    so.n_steps = std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(static_cast<double>(so.n_steps) * frac)));
    out.table = solve_terminal_ode_piecewise(sys, detail::merged_breakpoints(strategy, spec), so);
    return out;
}

/// The functional J with the discount frozen at `frozen_rho` for the whole horizon.
/// J(t,x,i) for initial state i uses frozen_rho = rho_i.
inline FeynmanKacTable feynman_kac_value(const ProportionalStrategy& strategy, double frozen_rho,
                                         const MarketSpec& spec, const FeynmanKacOptions& opts = {}) {
    return feynman_kac_value(strategy, std::vector<double>(spec.states, frozen_rho), spec, opts);
}

/// J(t,x,i) computed deterministically: frozen discount rho_i, read at state i.
inline double functional_value(const ProportionalStrategy& strategy, const MarketSpec& spec, double t, double x,
                               std::size_t i, const SolveOptions& solve = {}) {
    FeynmanKacOptions o;
    o.t_start = t;
    o.solve = solve;
    return feynman_kac_value(strategy, spec.rho[i], spec, o).value(t, x, i);
}

// ---------------------------------------------------------------------------
// Subgame-perfect slope test

struct SlopeResult {
    std::vector<double> epsilons;
    std::vector<double> slopes;  // (J_eq - J_pert) / eps
    double extrapolated = 0.0;   // intercept of the least-squares line in eps
};

inline std::vector<double> default_epsilons(double t, double horizon) {
    const double w = horizon - t;
    return {0.1 * w, 0.05 * w, 0.025 * w};
}

/// For each eps, J_eq - J_pert over eps where the perturbed strategy follows
/// `perturbation` on [t, t+eps) and the equilibrium elsewhere; extrapolated
/// to eps -> 0 by a linear fit.
inline SlopeResult equilibrium_slope(const PolicyField& field, double t, double x, std::size_t i,
                                     const ProportionalStrategy& perturbation, const std::vector<double>& epsilons,
                                     const SolveOptions& solve = {}) {
    const auto& spec = field.solution().spec;
    const double horizon = spec.horizon;
    if (!(x > 0.0)) throw DomainError("equilibrium_slope: wealth must be > 0");
    if (!(t >= 0.0 && t < horizon)) throw DomainError("equilibrium_slope: t must lie in [0, T)");
    if (epsilons.size() < 2) throw DomainError("equilibrium_slope: need at least 2 epsilons");
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
        const double e = epsilons[k];
        if (!(e > 0.0) || e > horizon - t + 1e-14)
            throw DomainError("equilibrium_slope: epsilon " + std::to_string(e) + " outside (0, T-t]");
        if (k > 0 && !(e < epsilons[k - 1])) throw DomainError("equilibrium_slope: epsilons must decrease");
    }

    const ProportionalStrategy eq = ProportionalStrategy::equilibrium(field);
    SlopeResult out;
    out.epsilons = epsilons;
    for (double e : epsilons) {
        const double t1 = std::min(t + e, horizon);
        // same splice points on both sides so the discretizations match
        const auto ref = ProportionalStrategy::spliced(eq, eq, t, t1);
        const auto pert = ProportionalStrategy::spliced(eq, perturbation, t, t1);
        const double j_eq = functional_value(ref, spec, t, x, i, solve);
        const double j_pert = functional_value(pert, spec, t, x, i, solve);
        out.slopes.push_back((j_eq - j_pert) / e);
    }

    const double m = static_cast<double>(epsilons.size());
    double se = 0.0, ss = 0.0, see = 0.0, ses = 0.0;
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
        se += epsilons[k];
        ss += out.slopes[k];
        see += epsilons[k] * epsilons[k];
        ses += epsilons[k] * out.slopes[k];
    }
    const double beta = (m * ses - se * ss) / (m * see - se * se);
    out.extrapolated = (ss - beta * se) / m;
    return out;
}

struct NamedPerturbation {
    std::string name;
    double invest_scale;
    double consume_scale;
};

/// Six bounded deviations from the equilibrium fractions.
inline std::vector<NamedPerturbation> perturbation_menu() {
    return {{"consumption_x2", 1.0, 2.0},  {"consumption_x0.5", 1.0, 0.5}, {"investment_x0", 0.0, 1.0},
            {"investment_x2", 2.0, 1.0},   {"both_x2", 2.0, 2.0},          {"investment_flipped", -1.0, 1.0}};
}

} // namespace rsmerton
