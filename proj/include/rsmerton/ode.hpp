#pragma once

// Backward (terminal-value) integration of small coupled ODE systems with
// classical RK4, step-halving error control, and residual diagnostics.

#include "rsmerton/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace rsmerton {

/// dy/dt = rhs(t, y) on [t_start, t_end] with y(t_end) = terminal_values.
struct OdeSystem {
    using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

    std::size_t dimension = 0;
    Rhs rhs;
    std::vector<double> terminal_values;
    double t_start = 0.0;
    double t_end = 1.0;
    /// Per-component lower bound; empty means unguarded, -inf leaves a component unguarded.
    std::vector<double> floor;
};

/// Dense per-component values on a strictly increasing grid, linearly interpolated.
struct SolutionTable {
    std::vector<double> grid;
    std::vector<std::vector<double>> values;  // values[k][component]

    std::size_t dimension() const { return values.empty() ? 0 : values.front().size(); }
    std::size_t size() const { return grid.size(); }
    double t_front() const { return grid.front(); }
    double t_back() const { return grid.back(); }

    double at(std::size_t k, std::size_t c) const { return values[k][c]; }

    double value(double t, std::size_t c) const {
        const auto [k, w] = locate(t);
        if (w == 0.0) return values[k][c];
        return values[k][c] + w * (values[k + 1][c] - values[k][c]);
    }

    std::vector<double> interpolate(double t) const {
        std::vector<double> out(dimension());
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = value(t, c);
        return out;
    }

    /// Index k and weight w such that t = grid[k] + w (grid[k+1] - grid[k]).
    std::pair<std::size_t, double> locate(double t) const {
        const double lo = grid.front(), hi = grid.back();
        const double slack = 1e-12 * std::max(1.0, std::abs(hi - lo));
        if (t < lo - slack || t > hi + slack || !std::isfinite(t)) {
            throw DomainError("SolutionTable: t=" + std::to_string(t) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        if (t <= lo) return {0, 0.0};
        if (t >= hi) return {grid.size() - 1, 0.0};
        auto it = std::upper_bound(grid.begin(), grid.end(), t);
        const auto k = static_cast<std::size_t>(it - grid.begin()) - 1;
        if (grid[k] == t) return {k, 0.0};
        return {k, (t - grid[k]) / (grid[k + 1] - grid[k])};
    }

    bool operator==(const SolutionTable&) const = default;
};

struct SolveOptions {
    std::size_t n_steps = 2048;
    double tolerance = 1e-9;              // per-step local error estimate, relative to max(1, |y|)
    std::size_t max_steps = std::size_t{1} << 20;
    bool refine = true;                   // false: single pass at n_steps, no doubling
};

namespace detail {

class Rk4Stepper {
public:
    explicit Rk4Stepper(const OdeSystem& sys)
        : sys_(sys), k1_(sys.dimension), k2_(sys.dimension), k3_(sys.dimension),
          k4_(sys.dimension), tmp_(sys.dimension) {}

    void step(double t, std::span<const double> y, double h, std::span<double> out) {
        const std::size_t n = sys_.dimension;
        eval(t, y, k1_);
        for (std::size_t c = 0; c < n; ++c) tmp_[c] = y[c] + 0.5 * h * k1_[c];
        eval(t + 0.5 * h, tmp_, k2_);
        for (std::size_t c = 0; c < n; ++c) tmp_[c] = y[c] + 0.5 * h * k2_[c];
        eval(t + 0.5 * h, tmp_, k3_);
        for (std::size_t c = 0; c < n; ++c) tmp_[c] = y[c] + h * k3_[c];
        eval(t + h, tmp_, k4_);
        for (std::size_t c = 0; c < n; ++c)
            out[c] = y[c] + h / 6.0 * (k1_[c] + 2.0 * k2_[c] + 2.0 * k3_[c] + k4_[c]);
    }

    void check_floor(double t, std::span<const double> y) const {
        if (sys_.floor.empty()) return;
        for (std::size_t c = 0; c < y.size(); ++c) {
            if (!(y[c] >= sys_.floor[c])) {
                throw DomainError("ode: component " + std::to_string(c) + " = " + std::to_string(y[c]) +
                                  " fell below its floor at t=" + std::to_string(t));
            }
        }
    }

private:
    void eval(double t, std::span<const double> y, std::vector<double>& dydt) {
        check_floor(t, y);
        sys_.rhs(t, y, dydt);
        for (std::size_t c = 0; c < dydt.size(); ++c) {
            if (!std::isfinite(dydt[c])) {
                throw DomainError("ode: non-finite right-hand side in component " + std::to_string(c) +
                                  " at t=" + std::to_string(t));
            }
        }
    }

    const OdeSystem& sys_;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

inline SolutionTable uniform_sweep(const OdeSystem& sys, std::size_t n, double& max_err) {
    const std::size_t dim = sys.dimension;
    SolutionTable table;
    table.grid.resize(n + 1);
    table.values.assign(n + 1, std::vector<double>(dim));
    const double span = sys.t_end - sys.t_start;
    for (std::size_t k = 0; k <= n; ++k)
        table.grid[k] = sys.t_start + span * static_cast<double>(k) / static_cast<double>(n);
    table.grid[n] = sys.t_end;
    table.values[n] = sys.terminal_values;

    Rk4Stepper stepper(sys);
    std::vector<double> half(dim), twice(dim);
    max_err = 0.0;
    for (std::size_t k = n; k > 0; --k) {
        const double t = table.grid[k];
        const double h = table.grid[k - 1] - t;  // negative: backward in time
        const auto& y = table.values[k];
        auto& full = table.values[k - 1];
        stepper.step(t, y, h, full);
        stepper.step(t, y, 0.5 * h, half);
        stepper.step(t + 0.5 * h, half, 0.5 * h, twice);
        for (std::size_t c = 0; c < dim; ++c) {
            const double e = std::abs(full[c] - twice[c]) / std::max(1.0, std::abs(twice[c]));
            max_err = std::max(max_err, e);
        }
        stepper.check_floor(table.grid[k - 1], full);
    }
    return table;
}

} // namespace detail

/// Integrates `sys` from t_end down to t_start on a uniform grid. With
/// refinement on, the step count doubles until the step-halving estimate
/// drops below the tolerance; exceeding max_steps throws ConvergenceError.
inline SolutionTable solve_terminal_ode(const OdeSystem& sys, const SolveOptions& opts = {}) {
    if (opts.n_steps < 16) throw DomainError("solve_terminal_ode: n_steps must be >= 16");
    if (sys.terminal_values.size() != sys.dimension || !sys.rhs)
        throw DomainError("solve_terminal_ode: malformed system");
    if (!sys.floor.empty() && sys.floor.size() != sys.dimension)
        throw DomainError("solve_terminal_ode: floor size mismatch");
    if (!(sys.t_end > sys.t_start)) throw DomainError("solve_terminal_ode: empty interval");

    for (std::size_t n = opts.n_steps;; n *= 2) {
        if (n > opts.max_steps) {
            throw ConvergenceError("solve_terminal_ode: step-halving estimate above " +
                                   std::to_string(opts.tolerance) + " at the cap of " +
                                   std::to_string(opts.max_steps) + " steps");
        }
        double err = 0.0;
        SolutionTable table;
        try {
            table = detail::uniform_sweep(sys, n, err);
        } catch (const DomainError&) {
            // a coarse sweep can go unstable on a stiff system; only the
            // finest admissible grid gets to report the breach
            if (!opts.refine || 2 * n > opts.max_steps) throw;
            continue;
        }
        if (!opts.refine || err <= opts.tolerance) return table;
    }
}

inline SolutionTable solve_terminal_ode(const OdeSystem& sys, std::size_t n_steps) {
    SolveOptions o;
    o.n_steps = n_steps;
    return solve_terminal_ode(sys, o);
}

/// Solves segment by segment between `breakpoints`, where the right-hand
/// side may jump. Each segment gets n_steps scaled by its share of the
/// interval (at least 16) and sees the rhs evaluated strictly inside it.
inline SolutionTable solve_terminal_ode_piecewise(const OdeSystem& sys, std::vector<double> breakpoints,
                                                  const SolveOptions& opts = {}) {
    std::erase_if(breakpoints, [&](double b) { return !(b > sys.t_start && b < sys.t_end); });
    if (breakpoints.empty()) return solve_terminal_ode(sys, opts);
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

    std::vector<double> edges{sys.t_start};
    edges.insert(edges.end(), breakpoints.begin(), breakpoints.end());
    edges.push_back(sys.t_end);

    const double span = sys.t_end - sys.t_start;
    SolutionTable out;
    std::vector<double> terminal = sys.terminal_values;
    for (std::size_t s = edges.size() - 1; s > 0; --s) {
        const double a = edges[s - 1], b = edges[s];
        const double nudge = 1e-12 * std::max(1.0, span);
        OdeSystem seg = sys;
        seg.t_start = a;
        seg.t_end = b;
        seg.terminal_values = terminal;
        seg.rhs = [&sys, a, b, nudge](double t, std::span<const double> y, std::span<double> d) {
            sys.rhs(std::clamp(t, a + nudge, b - nudge), y, d);
        };
        SolveOptions o = opts;
        o.n_steps = std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(
                                                   static_cast<double>(opts.n_steps) * (b - a) / span)));
        SolutionTable part = solve_terminal_ode(seg, o);
        terminal = part.values.front();
        // prepend, dropping the duplicated junction point
        if (!out.grid.empty()) {
            part.grid.pop_back();
            part.values.pop_back();
        }
        part.grid.insert(part.grid.end(), out.grid.begin(), out.grid.end());
        part.values.insert(part.values.end(), out.values.begin(), out.values.end());
        out = std::move(part);
    }
    return out;
}

/// Max over interior grid points of |dy/dt - rhs|, each component scaled by
/// max(1, |value|). dy/dt is a five-point fourth-order difference on a uniform
/// window, falling back to the centered three-point one where the window is
/// not uniform or straddles a point listed in `skip` (where the rhs jumps).
/// Points in `skip` are left out.
inline double residual_norm(const OdeSystem& sys, const SolutionTable& table,
                            const std::vector<double>& skip = {}) {
    if (table.size() < 3) throw DomainError("residual_norm: need at least 3 grid points");
    static constexpr double w5[5][5] = {{-25, 48, -36, 16, -3},
                                        {-3, -10, 18, -6, 1},
                                        {1, -8, 0, 8, -1},
                                        {-1, 6, -18, 10, 3},
                                        {3, -16, 36, -48, 25}};
    auto skipped = [&](std::size_t k) { return std::find(skip.begin(), skip.end(), table.grid[k]) != skip.end(); };
    const std::size_t n = table.size();
    std::vector<double> f(sys.dimension);
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (skipped(k)) continue;
        sys.rhs(table.grid[k], table.values[k], f);

        bool five = n >= 5;
        std::size_t j = 0;
        double h = 0.0;
        if (five) {
            j = std::min(k >= 2 ? k - 2 : 0, n - 5);
            h = (table.grid[j + 4] - table.grid[j]) / 4.0;
            for (std::size_t m = j; m < j + 4 && five; ++m) {
                if (std::abs(table.grid[m + 1] - table.grid[m] - h) > 1e-9 * h) five = false;
                if (m > j && skipped(m)) five = false;
            }
        }
        for (std::size_t c = 0; c < sys.dimension; ++c) {
            double d;
            if (five) {
                d = 0.0;
                for (std::size_t m = 0; m < 5; ++m) d += w5[k - j][m] * table.values[j + m][c];
                d /= 12.0 * h;
            } else {
                d = (table.values[k + 1][c] - table.values[k - 1][c]) / (table.grid[k + 1] - table.grid[k - 1]);
            }
            const double r = std::abs(d - f[c]) / std::max(1.0, std::abs(table.values[k][c]));
            worst = std::max(worst, r);
        }
    }
    return worst;
}

/// CSV: optional `# ...` metadata line, header `t,<names>`, then rows at 12 significant digits.
inline void write_table_csv(std::ostream& out, const SolutionTable& table,
                            const std::vector<std::string>& names, const std::string& metadata = "") {
    if (!metadata.empty()) out << "# " << metadata << '\n';
    out << 't';
    for (std::size_t c = 0; c < table.dimension(); ++c)
        out << ',' << (c < names.size() ? names[c] : "y" + std::to_string(c));
    out << '\n';
    char buf[64];
    for (std::size_t k = 0; k < table.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.12g", table.grid[k]);
        out << buf;
        for (double v : table.values[k]) {
            std::snprintf(buf, sizeof buf, "%.12g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
}

} // namespace rsmerton
