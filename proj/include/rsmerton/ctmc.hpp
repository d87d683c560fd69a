#pragma once

// Continuous-time Markov chain sampling and generator diagnostics.

#include "rsmerton/core_model.hpp"
#include "rsmerton/mc_report.hpp"
#include "rsmerton/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace rsmerton {

/// A realized chain trajectory on [start, horizon]. Consecutive states differ.
struct JumpPath {
    std::size_t initial_state = 0;
    std::vector<double> jump_times;         // strictly increasing, in (start, horizon]
    std::vector<std::size_t> jump_targets;  // state entered at each jump
    double horizon = 0.0;
    double start = 0.0;

    /// Right-continuous state at time t.
    std::size_t state_at(double t) const {
        auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
        const auto k = static_cast<std::size_t>(it - jump_times.begin());
        return k == 0 ? initial_state : jump_targets[k - 1];
    }

    std::size_t final_state() const {
        return jump_targets.empty() ? initial_state : jump_targets.back();
    }

    bool operator==(const JumpPath&) const = default;
};

/// Gillespie sampling with an explicit engine, for use inside ensembles.
inline JumpPath sample_path(const RegimeGenerator& gen, std::size_t initial, double start,
                            double horizon, Engine& eng) {
    JumpPath p;
    p.initial_state = initial;
    p.horizon = horizon;
    p.start = start;
    double t = start;
    std::size_t state = initial;
    for (;;) {
        const double exit = gen.exit_rate(state);
        if (!(exit > 0.0)) break;
        t += -std::log(uniform_open0(eng)) / exit;
        if (t > horizon) break;
        double u = uniform_open0(eng) * exit;
        std::size_t next = state;
        for (std::size_t j = 0; j < gen.size(); ++j) {
            if (j == state) continue;
            const double rate = gen(state, j);
            if (rate <= 0.0) continue;
            next = j;
            if (u <= rate) break;
            u -= rate;
        }
        if (next == state) break;
        p.jump_times.push_back(t);
        p.jump_targets.push_back(next);
        state = next;
    }
    return p;
}

inline JumpPath sample_path(const RegimeGenerator& gen, std::size_t initial, double horizon,
                            const RngSpec& rng) {
    if (initial >= gen.size()) throw DomainError("sample_path: initial state out of range");
    if (!(horizon > 0.0)) throw DomainError("sample_path: horizon must be > 0");
    Engine eng = make_engine(purpose_stream(rng, StreamPurpose::chain));
    return sample_path(gen, initial, 0.0, horizon, eng);
}

/// pi >= 0 with sum 1 and pi * Lambda = 0. Throws DomainError for a reducible generator.
inline std::vector<double> stationary_distribution(const RegimeGenerator& gen) {
    if (auto v = generator_violations(gen); !v.empty()) throw SpecError(std::move(v));
    const std::size_t n = gen.size();

    // reach[i][j]: j reachable from i
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        reach[i][i] = true;
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && gen(i, j) > 0.0) reach[i][j] = true;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (reach[i][k])
                for (std::size_t j = 0; j < n; ++j)
                    if (reach[k][j]) reach[i][j] = true;

    bool irreducible = true;
    for (std::size_t i = 0; i < n && irreducible; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!reach[i][j]) { irreducible = false; break; }
    if (!irreducible) {
        // report a closed class: states reachable from i, all of which reach back to i
        for (std::size_t i = 0; i < n; ++i) {
            bool closed = true;
            for (std::size_t j = 0; j < n; ++j)
                if (reach[i][j] && !reach[j][i]) { closed = false; break; }
            if (!closed) continue;
            std::string cls;
            for (std::size_t j = 0; j < n; ++j) {
                if (reach[i][j]) cls += (cls.empty() ? "" : ",") + std::to_string(j);
            }
            throw DomainError("stationary_distribution: reducible generator, closed class {" + cls + "}");
        }
        throw DomainError("stationary_distribution: reducible generator");
    }

    // Solve Lambda^T pi = 0 with the last equation replaced by sum(pi) = 1.
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t row = 0; row < n; ++row)
        for (std::size_t col = 0; col < n; ++col) a[row][col] = gen(col, row);
    for (std::size_t col = 0; col < n; ++col) a[n - 1][col] = 1.0;
    a[n - 1][n] = 1.0;

    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c || a[r][c] == 0.0) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
        }
    }
    std::vector<double> pi(n);
    for (std::size_t i = 0; i < n; ++i) pi[i] = std::max(0.0, a[i][n] / a[i][i]);
    return pi;
}

/// Monte-Carlo mean of the Dynkin martingale
///   M(T) = G(J_T) - G(J_0) - int_0^T (Lambda G)(J_u) du
/// started from `initial`; target 0.
inline MCReport dynkin_check(const RegimeGenerator& gen, const std::vector<double>& test_fn,
                             double horizon, std::size_t n_paths, const RngSpec& rng,
                             std::size_t initial = 0) {
    if (test_fn.size() != gen.size()) throw DomainError("dynkin_check: test_fn size mismatch");
    if (n_paths < 1000) throw DomainError("dynkin_check: n_paths must be >= 1000");

    std::vector<double> lg(gen.size());
    for (std::size_t i = 0; i < gen.size(); ++i) lg[i] = gen.apply_row(i, test_fn);

    Engine eng = make_engine(purpose_stream(rng, StreamPurpose::chain));
    RunningStats stats;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const JumpPath path = sample_path(gen, initial, 0.0, horizon, eng);
        double integral = 0.0;
        double t = 0.0;
        std::size_t state = path.initial_state;
        for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
            integral += lg[state] * (path.jump_times[k] - t);
            t = path.jump_times[k];
            state = path.jump_targets[k];
        }
        integral += lg[state] * (horizon - t);
        stats.add(test_fn[state] - test_fn[path.initial_state] - integral);
    }
    return stats.report(rng, 0.0);
}

/// CSV rows (t_jump, new_state); the first row is the start time and initial state.
inline void write_path_csv(std::ostream& out, const JumpPath& path) {
    out << "t_jump,new_state\n";
    out << path.start << ',' << path.initial_state << '\n';
    char buf[64];
    for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.12g", path.jump_times[k]);
        out << buf << ',' << path.jump_targets[k] << '\n';
    }
}

} // namespace rsmerton
