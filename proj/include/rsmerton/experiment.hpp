#pragma once

// Batch runs: load a JSON experiment config, solve each gamma, write curve
// CSVs and a JSON validation report.

#include "rsmerton/equilibrium.hpp"
#include "rsmerton/simulate.hpp"
#include "rsmerton/spec_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rsmerton {

inline constexpr const char* kSolverVersion = "rk4-halving/1";
inline constexpr std::uint64_t kDefaultSeed = 20261016;

struct ExperimentOutputs {
    bool curves = true;
    bool fixed_point = false;  // Picard check (power branch only)
    bool mc = false;           // estimate_J vs value_at z-scores
    bool slope = false;        // slope certificate over the perturbation menu

    bool any_validation() const { return fixed_point || mc || slope; }
};

struct ExperimentConfig {
    MarketSpec spec;
    std::vector<double> gammas;  // one run per entry; defaults to {spec.gamma}
    ExperimentOutputs outputs;
    std::size_t grid = 2048;
    std::size_t paths = 100000;
    std::uint64_t seed = kDefaultSeed;
    bool seeded = true;  // false: no randomness requested, metadata says seed=none
    std::string output_dir = "out";
};

/// Throws SpecError listing every problem with its field path.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    std::vector<std::string> errors;
    detail::JsonReader rd(errors);
    if (!j.is_object()) throw SpecError({"config: expected an object"});
    rd.reject_unknown(j, "", {"spec", "gammas", "outputs", "grid", "paths", "seed", "output_dir"});

    ExperimentConfig cfg;
    rd.vector(j, "", "gammas", cfg.gammas, false);

    if (!j.contains("spec")) {
        errors.push_back("spec: missing");
    } else {
        nlohmann::json sj = j.at("spec");
        if (sj.is_object() && !sj.contains("gamma") && !cfg.gammas.empty()) sj["gamma"] = cfg.gammas.front();
        try {
            cfg.spec = market_spec_from_json(sj, "spec");
        } catch (const SpecError& e) {
            errors.insert(errors.end(), e.violations().begin(), e.violations().end());
        }
    }
    if (cfg.gammas.empty()) cfg.gammas.push_back(cfg.spec.gamma);
    for (std::size_t k = 0; k < cfg.gammas.size(); ++k)
        if (!(cfg.gammas[k] < 1.0))
            errors.push_back("gammas[" + std::to_string(k) + "]: must be < 1");

    if (j.contains("outputs")) {
        const auto& o = j.at("outputs");
        cfg.outputs.curves = false;
        if (!o.is_array()) {
            errors.push_back("outputs: expected an array of names");
        } else {
            for (std::size_t k = 0; k < o.size(); ++k) {
                const std::string where = "outputs[" + std::to_string(k) + "]";
                if (!o[k].is_string()) {
                    errors.push_back(where + ": expected a string");
                    continue;
                }
                const auto name = o[k].get<std::string>();
                if (name == "curves") cfg.outputs.curves = true;
                else if (name == "fixed_point") cfg.outputs.fixed_point = true;
                else if (name == "mc") cfg.outputs.mc = true;
                else if (name == "slope") cfg.outputs.slope = true;
                else errors.push_back(where + ": unknown output '" + name + "'");
            }
        }
    }

    std::uint64_t n = 0;
    if (rd.count(j, "", "grid", n, false)) {
        if (n < 16) errors.push_back("grid: must be >= 16");
        cfg.grid = n;
    }
    if (rd.count(j, "", "paths", n, false)) {
        if (n < 1000) errors.push_back("paths: must be >= 1000");
        cfg.paths = n;
    }
    rd.count(j, "", "seed", cfg.seed, false);
    if (j.contains("output_dir")) {
        if (j.at("output_dir").is_string()) cfg.output_dir = j.at("output_dir").get<std::string>();
        else errors.push_back("output_dir: expected a string");
    }
    if (!errors.empty()) throw SpecError(errors);
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot read config " + file);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw SpecError({"config: " + std::string(e.what())});
    }
    return experiment_config_from_json(j);
}

namespace detail {

inline std::string gamma_tag(double g) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", g);
    return buf;
}

} // namespace detail

inline std::string curve_file_name(double gamma) { return "curve_gamma_" + detail::gamma_tag(gamma) + ".csv"; }

/// `# key=value` line, header `t,C0,...`, one row per grid time.
inline void write_curve_csv(std::ostream& out, const EquilibriumSolution& sol, const std::string& metadata) {
    const auto curve = consumption_curve(sol);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < sol.spec.states; ++i) names.push_back("C" + std::to_string(i));
    write_table_csv(out, curve, names, metadata);
}

/// Sample (t, i) points for the slope certificate.
inline std::vector<std::pair<double, std::size_t>> slope_points(const MarketSpec& spec) {
    const double fr[] = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<std::pair<double, std::size_t>> out;
    for (std::size_t k = 0; k < 5; ++k) out.emplace_back(fr[k] * spec.horizon, k % spec.states);
    return out;
}

struct GammaRun {
    double gamma = 0.0;
    bool ok = true;
    nlohmann::json report;
    std::optional<EquilibriumSolution> solution;
};

/// One gamma: solve, optionally validate. Never throws for solver or domain
/// problems; they land in report["error"].
inline GammaRun run_gamma(const ExperimentConfig& cfg, std::size_t index) {
    GammaRun out;
    out.gamma = cfg.gammas[index];
    auto& rep = out.report;
    rep["gamma"] = out.gamma;
    MarketSpec spec = cfg.spec;
    spec.gamma = out.gamma;
    const RngSpec base{cfg.seed, index};
    try {
        SolveOptions so;
        so.n_steps = cfg.grid;
        out.solution = solve_equilibrium(spec, so);
        const auto& sol = *out.solution;
        rep["branch"] = sol.is_log() ? "log" : "power";
        rep["residual"] = sol.residual;
        rep["grid_points"] = sol.table.size();

        bool ordered = true;
        double terminal_gap = 0.0;
        const std::size_t last = sol.table.size() - 1;
        for (std::size_t k = 0; k < last; ++k)
            for (std::size_t i = 0; i + 1 < spec.states; ++i)
                if (spec.rho[i] > spec.rho[i + 1] && !(sol.consumption_rate_at(k, i) > sol.consumption_rate_at(k, i + 1)))
                    ordered = false;
        for (std::size_t i = 0; i < spec.states; ++i)
            terminal_gap = std::max(terminal_gap, std::abs(sol.consumption_rate_at(last, i) - 1.0));
        rep["ordering_by_discount"] = ordered;
        rep["terminal_max_abs_error"] = terminal_gap;

        if (cfg.outputs.fixed_point) {
            auto& fp = rep["fixed_point"];
            if (sol.is_log()) {
                fp["skipped"] = "log branch";
            } else {
                const auto est = picard_apply(spec, sol.table, cfg.paths, base.substream(1));
                // worst point measured against its own tolerance
                double worst_ratio = 0.0;
                nlohmann::json at;
                for (std::size_t e = 0; e < est.values.size(); ++e)
                    for (std::size_t i = 0; i < spec.states; ++i) {
                        const double t = est.values.grid[e];
                        const double d = std::abs(est.values.at(e, i) - sol.g(t, i));
                        const double tol = std::max(3 * est.std_errors.at(e, i), 2e-3);
                        if (d / tol > worst_ratio) {
                            worst_ratio = d / tol;
                            at = {{"t", t}, {"state", i}, {"abs_diff", d}, {"tolerance", tol}};
                        }
                    }
                const bool pass = worst_ratio <= 1.0;
                fp["worst"] = at;
                fp["worst_ratio"] = worst_ratio;
                fp["eval_points"] = est.values.size();
                fp["pass"] = pass;
                out.ok = out.ok && pass;
            }
        }

        if (cfg.outputs.mc) {
            const auto strat = ProportionalStrategy::equilibrium(PolicyField(sol));
            nlohmann::json rows = nlohmann::json::array();
            bool pass = true;
            for (std::size_t i = 0; i < spec.states; ++i) {
                MCReport r = estimate_J(strat, 0.0, 1.0, i, spec, cfg.paths, base.substream(2 + i));
                r.target = value_at(sol, 0.0, 1.0, i);
                const double z = r.z_score().value_or(0.0);
                if (!(std::abs(z) < 3.0)) pass = false;
                auto row = to_json(r);
                row["state"] = i;
                rows.push_back(row);
            }
            rep["mc"] = {{"rows", rows}, {"pass", pass}};
            out.ok = out.ok && pass;
        }

        if (cfg.outputs.slope) {
            const PolicyField field(sol);
            const auto eq = ProportionalStrategy::equilibrium(field);
            nlohmann::json rows = nlohmann::json::array();
            bool pass = true;
            double worst = INFINITY;
            for (const auto& [t, i] : slope_points(spec)) {
                for (const auto& p : perturbation_menu()) {
                    const auto res =
                        equilibrium_slope(field, t, 1.0, i, ProportionalStrategy::scaled(eq, p.invest_scale, p.consume_scale),
                                          default_epsilons(t, spec.horizon), so);
                    worst = std::min(worst, res.extrapolated);
                    if (res.extrapolated < -1e-6) pass = false;
                    rows.push_back({{"t", t}, {"state", i}, {"perturbation", p.name}, {"slopes", res.slopes},
                                    {"extrapolated", res.extrapolated}});
                }
            }
            rep["slope"] = {{"rows", rows}, {"min_extrapolated", worst}, {"pass", pass}};
            out.ok = out.ok && pass;
        }
    } catch (const std::exception& e) {
        rep["error"] = e.what();
        out.ok = false;
        out.solution.reset();
    }
    rep["ok"] = out.ok;
    return out;
}

struct RunResult {
    int exit_status = 0;  // 0 all good, 1 a validation or per-gamma run failed
    nlohmann::json report;
    std::vector<std::filesystem::path> written;
};

inline std::string run_metadata(const ExperimentConfig& cfg, const MarketSpec& spec) {
    return "spec_hash=" + spec_hash(spec) + " seed=" + (cfg.seeded ? std::to_string(cfg.seed) : "none") +
           " grid=" + std::to_string(cfg.grid) + " solver=" + kSolverVersion + " gamma=" + detail::gamma_tag(spec.gamma);
}

/// Runs every gamma (concurrently), writes curve CSVs and report.json into
/// cfg.output_dir.
inline RunResult run(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    std::vector<std::future<GammaRun>> jobs;
    for (std::size_t k = 0; k < cfg.gammas.size(); ++k)
        jobs.push_back(std::async(std::launch::async, [&cfg, k] { return run_gamma(cfg, k); }));

    RunResult res;
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        GammaRun gr = jobs[k].get();
        if (gr.solution && cfg.outputs.curves) {
            const fs::path file = fs::path(cfg.output_dir) / curve_file_name(gr.gamma);
            std::ofstream out(file, std::ios::binary);
            if (!out) throw Error("cannot write " + file.string());
            write_curve_csv(out, *gr.solution, run_metadata(cfg, gr.solution->spec));
            res.written.push_back(file);
            gr.report["curve_csv"] = file.filename().string();
        }
        if (!gr.ok) res.exit_status = 1;
        runs.push_back(std::move(gr.report));
    }

    MarketSpec base = cfg.spec;
    res.report = {{"spec_hash", spec_hash(base)},
                  {"seed", cfg.seeded ? nlohmann::json(cfg.seed) : nlohmann::json()},
                  {"rng_algorithm", kRngAlgorithm},
                  {"grid", cfg.grid},
                  {"paths", cfg.paths},
                  {"solver", kSolverVersion},
                  {"runs", runs},
                  {"ok", res.exit_status == 0}};
    const fs::path rfile = fs::path(cfg.output_dir) / "report.json";
    std::ofstream rout(rfile, std::ios::binary);
    if (!rout) throw Error("cannot write " + rfile.string());
    rout << res.report.dump(2) << "\n";
    res.written.push_back(rfile);
    return res;
}

// ---------------------------------------------------------------------------
// Four-gamma experiment

/// The built-in four-gamma config over the two-regime market.
inline ExperimentConfig fig1_config(const std::string& output_dir, std::size_t grid = 2048) {
    ExperimentConfig cfg;
    cfg.spec = fig1_market(-1.0);
    cfg.gammas = {0.7, 0.0, -0.5, -1.0};
    cfg.grid = grid;
    cfg.output_dir = output_dir;
    return cfg;
}

/// Writes one CSV per gamma plus fig1_summary.json. Exit status is nonzero
/// iff the ordering or terminal checks fail; the monotonicity and cross-gamma
/// gap observations are reported only.
inline RunResult reproduce_fig1(bool seedless, const std::string& output_dir, std::size_t grid = 2048) {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = fig1_config(output_dir, grid);
    cfg.seeded = !seedless;
    RunResult res = run(cfg);

    nlohmann::json per_gamma = nlohmann::json::array();
    bool ordering = true, terminal = true;
    std::optional<double> gap_07, gap_m1;
    std::optional<bool> nonincreasing_07;
    for (std::size_t k = 0; k < cfg.gammas.size(); ++k) {
        const auto& r = res.report["runs"][k];
        const double g = cfg.gammas[k];
        nlohmann::json row = {{"gamma", g}};
        if (r.contains("error")) {
            row["error"] = r["error"];
            ordering = terminal = false;
            per_gamma.push_back(row);
            continue;
        }
        row["ordering_pass"] = r["ordering_by_discount"];
        row["terminal_max_abs_error"] = r["terminal_max_abs_error"];
        row["terminal_pass"] = r["terminal_max_abs_error"].get<double>() <= 1e-6;
        ordering = ordering && r["ordering_by_discount"].get<bool>();
        terminal = terminal && row["terminal_pass"].get<bool>();

        // re-solve is cheap and keeps run() free of fig1-specific state
        MarketSpec spec = cfg.spec;
        spec.gamma = g;
        SolveOptions so;
        so.n_steps = grid;
        const auto sol = solve_equilibrium(spec, so);
        double gap = 0.0;
        bool nonincreasing = true;
        for (std::size_t j = 0; j + 1 < sol.table.size(); ++j) {
            gap = std::max(gap, sol.consumption_rate_at(j, 0) - sol.consumption_rate_at(j, 1));
            if (j + 2 < sol.table.size())
                for (std::size_t i = 0; i < 2; ++i)
                    if (sol.consumption_rate_at(j + 1, i) > sol.consumption_rate_at(j, i)) nonincreasing = false;
        }
        row["max_state_gap"] = gap;
        row["nonincreasing_in_t"] = nonincreasing;
        row["C0_at_0"] = sol.consumption_rate_at(0, 0);
        row["C1_at_0"] = sol.consumption_rate_at(0, 1);
        if (g == 0.7) {
            gap_07 = gap;
            nonincreasing_07 = nonincreasing;
        }
        if (g == -1.0) gap_m1 = gap;
        per_gamma.push_back(row);
    }

    nlohmann::json summary = {{"spec_hash", res.report["spec_hash"]},
                              {"grid", grid},
                              {"solver", kSolverVersion},
                              {"gammas", per_gamma},
                              {"ordering_check_pass", ordering},
                              {"terminal_check_pass", terminal}};
    summary["reported"]["gamma_0.7_nonincreasing"] = nonincreasing_07 ? nlohmann::json(*nonincreasing_07) : nlohmann::json();
    if (gap_07 && gap_m1) {
        summary["reported"]["gap_gamma_0.7"] = *gap_07;
        summary["reported"]["gap_gamma_-1"] = *gap_m1;
        summary["reported"]["gap_smaller_at_gamma_0.7"] = *gap_07 < *gap_m1;
    }

    const fs::path sfile = fs::path(output_dir) / "fig1_summary.json";
    std::ofstream out(sfile, std::ios::binary);
    if (!out) throw Error("cannot write " + sfile.string());
    out << summary.dump(2) << "\n";
    res.written.push_back(sfile);
    res.report = summary;
    res.exit_status = (ordering && terminal) ? 0 : 1;
    return res;
}

} // namespace rsmerton
