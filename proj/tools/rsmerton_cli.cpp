// rsmerton_cli: solve, validate and reproduce the two-regime experiment.
//
//   rsmerton_cli solve      --config cfg.json [--out DIR] [--grid N]
//   rsmerton_cli validate   --config cfg.json [--out DIR] [--grid N] [--paths N] [--seed N]
//   rsmerton_cli fig1       [--out DIR] [--grid N]
//   rsmerton_cli slope-cert --config cfg.json [--out DIR] [--grid N]
//
// Exit status: 0 ok, 1 a requested validation failed, 2 bad config or usage.

#include "rsmerton/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rsmerton;

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> grid;
};

void add_common(CLI::App* cmd, Overrides& o, bool needs_config, bool randomized) {
    auto* c = cmd->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    cmd->add_option("--out", o.out, "output directory (overrides config)");
    cmd->add_option("--grid", o.grid, "ODE grid steps")->check(CLI::Range(16, 1 << 20));
    if (randomized) {
        cmd->add_option("--seed", o.seed, "master seed");
        cmd->add_option("--paths", o.paths, "Monte-Carlo paths")->check(CLI::Range(1000, 100000000));
    }
}

ExperimentConfig load(const Overrides& o) {
    ExperimentConfig cfg = load_experiment_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.paths) cfg.paths = *o.paths;
    if (o.grid) cfg.grid = *o.grid;
    return cfg;
}

int finish(const RunResult& r) {
    for (const auto& f : r.written) std::cout << f.string() << "\n";
    if (r.exit_status != 0) std::cerr << "validation failed, see report\n";
    return r.exit_status;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equilibrium investment-consumption policies under regime switching"};
    app.require_subcommand(1);

    Overrides o;
    auto* solve = app.add_subcommand("solve", "solve each gamma and write consumption curves");
    add_common(solve, o, true, false);
    auto* validate = app.add_subcommand("validate", "run the config's validations (all of them if none listed)");
    add_common(validate, o, true, true);
    auto* fig1 = app.add_subcommand("fig1", "reproduce the four-gamma two-regime experiment");
    add_common(fig1, o, false, false);
    auto* slope = app.add_subcommand("slope-cert", "slope certificate over the perturbation menu");
    add_common(slope, o, true, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fig1->parsed()) {
            return finish(reproduce_fig1(true, o.out.empty() ? "out" : o.out, o.grid.value_or(2048)));
        }
        ExperimentConfig cfg = load(o);
        if (solve->parsed()) {
            cfg.outputs = ExperimentOutputs{};
            cfg.seeded = false;
        } else if (slope->parsed()) {
            cfg.outputs = ExperimentOutputs{true, false, false, true};
            cfg.seeded = false;
        } else if (!cfg.outputs.any_validation()) {
            cfg.outputs = ExperimentOutputs{true, true, true, true};
        }
        return finish(run(cfg));
    } catch (const SpecError& e) {
        for (const auto& v : e.violations()) std::cerr << "config error: " << v << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
