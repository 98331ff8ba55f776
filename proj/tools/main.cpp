#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <omp.h>

#include "app/commands.hpp"

using namespace selfaffine;

int main(int argc, char** argv) {
    CLI::App app{"Self-affine attractors: open set condition, pseudo norms and Hausdorff measure brackets"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
    app.add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "override run.seed");
    app.add_option("--threads", threads, "cap on worker threads (results do not depend on it)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--out", out, "output directory (default run.out)");

    app.add_subcommand("check-osc", "decide the open set condition; exit 0 holds, 1 fails, 2 unknown");
    app.add_subcommand("measure", "bracket the pseudo Hausdorff measure of the attractor");
    app.add_subcommand("render", "attractor cloud CSV and PGM/PPM raster");
    app.add_subcommand("norm-probe", "evaluate the pseudo norm on points and report its constants");
    app.add_subcommand("density", "density sweep, local density trace, dimensions and convolution check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    cli::RunConfig cfg;
    try {
        cfg = cli::load_config(config_path);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return cli::exit_code_for(e.code());
    }
    if (seed) {
        cfg.seed = *seed;
        cfg.norm.seed = *seed;
    }
    if (threads) cfg.threads = *threads;
    if (out) cfg.out = *out;
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    std::cout << "config_hash " << cli::config_hash(cfg) << "\n";
    return cli::run_guarded(command, cfg, std::cout, std::cerr);
}
