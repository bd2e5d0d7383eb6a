#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "zerodfl/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Decentralized federated prompt learning simulator"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out_dir;
    std::string profile = "desk";
    bool trace = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--spec", spec_path, "Experiment spec (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "Output directory (overrides the experiment spec)");
        cmd->add_option("--profile", profile, "Base parameter profile")
            ->check(CLI::IsMember({"desk", "paper"}));
    };
    CLI::App* run = app.add_subcommand("run", "Run one experiment");
    CLI::App* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
    CLI::App* comm = app.add_subcommand("comm", "Write the cumulative communication tables");
    for (CLI::App* cmd : {run, sweep, comm}) add_common(cmd);
    run->add_flag("--trace", trace, "Write trace.jsonl with one record per message");
    sweep->add_flag("--trace", trace, "Write trace.jsonl in every cell");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : zerodfl::kExitInvalidConfig;
    }

    const zerodfl::FederationConfig base =
        profile == "paper" ? zerodfl::paper_profile() : zerodfl::desk_profile();
    zerodfl::ExperimentSpec spec;
    try {
        if (spec_path.empty()) {
            spec.config = base;
        } else {
            spec = zerodfl::load_spec(spec_path, base);
        }
    } catch (const zerodfl::ConfigError& e) {
        std::cerr << "invalid config:\n";
        if (e.violations().empty()) std::cerr << "  " << e.what() << "\n";
        for (const auto& v : e.violations()) std::cerr << "  " << v.field << ": " << v.message << "\n";
        return zerodfl::kExitInvalidConfig;
    }
    if (!out_dir.empty()) spec.output_dir = out_dir;

    zerodfl::RunOptions options;
    options.trace = trace;
    if (*run) return zerodfl::cmd_run(spec, options, std::cout, std::cerr);
    if (*sweep) return zerodfl::cmd_sweep(spec, options, std::cout, std::cerr);
    return zerodfl::cmd_comm(spec, std::cout, std::cerr);
}
