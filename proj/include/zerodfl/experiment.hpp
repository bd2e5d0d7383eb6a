#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zerodfl/config.hpp"
#include "zerodfl/data.hpp"
#include "zerodfl/simulation.hpp"

namespace zerodfl {

struct SweepSpec {
    /// One of "M_s", "S", "N", "C".
    std::string parameter;
    std::vector<int> values;
};

struct Baselines {
    bool local_only = false;
    bool broadcast = false;
};

struct ExperimentSpec {
    FederationConfig config;
    ScenarioKind scenario_kind = ScenarioKind::kHomogeneous;
    std::optional<SweepSpec> sweep;
    std::filesystem::path output_dir = "out";
    Baselines baselines;
};

/// Keys: config (object, applied over `base`), scenario_kind, sweep
/// {parameter, values}, output_dir, baselines {local_only, broadcast}.
/// Structural problems raise ConfigError.
ExperimentSpec spec_from_json(const nlohmann::json& doc, const FederationConfig& base = desk_profile());
ExperimentSpec load_spec(const std::filesystem::path& path, const FederationConfig& base = desk_profile());
nlohmann::ordered_json spec_to_json(const ExperimentSpec& spec);

/// Config violations plus one entry per sweep value that would produce an
/// invalid config.
std::vector<ConfigViolation> validate_spec(const ExperimentSpec& spec);

/// `cfg` with the swept parameter set to `value`. N re-shards the same class
/// universe, so it changes C as well.
FederationConfig apply_sweep_value(const FederationConfig& cfg, ScenarioKind kind, const std::string& parameter,
                                   int value);

struct RunOptions {
    /// Also write trace.jsonl, one line per message.
    bool trace = false;
    /// Per-client work on worker threads inside each run.
    bool parallel = true;
};

// Exit codes: 0 success, 1 runtime failure, 2 invalid spec or config.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidConfig = 2;

/// Writes summary.json, eval_series.csv, eval_reports.json, ledger.csv,
/// loss_trace.csv (and trace.jsonl) to the output directory, plus one
/// subdirectory per requested baseline. Nothing is left behind on failure.
int cmd_run(const ExperimentSpec& spec, const RunOptions& options, std::ostream& out, std::ostream& err);

/// One run per sweep value on a shared scenario seed; writes sweep.csv and a
/// cell directory per value. Failed cells are marked and the sweep goes on.
int cmd_sweep(const ExperimentSpec& spec, const RunOptions& options, std::ostream& out, std::ostream& err);

/// Cumulative communication tables at the reference scale (C = 59, R = 500)
/// and for the experiment's own config, with reduction factors.
int cmd_comm(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

}  // namespace zerodfl
