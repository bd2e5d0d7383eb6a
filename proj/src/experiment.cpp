#include "zerodfl/experiment.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>

#include "zerodfl/comms.hpp"
#include "zerodfl/metrics.hpp"

namespace zerodfl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::vector<std::string> kSweepParameters = {"M_s", "S", "N", "C"};

template <typename T>
T get_field(const json& doc, const char* key, const char* type_name) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("spec field '") + key + "' must be " + type_name);
    }
}

// Remembers what a command created so a failure can undo it.
class OutputTracker {
public:
    void make_dir(const fs::path& dir) {
        std::vector<fs::path> missing;
        for (fs::path p = fs::absolute(dir); !p.empty() && !fs::exists(p); p = p.parent_path()) {
            missing.push_back(p);
            if (p == p.parent_path()) break;
        }
        fs::create_directories(dir);
        for (auto it = missing.rbegin(); it != missing.rend(); ++it) dirs_.push_back(*it);
    }
    void wrote(const fs::path& file) { files_.push_back(file); }
    void rollback() noexcept {
        std::error_code ec;
        for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
        for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove_all(*it, ec);
        files_.clear();
        dirs_.clear();
    }

private:
    std::vector<fs::path> files_;
    std::vector<fs::path> dirs_;
};

void write_text(OutputTracker& tracker, const fs::path& path, const std::string& text) {
    tracker.wrote(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ExportError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw ExportError("write failed for " + path.string());
}

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(quantize(v)) : ordered_json(nullptr); }

ordered_json opt_number(const std::optional<double>& v) { return v ? ordered_json(quantize(*v)) : ordered_json(nullptr); }

void throw_if_invalid(const std::vector<ConfigViolation>& violations) {
    if (!violations.empty()) throw ConfigError(violations);
}

void print_violations(const ConfigError& e, std::ostream& err) {
    if (e.violations().empty()) {
        err << "invalid config: " << e.what() << "\n";
        return;
    }
    err << "invalid config:\n";
    for (const auto& v : e.violations()) err << "  " << v.field << ": " << v.message << "\n";
}

ordered_json run_summary(const ExperimentSpec& spec, const FederationConfig& cfg, const SimulationResult& result) {
    const EvalReport& last = result.evaluations.back();
    ordered_json doc;
    doc["config"] = config_to_json(cfg);
    doc["scenario_kind"] = to_string(spec.scenario_kind);
    doc["label"] = cfg.shared_prompts == 0 ? "local_only" : (cfg.broadcast ? "broadcast" : "zerodfl");
    doc["rounds"] = cfg.rounds;
    doc["num_clients"] = cfg.num_clients;
    doc["final_round"] = last.round;
    doc["final_mean_accuracy"] = quantize(last.mean_accuracy);
    doc["final_std_accuracy"] = opt_number(last.std_accuracy);
    doc["first_std_accuracy"] = opt_number(result.evaluations.front().std_accuracy);
    doc["total_bytes"] = quantize(result.ledger.cumulative_bytes());
    doc["closed_form_bytes"] = quantize(zerodfl_total(cfg.comm_model, cfg, cfg.rounds));
    doc["message_count"] = result.ledger.message_count();
    CommModel raw = cfg.comm_model;
    raw.mode = CommMode::kRaw;
    doc["message_bytes"] = quantize(message_bytes(cfg));
    doc["raw_message_bytes"] = quantize(message_bytes(raw, cfg.shared_prompts, cfg.prompt_dim, cfg.prompts_per_client));
    doc["trainable_parameters"] = result.federation.trainable_parameter_count();
    return doc;
}

std::string trace_line(const PromptMessage& m) {
    ordered_json line;
    line["round"] = m.round;
    line["sender"] = m.sender.value;
    line["recipient"] = m.recipient.value;
    line["m_s"] = m.prompts.size();
    line["bytes"] = m.payload_bytes;
    return line.dump() + "\n";
}

struct RunOutput {
    SimulationResult result;
    std::string trace;
};

RunOutput run_simulation(const Scenario& scenario, const FederationConfig& cfg, const RunOptions& options) {
    RunOutput out;
    SimulationOptions sim;
    sim.parallel = options.parallel;
    if (options.trace) {
        sim.on_round = [&out](const RoundOutcome& outcome) {
            for (const auto& m : outcome.messages) out.trace += trace_line(m);
        };
    }
    out.result = simulate(scenario, cfg, sim);
    return out;
}

ordered_json write_run(OutputTracker& tracker, const fs::path& dir, const ExperimentSpec& spec,
                       const FederationConfig& cfg, const RunOutput& run, const RunOptions& options) {
    tracker.make_dir(dir);
    const SimulationResult& result = run.result;

    const ConvergenceSeries series = convergence_series(result.evaluations);
    tracker.wrote(dir / "eval_series.csv");
    export_series(series, cfg, dir / "eval_series.csv", ExportFormat::kCsv);
    tracker.wrote(dir / "ledger.csv");
    export_ledger(result.ledger, cfg, dir / "ledger.csv", ExportFormat::kCsv);
    tracker.wrote(dir / "loss_trace.csv");
    export_loss_trace(result.rounds, cfg, dir / "loss_trace.csv", ExportFormat::kCsv);

    ordered_json reports;
    reports["config"] = config_to_json(cfg);
    reports["reports"] = ordered_json::array();
    for (const auto& r : result.evaluations) reports["reports"].push_back(report_to_json(r));
    write_text(tracker, dir / "eval_reports.json", reports.dump(2) + "\n");

    if (options.trace) write_text(tracker, dir / "trace.jsonl", run.trace);

    ordered_json summary = run_summary(spec, cfg, result);
    write_text(tracker, dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

std::string cell_name(const std::string& parameter, int value) { return parameter + "_" + std::to_string(value); }

}  // namespace

ExperimentSpec spec_from_json(const json& doc, const FederationConfig& base) {
    if (!doc.is_object()) throw ConfigError("spec must be a JSON object");
    static const std::vector<std::string> known = {"config", "scenario_kind", "sweep", "output_dir", "baselines"};
    for (const auto& [key, value] : doc.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError(std::vector<ConfigViolation>{{key, "unknown spec key"}});
        }
    }

    ExperimentSpec spec;
    spec.config = doc.contains("config") ? config_from_json(doc.at("config"), base) : base;
    if (doc.contains("scenario_kind")) {
        try {
            spec.scenario_kind = parse_scenario_kind(get_field<std::string>(doc, "scenario_kind", "a string"));
        } catch (const ScenarioError& e) {
            throw ConfigError(std::vector<ConfigViolation>{{"scenario_kind", e.what()}});
        }
    }
    if (doc.contains("output_dir")) spec.output_dir = get_field<std::string>(doc, "output_dir", "a string");
    if (doc.contains("baselines")) {
        const json& b = doc.at("baselines");
        if (!b.is_object()) throw ConfigError("spec field 'baselines' must be an object");
        for (const auto& [key, value] : b.items()) {
            if (key != "local_only" && key != "broadcast") {
                throw ConfigError(std::vector<ConfigViolation>{{"baselines." + key, "unknown baseline"}});
            }
            if (!value.is_boolean()) {
                throw ConfigError(std::vector<ConfigViolation>{{"baselines." + key, "must be a boolean"}});
            }
        }
        spec.baselines.local_only = b.value("local_only", false);
        spec.baselines.broadcast = b.value("broadcast", false);
    }
    if (doc.contains("sweep") && !doc.at("sweep").is_null()) {
        const json& s = doc.at("sweep");
        if (!s.is_object()) throw ConfigError("spec field 'sweep' must be an object");
        SweepSpec sweep;
        sweep.parameter = get_field<std::string>(s, "parameter", "a string");
        if (std::find(kSweepParameters.begin(), kSweepParameters.end(), sweep.parameter) == kSweepParameters.end()) {
            throw ConfigError(std::vector<ConfigViolation>{
                {"sweep.parameter", "must be one of M_s, S, N, C (got '" + sweep.parameter + "')"}});
        }
        try {
            sweep.values = s.at("values").get<std::vector<int>>();
        } catch (const json::exception&) {
            throw ConfigError(std::vector<ConfigViolation>{{"sweep.values", "must be a list of integers"}});
        }
        if (sweep.values.empty()) {
            throw ConfigError(std::vector<ConfigViolation>{{"sweep.values", "must not be empty"}});
        }
        spec.sweep = std::move(sweep);
    }
    return spec;
}

ExperimentSpec load_spec(const fs::path& path, const FederationConfig& base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read spec file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("spec file " + path.string() + " is not valid JSON: " + e.what());
    }
    return spec_from_json(doc, base);
}

ordered_json spec_to_json(const ExperimentSpec& spec) {
    ordered_json doc;
    doc["config"] = config_to_json(spec.config);
    doc["scenario_kind"] = to_string(spec.scenario_kind);
    if (spec.sweep) doc["sweep"] = {{"parameter", spec.sweep->parameter}, {"values", spec.sweep->values}};
    doc["output_dir"] = spec.output_dir.generic_string();
    doc["baselines"] = {{"local_only", spec.baselines.local_only}, {"broadcast", spec.baselines.broadcast}};
    return doc;
}

FederationConfig apply_sweep_value(const FederationConfig& cfg, ScenarioKind kind, const std::string& parameter,
                                   int value) {
    FederationConfig out = cfg;
    if (parameter == "M_s") {
        out.shared_prompts = value;
    } else if (parameter == "S") {
        out.broadcast = false;
        out.recipients_per_round = value;
    } else if (parameter == "C") {
        out.num_clients = value;
    } else if (parameter == "N") {
        if (value < 1) throw ConfigError(std::vector<ConfigViolation>{{"classes_per_client", "must be >= 1"}});
        try {
            out = apply_params(out, shrink_clients(scenario_params_from_config(cfg, kind), value));
        } catch (const ScenarioError& e) {
            throw ConfigError(std::vector<ConfigViolation>{{"classes_per_client", e.what()}});
        }
    } else {
        throw ConfigError(std::vector<ConfigViolation>{{"sweep.parameter", "unknown parameter " + parameter}});
    }
    return out;
}

std::vector<ConfigViolation> validate_spec(const ExperimentSpec& spec) {
    std::vector<ConfigViolation> out = validate_config(spec.config);
    if (!out.empty() || !spec.sweep) return out;
    const auto& sweep = *spec.sweep;
    for (std::size_t i = 0; i < sweep.values.size(); ++i) {
        const std::string prefix = "sweep.values[" + std::to_string(i) + "] (" + sweep.parameter + "=" +
                                   std::to_string(sweep.values[i]) + ") ";
        try {
            const auto cell = apply_sweep_value(spec.config, spec.scenario_kind, sweep.parameter, sweep.values[i]);
            for (auto v : validate_config(cell)) out.push_back({prefix + v.field, v.message});
        } catch (const ConfigError& e) {
            for (const auto& v : e.violations()) out.push_back({prefix + v.field, v.message});
        }
    }
    return out;
}

int cmd_run(const ExperimentSpec& spec, const RunOptions& options, std::ostream& out, std::ostream& err) {
    try {
        throw_if_invalid(validate_config(spec.config));
        if (spec.baselines.broadcast && spec.config.num_clients < 2) {
            throw ConfigError(std::vector<ConfigViolation>{{"baselines.broadcast", "needs at least 2 clients"}});
        }
    } catch (const ConfigError& e) {
        print_violations(e, err);
        return kExitInvalidConfig;
    }

    OutputTracker tracker;
    try {
        const Scenario scenario = build_scenario(spec.scenario_kind, spec.config);

        // Simulate everything before touching the output directory.
        const RunOutput main_run = run_simulation(scenario, spec.config, options);
        std::vector<std::pair<std::string, FederationConfig>> baseline_cfgs;
        if (spec.baselines.local_only) {
            FederationConfig c = spec.config;
            c.shared_prompts = 0;
            baseline_cfgs.emplace_back("local_only", c);
        }
        if (spec.baselines.broadcast) {
            FederationConfig c = spec.config;
            c.broadcast = true;
            baseline_cfgs.emplace_back("broadcast", c);
        }
        std::vector<RunOutput> baseline_runs;
        for (const auto& [name, c] : baseline_cfgs) baseline_runs.push_back(run_simulation(scenario, c, options));

        ordered_json summary = write_run(tracker, spec.output_dir, spec, spec.config, main_run, options);
        for (std::size_t i = 0; i < baseline_runs.size(); ++i) {
            const auto& [name, c] = baseline_cfgs[i];
            ordered_json b = write_run(tracker, spec.output_dir / ("baseline_" + name), spec, c, baseline_runs[i],
                                       options);
            summary["baselines"][name] = {{"final_mean_accuracy", b["final_mean_accuracy"]},
                                          {"final_std_accuracy", b["final_std_accuracy"]},
                                          {"total_bytes", b["total_bytes"]}};
        }
        if (!baseline_runs.empty()) write_text(tracker, spec.output_dir / "summary.json", summary.dump(2) + "\n");

        out << "final mean accuracy " << format_number(summary["final_mean_accuracy"].get<double>());
        if (!summary["final_std_accuracy"].is_null()) {
            out << ", std " << format_number(summary["final_std_accuracy"].get<double>());
        }
        out << ", total bytes " << format_number(summary["total_bytes"].get<double>()) << "\n";
        out << "results written to " << spec.output_dir.string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        tracker.rollback();
        print_violations(e, err);
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        tracker.rollback();
        err << "run failed: " << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_sweep(const ExperimentSpec& spec, const RunOptions& options, std::ostream& out, std::ostream& err) {
    if (!spec.sweep) {
        err << "invalid config:\n  sweep: required for the sweep command\n";
        return kExitInvalidConfig;
    }
    if (auto violations = validate_spec(spec); !violations.empty()) {
        print_violations(ConfigError(std::move(violations)), err);
        return kExitInvalidConfig;
    }

    const SweepSpec& sweep = *spec.sweep;
    struct Cell {
        int value = 0;
        FederationConfig cfg;
        std::optional<RunOutput> run;
        std::string error;
    };
    std::vector<Cell> cells;
    for (int v : sweep.values) cells.push_back(Cell{v, apply_sweep_value(spec.config, spec.scenario_kind, sweep.parameter, v), {}, {}});

    // M_s and S cells share one scenario; N and C change the client layout.
    const bool shared_scenario = sweep.parameter == "M_s" || sweep.parameter == "S";
    std::optional<Scenario> common;
    try {
        if (shared_scenario) common.emplace(build_scenario(spec.scenario_kind, spec.config));
    } catch (const std::exception& e) {
        err << "sweep failed: " << e.what() << "\n";
        return kExitFailure;
    }

    RunOptions cell_options = options;
    cell_options.parallel = false;
    std::vector<std::future<void>> jobs;
    for (auto& cell : cells) {
        jobs.push_back(std::async(std::launch::async, [&cell, &common, &spec, &sweep, cell_options] {
            try {
                if (common) {
                    cell.run = run_simulation(*common, cell.cfg, cell_options);
                } else {
                    const ScenarioParams params =
                        sweep.parameter == "N"
                            ? shrink_clients(scenario_params_from_config(spec.config, spec.scenario_kind), cell.value)
                            : scenario_params_from_config(cell.cfg, spec.scenario_kind);
                    const Scenario scenario = build_scenario(params, cell.cfg);
                    cell.run = run_simulation(scenario, cell.cfg, cell_options);
                }
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }));
    }
    for (auto& job : jobs) job.get();

    OutputTracker tracker;
    try {
        tracker.make_dir(spec.output_dir);
        std::string table = "# config: " + config_to_json(spec.config).dump() + "\n";
        table += "parameter,value,label,status,num_clients,mean_accuracy,std_accuracy,total_bytes\n";
        bool any_failed = false;
        for (const auto& cell : cells) {
            const std::string label = cell.cfg.shared_prompts == 0 ? "local_only" : "";
            table += sweep.parameter + "," + std::to_string(cell.value) + "," + label + ",";
            if (!cell.run) {
                any_failed = true;
                std::string reason = cell.error;
                std::replace(reason.begin(), reason.end(), ',', ';');
                std::replace(reason.begin(), reason.end(), '\n', ' ');
                table += "failed: " + reason + "," + std::to_string(cell.cfg.num_clients) + ",,,\n";
                out << sweep.parameter << "=" << cell.value << " failed: " << cell.error << "\n";
                continue;
            }
            const auto& last = cell.run->result.evaluations.back();
            table += "ok," + std::to_string(cell.cfg.num_clients) + "," + format_number(last.mean_accuracy) + "," +
                     (last.std_accuracy ? format_number(*last.std_accuracy) : std::string{}) + "," +
                     format_number(cell.run->result.ledger.cumulative_bytes()) + "\n";
            write_run(tracker, spec.output_dir / cell_name(sweep.parameter, cell.value), spec, cell.cfg, *cell.run,
                      options);
            out << sweep.parameter << "=" << cell.value << (label.empty() ? "" : " (local only)") << ": accuracy "
                << format_number(last.mean_accuracy) << ", bytes "
                << format_number(cell.run->result.ledger.cumulative_bytes()) << "\n";
        }
        write_text(tracker, spec.output_dir / "sweep.csv", table);
        return any_failed ? kExitFailure : kExitOk;
    } catch (const std::exception& e) {
        tracker.rollback();
        err << "sweep failed: " << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_comm(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
    std::vector<ConfigViolation> violations;
    for (auto& v : validate_config(spec.config)) {
        if (v.field == "rounds" && spec.config.rounds == 0) continue;
        violations.push_back(std::move(v));
    }
    if (spec.config.comm_model.mode != CommMode::kCalibrated) {
        violations.push_back({"comm_model.mode", "the comm table needs the calibrated model"});
    }
    if (!violations.empty()) {
        print_violations(ConfigError(std::move(violations)), err);
        return kExitInvalidConfig;
    }

    FederationConfig reference = paper_profile();
    reference.num_clients = static_cast<int>(kCalibrationClients);
    reference.rounds = static_cast<int>(kCalibrationRounds);
    reference.comm_model = CommModel{};

    OutputTracker tracker;
    try {
        tracker.make_dir(spec.output_dir);
        ordered_json summary;
        summary["config"] = config_to_json(spec.config);
        const std::pair<const char*, const FederationConfig*> tables[] = {{"reference", &reference},
                                                                          {"config", &spec.config}};
        for (const auto& [name, cfg] : tables) {
            const CommTable table = comm_table(*cfg, cfg->rounds);
            const fs::path path = spec.output_dir / (std::string("comm_") + name + ".csv");
            tracker.wrote(path);
            export_comm_table(table, *cfg, path, ExportFormat::kCsv);

            const CommTableRow& last = table.rows.back();
            CommModel raw = cfg->comm_model;
            raw.mode = CommMode::kRaw;
            ordered_json entry;
            entry["num_clients"] = cfg->num_clients;
            entry["rounds"] = cfg->rounds;
            entry["fedtpg_bytes"] = quantize(last.fedtpg_cum_bytes);
            entry["zerodfl_worst_bytes"] = quantize(last.zerodfl_worst_cum_bytes);
            entry["zerodfl_s5_bytes"] = quantize(last.zerodfl_s5_cum_bytes);
            entry["zerodfl_best_bytes"] = quantize(last.zerodfl_best_cum_bytes);
            entry["reduction_worst"] = number_or_null(table.reduction_worst);
            entry["reduction_s5"] = number_or_null(table.reduction_s5);
            entry["reduction_best"] = number_or_null(table.reduction_best);
            entry["calibrated_prompt_set_bytes"] =
                quantize(message_bytes(cfg->comm_model, cfg->prompts_per_client, cfg->prompt_dim, cfg->prompts_per_client));
            entry["raw_prompt_set_bytes"] =
                quantize(message_bytes(raw, cfg->prompts_per_client, cfg->prompt_dim, cfg->prompts_per_client));
            summary[name] = std::move(entry);

            out << name << " (C=" << cfg->num_clients << ", R=" << cfg->rounds << "): FedTPG "
                << format_number(last.fedtpg_cum_bytes) << " B, worst " << format_number(last.zerodfl_worst_cum_bytes)
                << " B, S=5 " << format_number(last.zerodfl_s5_cum_bytes) << " B, best "
                << format_number(last.zerodfl_best_cum_bytes) << " B, reduction at S=5 "
                << format_number(table.reduction_s5) << "x\n";
        }
        write_text(tracker, spec.output_dir / "comm_summary.json", summary.dump(2) + "\n");
        return kExitOk;
    } catch (const std::exception& e) {
        tracker.rollback();
        err << "comm failed: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace zerodfl
