#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zerodfl/comms.hpp"
#include "zerodfl/config.hpp"
#include "zerodfl/data.hpp"
#include "zerodfl/protocol.hpp"
#include "zerodfl/types.hpp"

namespace zerodfl {

struct DomainSummary {
    int domain = 0;
    std::vector<ClientId> clients;
    double mean_accuracy = 0.0;
    /// Absent for a single-client domain.
    std::optional<double> std_accuracy;

    friend bool operator==(const DomainSummary&, const DomainSummary&) = default;
};

/// Zero-shot accuracy of every client after `round` completed rounds.
struct EvalReport {
    int round = 0;
    std::map<ClientId, double> per_client_accuracy;
    std::map<ClientId, int> client_domain;
    double mean_accuracy = 0.0;
    /// Population std over all clients; absent with fewer than two clients.
    std::optional<double> std_accuracy;
    std::vector<DomainSummary> per_domain;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct MeanAndStd {
    double mean = 0.0;
    std::optional<double> std;
};

/// Arithmetic mean and population std. The std is exactly 0 when all values
/// are equal and absent for a single value. Throws on empty input.
MeanAndStd mean_and_std(std::span<const double> values);

/// Builds the aggregates from per-client accuracies and domains.
EvalReport make_report(int round, std::map<ClientId, double> accuracy, std::map<ClientId, int> domains);

/// Every client evaluated on the unseen-class test set of its own domain.
/// Reads the federation only.
EvalReport evaluate_federation(const Federation& federation, const Scenario& scenario,
                               const FederationConfig& cfg, int round);

struct SeriesPoint {
    int round = 0;
    double mean_accuracy = 0.0;
    std::optional<double> std_accuracy;

    friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

using ConvergenceSeries = std::vector<SeriesPoint>;

/// Throws std::invalid_argument for an empty or unordered list.
ConvergenceSeries convergence_series(std::span<const EvalReport> reports);

/// True when both ends have a std and the last is strictly below the first.
bool std_decreased(const ConvergenceSeries& series);

enum class ExportFormat { kCsv, kJson };

/// "csv" or "json"; anything else throws std::invalid_argument.
ExportFormat parse_export_format(const std::string& text);

class ExportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rounds to 9 significant digits, the precision used in every export.
double quantize(double value);
std::string format_number(double value);

// Every file starts with the generating config: a "# config: {...}" line for
// CSV, a "config" key for JSON.
void export_report(const EvalReport& report, const FederationConfig& cfg, const std::filesystem::path& path,
                   ExportFormat format);
EvalReport import_report(const std::filesystem::path& path, ExportFormat format);

void export_series(const ConvergenceSeries& series, const FederationConfig& cfg,
                   const std::filesystem::path& path, ExportFormat format);
ConvergenceSeries import_series(const std::filesystem::path& path, ExportFormat format);

/// Columns: round, messages, bytes, cumulative_bytes.
void export_ledger(const CommLedger& ledger, const FederationConfig& cfg, const std::filesystem::path& path,
                   ExportFormat format);

/// Columns: round, client, loss.
void export_loss_trace(std::span<const RoundMetrics> rounds, const FederationConfig& cfg,
                       const std::filesystem::path& path, ExportFormat format);

/// Columns: round, fedtpg_cum_bytes, zerodfl_worst_cum_bytes,
/// zerodfl_s5_cum_bytes, zerodfl_best_cum_bytes.
void export_comm_table(const CommTable& table, const FederationConfig& cfg, const std::filesystem::path& path,
                       ExportFormat format);

/// Reads back the data rows of a CSV written by any export above, skipping
/// the config line. The first row is the header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

/// The config embedded in an exported file.
nlohmann::ordered_json read_embedded_config(const std::filesystem::path& path, ExportFormat format);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

}  // namespace zerodfl
