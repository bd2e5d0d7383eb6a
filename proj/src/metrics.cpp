#include "zerodfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace zerodfl {

using nlohmann::json;
using nlohmann::ordered_json;

MeanAndStd mean_and_std(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_and_std of an empty set");
    MeanAndStd out;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return out;
    const bool all_equal = std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
    if (all_equal) {
        out.std = 0.0;
        return out;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / n);
    return out;
}

EvalReport make_report(int round, std::map<ClientId, double> accuracy, std::map<ClientId, int> domains) {
    if (accuracy.empty()) throw std::invalid_argument("report without clients");
    EvalReport report;
    report.round = round;

    std::vector<double> all;
    std::map<int, std::pair<std::vector<ClientId>, std::vector<double>>> by_domain;
    for (const auto& [client, acc] : accuracy) {
        const auto it = domains.find(client);
        if (it == domains.end()) throw std::invalid_argument("client without a domain");
        all.push_back(acc);
        by_domain[it->second].first.push_back(client);
        by_domain[it->second].second.push_back(acc);
    }
    const MeanAndStd overall = mean_and_std(all);
    report.mean_accuracy = overall.mean;
    report.std_accuracy = overall.std;
    for (auto& [domain, members] : by_domain) {
        const MeanAndStd stats = mean_and_std(members.second);
        report.per_domain.push_back(DomainSummary{domain, std::move(members.first), stats.mean, stats.std});
    }
    report.per_client_accuracy = std::move(accuracy);
    report.client_domain = std::move(domains);
    return report;
}

EvalReport evaluate_federation(const Federation& federation, const Scenario& scenario,
                               const FederationConfig& cfg, int round) {
    std::map<ClientId, double> accuracy;
    std::map<ClientId, int> domains;
    for (const auto& client : federation.clients) {
        const DomainData& domain = scenario.domain_of(client.id);
        if (domain.test_set.empty()) throw std::invalid_argument("empty test set");
        accuracy[client.id] = zero_shot_eval(client.active_prompts, domain.test_set, domain.unseen_classes,
                                             federation.encoder_of(client), cfg.temperature);
        domains[client.id] = domain.domain_id;
    }
    return make_report(round, std::move(accuracy), std::move(domains));
}

ConvergenceSeries convergence_series(std::span<const EvalReport> reports) {
    if (reports.empty()) throw std::invalid_argument("convergence_series needs at least one report");
    ConvergenceSeries out;
    for (const auto& r : reports) {
        if (!out.empty() && r.round <= out.back().round) {
            throw std::invalid_argument("reports are not ordered by round");
        }
        out.push_back(SeriesPoint{r.round, r.mean_accuracy, r.std_accuracy});
    }
    return out;
}

bool std_decreased(const ConvergenceSeries& series) {
    if (series.empty() || !series.front().std_accuracy || !series.back().std_accuracy) return false;
    return *series.back().std_accuracy < *series.front().std_accuracy;
}

ExportFormat parse_export_format(const std::string& text) {
    if (text == "csv") return ExportFormat::kCsv;
    if (text == "json") return ExportFormat::kJson;
    throw std::invalid_argument("unknown export format '" + text + "' (expected csv or json)");
}

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

double quantize(double value) {
    if (!std::isfinite(value)) return value;
    return std::strtod(format_number(value).c_str(), nullptr);
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ExportError("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw ExportError("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ExportError("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string csv_preamble(const FederationConfig& cfg) {
    return "# config: " + config_to_json(cfg).dump() + "\n";
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; }

ordered_json opt_json(const std::optional<double>& v) {
    return v ? ordered_json(quantize(*v)) : ordered_json(nullptr);
}

std::optional<double> opt_from_json(const json& v) {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

std::optional<double> opt_from_text(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::strtod(s.c_str(), nullptr);
}

void write_json(const std::filesystem::path& path, const FederationConfig& cfg, const char* key,
                ordered_json body) {
    ordered_json doc;
    doc["config"] = config_to_json(cfg);
    doc[key] = std::move(body);
    write_file(path, doc.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ExportError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.starts_with("#")) continue;
        rows.push_back(split(line));
    }
    return rows;
}

ordered_json read_embedded_config(const std::filesystem::path& path, ExportFormat format) {
    if (format == ExportFormat::kJson) return ordered_json::parse(read_file(path)).at("config");
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    const std::string prefix = "# config: ";
    if (!line.starts_with(prefix)) throw ExportError(path.string() + " has no config line");
    return ordered_json::parse(line.substr(prefix.size()));
}

ordered_json report_to_json(const EvalReport& report) {
    ordered_json doc;
    doc["round"] = report.round;
    ordered_json clients = ordered_json::array();
    for (const auto& [client, acc] : report.per_client_accuracy) {
        clients.push_back({{"client", client.value},
                           {"domain", report.client_domain.at(client)},
                           {"accuracy", quantize(acc)}});
    }
    doc["per_client_accuracy"] = std::move(clients);
    doc["mean_accuracy"] = quantize(report.mean_accuracy);
    doc["std_accuracy"] = opt_json(report.std_accuracy);
    ordered_json domains = ordered_json::array();
    for (const auto& d : report.per_domain) {
        ordered_json members = ordered_json::array();
        for (ClientId c : d.clients) members.push_back(c.value);
        domains.push_back({{"domain", d.domain},
                           {"clients", std::move(members)},
                           {"mean_accuracy", quantize(d.mean_accuracy)},
                           {"std_accuracy", opt_json(d.std_accuracy)}});
    }
    doc["per_domain"] = std::move(domains);
    return doc;
}

EvalReport report_from_json(const json& doc) {
    EvalReport report;
    report.round = doc.at("round").get<int>();
    for (const auto& c : doc.at("per_client_accuracy")) {
        const ClientId id{c.at("client").get<std::size_t>()};
        report.per_client_accuracy[id] = c.at("accuracy").get<double>();
        report.client_domain[id] = c.at("domain").get<int>();
    }
    report.mean_accuracy = doc.at("mean_accuracy").get<double>();
    report.std_accuracy = opt_from_json(doc.at("std_accuracy"));
    for (const auto& d : doc.at("per_domain")) {
        DomainSummary s;
        s.domain = d.at("domain").get<int>();
        for (const auto& c : d.at("clients")) s.clients.push_back(ClientId{c.get<std::size_t>()});
        s.mean_accuracy = d.at("mean_accuracy").get<double>();
        s.std_accuracy = opt_from_json(d.at("std_accuracy"));
        report.per_domain.push_back(std::move(s));
    }
    return report;
}

void export_report(const EvalReport& report, const FederationConfig& cfg, const std::filesystem::path& path,
                   ExportFormat format) {
    if (format == ExportFormat::kJson) {
        write_json(path, cfg, "report", report_to_json(report));
        return;
    }
    std::string out = csv_preamble(cfg);
    out += "kind,round,client,domain,accuracy,std_accuracy\n";
    const std::string round = std::to_string(report.round);
    for (const auto& [client, acc] : report.per_client_accuracy) {
        out += "client," + round + "," + std::to_string(client.value) + "," +
               std::to_string(report.client_domain.at(client)) + "," + format_number(acc) + ",\n";
    }
    for (const auto& d : report.per_domain) {
        out += "domain," + round + ",," + std::to_string(d.domain) + "," + format_number(d.mean_accuracy) + "," +
               opt_number(d.std_accuracy) + "\n";
    }
    out += "overall," + round + ",,," + format_number(report.mean_accuracy) + "," +
           opt_number(report.std_accuracy) + "\n";
    write_file(path, out);
}

EvalReport import_report(const std::filesystem::path& path, ExportFormat format) {
    if (format == ExportFormat::kJson) return report_from_json(read_json(path).at("report"));

    const auto rows = read_csv(path);
    if (rows.empty() || rows.front().size() != 6) throw ExportError(path.string() + ": bad report header");
    EvalReport report;
    std::map<int, std::vector<ClientId>> members;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 6) throw ExportError(path.string() + ": bad row " + std::to_string(i));
        report.round = std::stoi(r[1]);
        if (r[0] == "client") {
            const ClientId id{std::stoull(r[2])};
            report.per_client_accuracy[id] = std::strtod(r[4].c_str(), nullptr);
            report.client_domain[id] = std::stoi(r[3]);
            members[std::stoi(r[3])].push_back(id);
        } else if (r[0] == "domain") {
            const int domain = std::stoi(r[3]);
            report.per_domain.push_back(
                DomainSummary{domain, members[domain], std::strtod(r[4].c_str(), nullptr), opt_from_text(r[5])});
        } else if (r[0] == "overall") {
            report.mean_accuracy = std::strtod(r[4].c_str(), nullptr);
            report.std_accuracy = opt_from_text(r[5]);
        } else {
            throw ExportError(path.string() + ": unknown row kind '" + r[0] + "'");
        }
    }
    return report;
}

void export_series(const ConvergenceSeries& series, const FederationConfig& cfg,
                   const std::filesystem::path& path, ExportFormat format) {
    if (format == ExportFormat::kJson) {
        ordered_json rows = ordered_json::array();
        for (const auto& p : series) {
            rows.push_back({{"round", p.round},
                            {"mean_accuracy", quantize(p.mean_accuracy)},
                            {"std_accuracy", opt_json(p.std_accuracy)}});
        }
        write_json(path, cfg, "series", std::move(rows));
        return;
    }
    std::string out = csv_preamble(cfg);
    out += "round,mean_accuracy,std_accuracy\n";
    for (const auto& p : series) {
        out += std::to_string(p.round) + "," + format_number(p.mean_accuracy) + "," + opt_number(p.std_accuracy) +
               "\n";
    }
    write_file(path, out);
}

ConvergenceSeries import_series(const std::filesystem::path& path, ExportFormat format) {
    ConvergenceSeries out;
    if (format == ExportFormat::kJson) {
        const json doc = read_json(path);
        for (const auto& p : doc.at("series")) {
            out.push_back(SeriesPoint{p.at("round").get<int>(), p.at("mean_accuracy").get<double>(),
                                      opt_from_json(p.at("std_accuracy"))});
        }
        return out;
    }
    const auto rows = read_csv(path);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 3) throw ExportError(path.string() + ": bad row " + std::to_string(i));
        out.push_back(SeriesPoint{std::stoi(r[0]), std::strtod(r[1].c_str(), nullptr), opt_from_text(r[2])});
    }
    return out;
}

void export_ledger(const CommLedger& ledger, const FederationConfig& cfg, const std::filesystem::path& path,
                   ExportFormat format) {
    const auto& rounds = ledger.rounds();
    const auto& bytes = ledger.per_round_bytes();
    const auto& messages = ledger.per_round_messages();
    if (format == ExportFormat::kJson) {
        ordered_json rows = ordered_json::array();
        double cumulative = 0.0;
        for (std::size_t i = 0; i < rounds.size(); ++i) {
            cumulative += bytes[i];
            rows.push_back({{"round", rounds[i]},
                            {"messages", messages[i]},
                            {"bytes", quantize(bytes[i])},
                            {"cumulative_bytes", quantize(cumulative)}});
        }
        write_json(path, cfg, "ledger", std::move(rows));
        return;
    }
    std::string out = csv_preamble(cfg);
    out += "round,messages,bytes,cumulative_bytes\n";
    double cumulative = 0.0;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        cumulative += bytes[i];
        out += std::to_string(rounds[i]) + "," + std::to_string(messages[i]) + "," + format_number(bytes[i]) + "," +
               format_number(cumulative) + "\n";
    }
    write_file(path, out);
}

void export_loss_trace(std::span<const RoundMetrics> rounds, const FederationConfig& cfg,
                       const std::filesystem::path& path, ExportFormat format) {
    if (format == ExportFormat::kJson) {
        ordered_json rows = ordered_json::array();
        for (const auto& m : rounds) {
            for (const auto& [client, loss] : m.per_client_loss) {
                rows.push_back({{"round", m.round}, {"client", client.value}, {"loss", quantize(loss)}});
            }
        }
        write_json(path, cfg, "loss_trace", std::move(rows));
        return;
    }
    std::string out = csv_preamble(cfg);
    out += "round,client,loss\n";
    for (const auto& m : rounds) {
        for (const auto& [client, loss] : m.per_client_loss) {
            out += std::to_string(m.round) + "," + std::to_string(client.value) + "," + format_number(loss) + "\n";
        }
    }
    write_file(path, out);
}

void export_comm_table(const CommTable& table, const FederationConfig& cfg, const std::filesystem::path& path,
                       ExportFormat format) {
    if (format == ExportFormat::kJson) {
        ordered_json rows = ordered_json::array();
        for (const auto& r : table.rows) {
            rows.push_back({{"round", r.round},
                            {"fedtpg_cum_bytes", quantize(r.fedtpg_cum_bytes)},
                            {"zerodfl_worst_cum_bytes", quantize(r.zerodfl_worst_cum_bytes)},
                            {"zerodfl_s5_cum_bytes", quantize(r.zerodfl_s5_cum_bytes)},
                            {"zerodfl_best_cum_bytes", quantize(r.zerodfl_best_cum_bytes)}});
        }
        ordered_json body;
        body["rows"] = std::move(rows);
        body["reduction_worst"] = quantize(table.reduction_worst);
        body["reduction_s5"] = quantize(table.reduction_s5);
        body["reduction_best"] = quantize(table.reduction_best);
        write_json(path, cfg, "comm_table", std::move(body));
        return;
    }
    std::string out = csv_preamble(cfg);
    out += "round,fedtpg_cum_bytes,zerodfl_worst_cum_bytes,zerodfl_s5_cum_bytes,zerodfl_best_cum_bytes\n";
    for (const auto& r : table.rows) {
        out += std::to_string(r.round) + "," + format_number(r.fedtpg_cum_bytes) + "," +
               format_number(r.zerodfl_worst_cum_bytes) + "," + format_number(r.zerodfl_s5_cum_bytes) + "," +
               format_number(r.zerodfl_best_cum_bytes) + "\n";
    }
    out += "# reduction_worst=" + format_number(table.reduction_worst) +
           " reduction_s5=" + format_number(table.reduction_s5) +
           " reduction_best=" + format_number(table.reduction_best) + "\n";
    write_file(path, out);
}

}  // namespace zerodfl
