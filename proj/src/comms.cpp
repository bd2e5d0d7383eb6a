#include "zerodfl/comms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace zerodfl {

double message_bytes(const CommModel& model, int shared, int dim, int prompts) {
    if (shared < 0) throw CommError("shared prompt count must be >= 0");
    if (shared == 0) return 0.0;
    if (model.mode == CommMode::kRaw) {
        return static_cast<double>(shared) * static_cast<double>(dim) *
               static_cast<double>(model.bytes_per_scalar);
    }
    if (prompts < 1) throw CommError("prompt count must be >= 1");
    return std::round(model.prompt_set_bytes * static_cast<double>(shared) / static_cast<double>(prompts));
}

double message_bytes(const FederationConfig& cfg) {
    return message_bytes(cfg.comm_model, cfg.shared_prompts, cfg.prompt_dim, cfg.prompts_per_client);
}

double zerodfl_total(const CommModel& model, const FederationConfig& cfg, int rounds) {
    const double per_message =
        message_bytes(model, cfg.shared_prompts, cfg.prompt_dim, cfg.prompts_per_client);
    return static_cast<double>(cfg.num_clients) * static_cast<double>(rounds) *
           static_cast<double>(effective_recipients(cfg)) * per_message;
}

double fedtpg_total(const CommModel& model, const FederationConfig& cfg, int rounds) {
    if (model.mode != CommMode::kCalibrated) {
        throw CommError("FedTPG cost is only defined for the calibrated comm model");
    }
    return static_cast<double>(cfg.num_clients) * static_cast<double>(rounds) * model.fedtpg_round_bytes;
}

double reduction_factor(const CommModel& model, const FederationConfig& cfg, int rounds) {
    const double ours = zerodfl_total(model, cfg, rounds);
    const double theirs = fedtpg_total(model, cfg, rounds);
    if (ours == 0.0) return kInfiniteReduction;
    return theirs / ours;
}

void CommLedger::record(int round, std::span<const PromptMessage> messages) {
    if (!rounds_.empty() && round <= rounds_.back()) {
        throw CommError("round " + std::to_string(round) + " already recorded or out of order");
    }
    double bytes = 0.0;
    for (const auto& m : messages) {
        if (m.round != round) {
            throw CommError("message from round " + std::to_string(m.round) + " recorded under round " +
                            std::to_string(round));
        }
        bytes += static_cast<double>(m.payload_bytes);
    }
    rounds_.push_back(round);
    per_round_bytes_.push_back(bytes);
    per_round_messages_.push_back(messages.size());
    cumulative_bytes_ += bytes;
    message_count_ += messages.size();
}

FederationConfig worst_case_config(FederationConfig cfg) {
    cfg.broadcast = true;
    cfg.shared_prompts = cfg.prompts_per_client;
    return cfg;
}

FederationConfig balanced_config(FederationConfig cfg, int recipients) {
    cfg.broadcast = false;
    cfg.recipients_per_round = recipients;
    cfg.shared_prompts = cfg.prompts_per_client;
    return cfg;
}

FederationConfig best_case_config(FederationConfig cfg) {
    cfg.broadcast = false;
    cfg.recipients_per_round = cfg.prompts_per_client;
    cfg.shared_prompts = 1;
    return cfg;
}

CommTable comm_table(const FederationConfig& cfg, int rounds) {
    if (rounds < 0) throw CommError("rounds must be >= 0");
    const CommModel& model = cfg.comm_model;
    const FederationConfig worst = worst_case_config(cfg);
    const FederationConfig s5 = balanced_config(cfg);
    const FederationConfig best = best_case_config(cfg);

    CommTable table;
    table.rows.reserve(static_cast<std::size_t>(rounds) + 1);
    for (int r = 0; r <= rounds; ++r) {
        table.rows.push_back(CommTableRow{r, fedtpg_total(model, cfg, r), zerodfl_total(model, worst, r),
                                          zerodfl_total(model, s5, r), zerodfl_total(model, best, r)});
    }
    const int horizon = std::max(rounds, 1);
    table.reduction_worst = reduction_factor(model, worst, horizon);
    table.reduction_s5 = reduction_factor(model, s5, horizon);
    table.reduction_best = reduction_factor(model, best, horizon);
    return table;
}

}  // namespace zerodfl
