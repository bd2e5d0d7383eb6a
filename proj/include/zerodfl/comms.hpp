#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "zerodfl/config.hpp"
#include "zerodfl/message.hpp"

namespace zerodfl {

class CommError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bytes of one message carrying `shared` of `prompts` prompt vectors of
/// length `dim`, rounded to whole bytes.
///   raw:        shared * dim * bytes_per_scalar
///   calibrated: prompt_set_bytes * shared / prompts
double message_bytes(const CommModel& model, int shared, int dim, int prompts);
double message_bytes(const FederationConfig& cfg);

/// C * rounds * S * message_bytes; S is C - 1 in broadcast mode.
double zerodfl_total(const CommModel& model, const FederationConfig& cfg, int rounds);

/// C * rounds * fedtpg_round_bytes. Calibrated mode only.
double fedtpg_total(const CommModel& model, const FederationConfig& cfg, int rounds);

inline constexpr double kInfiniteReduction = std::numeric_limits<double>::infinity();

/// fedtpg_total / zerodfl_total, or kInfiniteReduction when nothing is sent.
double reduction_factor(const CommModel& model, const FederationConfig& cfg, int rounds);

/// Per-round byte accounting for one simulation.
class CommLedger {
public:
    /// Appends the round's total payload. Rounds must be recorded in strictly
    /// increasing order; a repeat throws CommError.
    void record(int round, std::span<const PromptMessage> messages);

    const std::vector<int>& rounds() const { return rounds_; }
    const std::vector<double>& per_round_bytes() const { return per_round_bytes_; }
    const std::vector<std::uint64_t>& per_round_messages() const { return per_round_messages_; }
    double cumulative_bytes() const { return cumulative_bytes_; }
    std::uint64_t message_count() const { return message_count_; }

private:
    std::vector<int> rounds_;
    std::vector<double> per_round_bytes_;
    std::vector<std::uint64_t> per_round_messages_;
    double cumulative_bytes_ = 0.0;
    std::uint64_t message_count_ = 0;
};

struct CommTableRow {
    int round = 0;
    double fedtpg_cum_bytes = 0.0;
    double zerodfl_worst_cum_bytes = 0.0;
    double zerodfl_s5_cum_bytes = 0.0;
    double zerodfl_best_cum_bytes = 0.0;
};

/// The four cumulative-cost curves for a federation shaped like `cfg`:
///   worst: broadcast, all M prompts
///   s5:    S = 5, all M prompts
///   best:  each client sends one prompt to M peers (S = M, M_s = 1)
/// Rows cover rounds 0..rounds (row 0 is all zero).
struct CommTable {
    std::vector<CommTableRow> rows;
    double reduction_worst = 0.0;
    double reduction_s5 = 0.0;
    double reduction_best = 0.0;
};

CommTable comm_table(const FederationConfig& cfg, int rounds);

/// Variants used by comm_table, exposed for tests.
FederationConfig worst_case_config(FederationConfig cfg);
FederationConfig balanced_config(FederationConfig cfg, int recipients = 5);
FederationConfig best_case_config(FederationConfig cfg);

}  // namespace zerodfl
