#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace zerodfl {

enum class CommMode { kRaw, kCalibrated };

// Calibration targets: 807 MB per unit of S and 467 GB for FedTPG, both over
// 59 clients and 500 rounds.
inline constexpr double kCalibrationClients = 59.0;
inline constexpr double kCalibrationRounds = 500.0;
inline constexpr double kZeroDflBytesPerUnitS = 807e6;
inline constexpr double kFedTpgTotalBytes = 467e9;
inline constexpr double kCalibratedPromptSetBytes =
    kZeroDflBytesPerUnitS / (kCalibrationClients * kCalibrationRounds);
inline constexpr double kCalibratedFedTpgRoundBytes =
    kFedTpgTotalBytes / (kCalibrationClients * kCalibrationRounds);

struct CommModel {
    CommMode mode = CommMode::kCalibrated;
    int bytes_per_scalar = 4;
    /// Bytes attributed to one full prompt set sent to one recipient.
    double prompt_set_bytes = kCalibratedPromptSetBytes;
    /// FedTPG cost per client per round.
    double fedtpg_round_bytes = kCalibratedFedTpgRoundBytes;
};

/// How received prompts are placed into active slots.
enum class PoolSlotPolicy {
    kAligned,  // a received prompt only fills the slot it was sent from
    kAny,      // any received prompt may fill any replaced slot
};

struct FederationConfig {
    int num_clients = 8;
    int prompts_per_client = 4;
    int shared_prompts = 4;
    int recipients_per_round = 3;
    bool broadcast = false;
    int prompt_dim = 16;
    int embed_dim = 16;
    int rounds = 50;
    int local_epochs = 1;
    int classes_per_client = 5;
    int shots_per_class = 8;
    double temperature = 0.07;
    double learning_rate = 0.05;
    double selection_epsilon = 1e-6;
    std::uint64_t seed = 0;
    CommModel comm_model{};

    // Simulator knobs.
    int image_dim = 16;
    int batch_size = 32;
    double prompt_init_std = 0.02;
    double token_scale = 0.45;
    double noise_sigma = 0.1;
    int test_samples_per_class = 20;
    int retention_rounds = 1;
    int eval_every = 5;
    int num_domains = 4;
    PoolSlotPolicy pool_slot_policy = PoolSlotPolicy::kAligned;
};

FederationConfig desk_profile();
FederationConfig paper_profile();

/// S, or C - 1 in broadcast mode.
int effective_recipients(const FederationConfig& cfg);

struct ConfigViolation {
    std::string field;
    std::string message;
};

std::vector<ConfigViolation> validate_config(const FederationConfig& cfg);

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ConfigViolation> violations);
    explicit ConfigError(const std::string& message);

    const std::vector<ConfigViolation>& violations() const { return violations_; }

private:
    std::vector<ConfigViolation> violations_;
};

/// Applies the keys of `doc` on top of `base`. Keys mirror the field names;
/// unknown keys and type mismatches raise ConfigError. The result is not
/// validated.
FederationConfig config_from_json(const nlohmann::json& doc, FederationConfig base = desk_profile());
nlohmann::ordered_json config_to_json(const FederationConfig& cfg);

std::string to_string(CommMode mode);
std::string to_string(PoolSlotPolicy policy);

}  // namespace zerodfl
