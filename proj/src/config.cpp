#include "zerodfl/config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace zerodfl {

FederationConfig desk_profile() { return FederationConfig{}; }

FederationConfig paper_profile() {
    FederationConfig cfg;
    cfg.num_clients = 30;
    cfg.prompts_per_client = 4;
    cfg.shared_prompts = 4;
    cfg.recipients_per_round = 5;
    cfg.prompt_dim = 512;
    cfg.embed_dim = 512;
    cfg.image_dim = 512;
    cfg.rounds = 500;
    cfg.local_epochs = 1;
    cfg.classes_per_client = 20;
    cfg.shots_per_class = 8;
    cfg.num_domains = 9;
    return cfg;
}

int effective_recipients(const FederationConfig& cfg) {
    return cfg.broadcast ? cfg.num_clients - 1 : cfg.recipients_per_round;
}

namespace {

std::string join_violations(const std::vector<ConfigViolation>& violations) {
    std::ostringstream out;
    out << "invalid configuration:";
    for (const auto& v : violations) out << "\n  " << v.field << ": " << v.message;
    return out.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigViolation> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

ConfigError::ConfigError(const std::string& message)
    : std::runtime_error(message), violations_{{"<document>", message}} {}

std::vector<ConfigViolation> validate_config(const FederationConfig& cfg) {
    std::vector<ConfigViolation> out;
    auto require = [&out](bool ok, const char* field, std::string message) {
        if (!ok) out.push_back({field, std::move(message)});
    };
    auto positive_real = [](double x) { return std::isfinite(x) && x > 0.0; };

    require(cfg.num_clients >= 1, "num_clients", "must be >= 1");
    require(cfg.prompts_per_client >= 1, "prompts_per_client", "must be >= 1");
    require(cfg.shared_prompts >= 0 && cfg.shared_prompts <= cfg.prompts_per_client, "shared_prompts",
            "must lie in [0, prompts_per_client=" + std::to_string(cfg.prompts_per_client) + "]");
    if (cfg.broadcast) {
        require(cfg.num_clients >= 2, "recipients_per_round", "broadcast needs at least 2 clients");
    } else {
        require(cfg.recipients_per_round >= 1 && cfg.recipients_per_round <= cfg.num_clients - 1,
                "recipients_per_round",
                "must lie in [1, num_clients-1=" + std::to_string(cfg.num_clients - 1) + "]");
    }
    require(cfg.prompt_dim >= 1, "prompt_dim", "must be >= 1");
    require(cfg.embed_dim >= 1, "embed_dim", "must be >= 1");
    require(cfg.image_dim >= cfg.embed_dim, "image_dim", "must be >= embed_dim");
    require(cfg.rounds >= 1, "rounds", "must be >= 1");
    require(cfg.local_epochs >= 1, "local_epochs", "must be >= 1");
    require(cfg.classes_per_client >= 1, "classes_per_client", "must be >= 1");
    require(cfg.shots_per_class >= 1, "shots_per_class", "must be >= 1");
    require(positive_real(cfg.temperature), "temperature", "must be a positive real");
    require(positive_real(cfg.learning_rate), "learning_rate", "must be a positive real");
    require(positive_real(cfg.selection_epsilon), "selection_epsilon", "must be a positive real");
    require(cfg.comm_model.bytes_per_scalar >= 1, "comm_model.bytes_per_scalar", "must be >= 1");
    require(positive_real(cfg.comm_model.prompt_set_bytes), "comm_model.prompt_set_bytes",
            "must be a positive real");
    require(positive_real(cfg.comm_model.fedtpg_round_bytes), "comm_model.fedtpg_round_bytes",
            "must be a positive real");
    require(cfg.batch_size >= 1, "batch_size", "must be >= 1");
    require(std::isfinite(cfg.prompt_init_std) && cfg.prompt_init_std >= 0.0, "prompt_init_std",
            "must be a finite non-negative real");
    require(positive_real(cfg.token_scale), "token_scale", "must be a positive real");
    require(std::isfinite(cfg.noise_sigma) && cfg.noise_sigma >= 0.0, "noise_sigma",
            "must be a finite non-negative real");
    require(cfg.test_samples_per_class >= 1, "test_samples_per_class", "must be >= 1");
    require(cfg.retention_rounds >= 1, "retention_rounds", "must be >= 1");
    require(cfg.eval_every >= 1, "eval_every", "must be >= 1");
    require(cfg.num_domains >= 1, "num_domains", "must be >= 1");
    return out;
}

std::string to_string(CommMode mode) { return mode == CommMode::kRaw ? "raw" : "calibrated"; }

std::string to_string(PoolSlotPolicy policy) {
    return policy == PoolSlotPolicy::kAligned ? "aligned" : "any";
}

namespace {

using nlohmann::json;

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError(std::vector<ConfigViolation>{{key, "expected an integer"}});
    return v.get<int>();
}

double as_real(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(std::vector<ConfigViolation>{{key, "expected a number"}});
    return v.get<double>();
}

void apply_comm_model(CommModel& model, const json& doc) {
    if (!doc.is_object()) throw ConfigError(std::vector<ConfigViolation>{{"comm_model", "expected an object"}});
    for (const auto& [key, value] : doc.items()) {
        const std::string field = "comm_model." + key;
        if (key == "mode") {
            if (value == "raw") {
                model.mode = CommMode::kRaw;
            } else if (value == "calibrated") {
                model.mode = CommMode::kCalibrated;
            } else {
                throw ConfigError(std::vector<ConfigViolation>{{field, "expected \"raw\" or \"calibrated\""}});
            }
        } else if (key == "bytes_per_scalar") {
            model.bytes_per_scalar = as_int(value, field);
        } else if (key == "prompt_set_bytes") {
            model.prompt_set_bytes = as_real(value, field);
        } else if (key == "fedtpg_round_bytes") {
            model.fedtpg_round_bytes = as_real(value, field);
        } else {
            throw ConfigError(std::vector<ConfigViolation>{{field, "unknown key"}});
        }
    }
}

using Setter = std::function<void(FederationConfig&, const json&, const std::string&)>;

#define ZERODFL_INT_FIELD(name) \
    {#name, [](FederationConfig& c, const json& v, const std::string& k) { c.name = as_int(v, k); }}
#define ZERODFL_REAL_FIELD(name) \
    {#name, [](FederationConfig& c, const json& v, const std::string& k) { c.name = as_real(v, k); }}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        ZERODFL_INT_FIELD(num_clients),
        ZERODFL_INT_FIELD(prompts_per_client),
        ZERODFL_INT_FIELD(shared_prompts),
        ZERODFL_INT_FIELD(prompt_dim),
        ZERODFL_INT_FIELD(embed_dim),
        ZERODFL_INT_FIELD(rounds),
        ZERODFL_INT_FIELD(local_epochs),
        ZERODFL_INT_FIELD(classes_per_client),
        ZERODFL_INT_FIELD(shots_per_class),
        ZERODFL_REAL_FIELD(temperature),
        ZERODFL_REAL_FIELD(learning_rate),
        ZERODFL_REAL_FIELD(selection_epsilon),
        ZERODFL_INT_FIELD(image_dim),
        ZERODFL_INT_FIELD(batch_size),
        ZERODFL_REAL_FIELD(prompt_init_std),
        ZERODFL_REAL_FIELD(token_scale),
        ZERODFL_REAL_FIELD(noise_sigma),
        ZERODFL_INT_FIELD(test_samples_per_class),
        ZERODFL_INT_FIELD(retention_rounds),
        ZERODFL_INT_FIELD(eval_every),
        ZERODFL_INT_FIELD(num_domains),
        {"recipients_per_round",
         [](FederationConfig& c, const json& v, const std::string& k) {
             if (v.is_string()) {
                 if (v != "broadcast") throw ConfigError(std::vector<ConfigViolation>{{k, "expected an integer or \"broadcast\""}});
                 c.broadcast = true;
             } else {
                 c.broadcast = false;
                 c.recipients_per_round = as_int(v, k);
             }
         }},
        {"seed",
         [](FederationConfig& c, const json& v, const std::string& k) {
             if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
                 throw ConfigError(std::vector<ConfigViolation>{{k, "expected a non-negative integer"}});
             }
             c.seed = v.get<std::uint64_t>();
         }},
        {"comm_model",
         [](FederationConfig& c, const json& v, const std::string&) { apply_comm_model(c.comm_model, v); }},
        {"pool_slot_policy",
         [](FederationConfig& c, const json& v, const std::string& k) {
             if (v == "aligned") {
                 c.pool_slot_policy = PoolSlotPolicy::kAligned;
             } else if (v == "any") {
                 c.pool_slot_policy = PoolSlotPolicy::kAny;
             } else {
                 throw ConfigError(std::vector<ConfigViolation>{{k, "expected \"aligned\" or \"any\""}});
             }
         }},
    };
    return table;
}

#undef ZERODFL_INT_FIELD
#undef ZERODFL_REAL_FIELD

}  // namespace

FederationConfig config_from_json(const nlohmann::json& doc, FederationConfig base) {
    if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
    std::vector<ConfigViolation> unknown;
    for (const auto& [key, value] : doc.items()) {
        const auto it = setters().find(key);
        if (it == setters().end()) {
            unknown.push_back({key, "unknown key"});
            continue;
        }
        it->second(base, value, key);
    }
    if (!unknown.empty()) throw ConfigError(std::move(unknown));
    return base;
}

nlohmann::ordered_json config_to_json(const FederationConfig& cfg) {
    nlohmann::ordered_json doc;
    doc["num_clients"] = cfg.num_clients;
    doc["prompts_per_client"] = cfg.prompts_per_client;
    doc["shared_prompts"] = cfg.shared_prompts;
    if (cfg.broadcast) {
        doc["recipients_per_round"] = "broadcast";
    } else {
        doc["recipients_per_round"] = cfg.recipients_per_round;
    }
    doc["prompt_dim"] = cfg.prompt_dim;
    doc["embed_dim"] = cfg.embed_dim;
    doc["rounds"] = cfg.rounds;
    doc["local_epochs"] = cfg.local_epochs;
    doc["classes_per_client"] = cfg.classes_per_client;
    doc["shots_per_class"] = cfg.shots_per_class;
    doc["temperature"] = cfg.temperature;
    doc["learning_rate"] = cfg.learning_rate;
    doc["selection_epsilon"] = cfg.selection_epsilon;
    doc["seed"] = cfg.seed;
    doc["comm_model"] = {
        {"mode", to_string(cfg.comm_model.mode)},
        {"bytes_per_scalar", cfg.comm_model.bytes_per_scalar},
        {"prompt_set_bytes", cfg.comm_model.prompt_set_bytes},
        {"fedtpg_round_bytes", cfg.comm_model.fedtpg_round_bytes},
    };
    doc["image_dim"] = cfg.image_dim;
    doc["batch_size"] = cfg.batch_size;
    doc["prompt_init_std"] = cfg.prompt_init_std;
    doc["token_scale"] = cfg.token_scale;
    doc["noise_sigma"] = cfg.noise_sigma;
    doc["test_samples_per_class"] = cfg.test_samples_per_class;
    doc["retention_rounds"] = cfg.retention_rounds;
    doc["eval_every"] = cfg.eval_every;
    doc["num_domains"] = cfg.num_domains;
    doc["pool_slot_policy"] = to_string(cfg.pool_slot_policy);
    return doc;
}

}  // namespace zerodfl
