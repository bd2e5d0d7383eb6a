#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "zerodfl/config.hpp"
#include "zerodfl/rng.hpp"
#include "zerodfl/types.hpp"

namespace zerodfl {
namespace {

TEST(DeriveRng, SameKeySameStream) {
    auto a = derive_rng(7, 3, 11, Purpose::kLocalAdapt);
    auto b = derive_rng(7, 3, 11, Purpose::kLocalAdapt);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(DeriveRng, EveryKeyComponentMatters) {
    std::set<std::uint64_t> first_draws;
    first_draws.insert(derive_rng(7, 3, 11, Purpose::kLocalAdapt)());
    first_draws.insert(derive_rng(8, 3, 11, Purpose::kLocalAdapt)());
    first_draws.insert(derive_rng(7, 4, 11, Purpose::kLocalAdapt)());
    first_draws.insert(derive_rng(7, 3, 12, Purpose::kLocalAdapt)());
    first_draws.insert(derive_rng(7, 3, 11, Purpose::kPoolSample)());
    EXPECT_EQ(first_draws.size(), 5u);
}

TEST(DeriveRng, ClientOverloadMatchesIndex) {
    auto a = derive_rng(1, ClientId{5}, 2, Purpose::kRecipientSelect);
    auto b = derive_rng(1, 5, 2, Purpose::kRecipientSelect);
    EXPECT_EQ(a(), b());
}

bool has_violation(const FederationConfig& cfg, const std::string& field) {
    const auto v = validate_config(cfg);
    return std::any_of(v.begin(), v.end(), [&](const ConfigViolation& x) { return x.field == field; });
}

TEST(Config, ProfilesAreValid) {
    EXPECT_TRUE(validate_config(desk_profile()).empty());
    EXPECT_TRUE(validate_config(paper_profile()).empty());
}

TEST(Config, DeskDefaults) {
    const auto cfg = desk_profile();
    EXPECT_EQ(cfg.num_clients, 8);
    EXPECT_EQ(cfg.classes_per_client, 5);
    EXPECT_EQ(cfg.shots_per_class, 8);
    EXPECT_EQ(cfg.prompts_per_client, 4);
    EXPECT_EQ(cfg.prompt_dim, 16);
    EXPECT_EQ(cfg.embed_dim, 16);
    EXPECT_EQ(cfg.rounds, 50);
    EXPECT_EQ(cfg.local_epochs, 1);
    EXPECT_EQ(cfg.recipients_per_round, 3);
    EXPECT_DOUBLE_EQ(cfg.temperature, 0.07);
    EXPECT_DOUBLE_EQ(cfg.learning_rate, 0.05);
}

TEST(Config, SharedPromptsAboveMIsRejected) {
    auto cfg = desk_profile();
    cfg.shared_prompts = 5;
    EXPECT_TRUE(has_violation(cfg, "shared_prompts"));
}

TEST(Config, TooManyRecipientsIsRejected) {
    auto cfg = desk_profile();
    cfg.recipients_per_round = cfg.num_clients;
    EXPECT_TRUE(has_violation(cfg, "recipients_per_round"));
}

TEST(Config, BroadcastUsesAllPeers) {
    auto cfg = desk_profile();
    cfg.broadcast = true;
    EXPECT_TRUE(validate_config(cfg).empty());
    EXPECT_EQ(effective_recipients(cfg), cfg.num_clients - 1);
}

TEST(Config, NonPositiveTemperatureIsRejected) {
    auto cfg = desk_profile();
    cfg.temperature = 0.0;
    EXPECT_TRUE(has_violation(cfg, "temperature"));
}

TEST(Config, JsonRoundTrip) {
    auto cfg = paper_profile();
    cfg.seed = 42;
    cfg.broadcast = true;
    cfg.pool_slot_policy = PoolSlotPolicy::kAny;
    cfg.comm_model.mode = CommMode::kRaw;
    const auto doc = config_to_json(cfg);
    const auto back = config_from_json(nlohmann::json::parse(doc.dump()));
    EXPECT_EQ(config_to_json(back).dump(), doc.dump());
}

TEST(Config, PartialJsonOverridesBase) {
    const auto cfg = config_from_json(nlohmann::json::parse(R"({"seed": 9, "shared_prompts": 2})"));
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.shared_prompts, 2);
    EXPECT_EQ(cfg.num_clients, desk_profile().num_clients);
}

TEST(Config, UnknownKeyThrows) {
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"num_clientz": 3})")), ConfigError);
}

TEST(Config, WrongTypeThrows) {
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"num_clients": "three"})")), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"seed": -1})")), ConfigError);
}

TEST(Config, BroadcastSentinel) {
    const auto cfg = config_from_json(nlohmann::json::parse(R"({"recipients_per_round": "broadcast"})"));
    EXPECT_TRUE(cfg.broadcast);
}

}  // namespace
}  // namespace zerodfl
