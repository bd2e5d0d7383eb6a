#include <gtest/gtest.h>

#include <algorithm>

#include "zerodfl/simulation.hpp"

namespace zerodfl {
namespace {

Scenario desk_scenario(const FederationConfig& cfg) { return build_scenario(ScenarioKind::kHomogeneous, cfg); }

TEST(EvaluationRounds, FirstEveryFifthAndLast) {
    auto cfg = desk_profile();
    EXPECT_EQ(evaluation_rounds(cfg), (std::vector<int>{1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50}));
    cfg.rounds = 7;
    EXPECT_EQ(evaluation_rounds(cfg), (std::vector<int>{1, 5, 7}));
}

TEST(Simulate, InvalidConfigThrows) {
    auto cfg = desk_profile();
    const auto s = desk_scenario(cfg);
    cfg.shared_prompts = 9;
    EXPECT_THROW(simulate(s, cfg), ConfigError);
}

TEST(Simulate, ConservationAndClosedFormLedger) {
    for (bool broadcast : {false, true}) {
        auto cfg = desk_profile();
        cfg.broadcast = broadcast;
        cfg.rounds = 12;
        const auto s = desk_scenario(cfg);
        std::uint64_t delivered_before = 0;
        SimulationOptions opts;
        std::vector<std::uint64_t> per_round;
        opts.on_round = [&](const RoundOutcome& o) { per_round.push_back(o.messages.size()); };
        const auto r = simulate(s, cfg, opts);
        const std::uint64_t expected =
            static_cast<std::uint64_t>(cfg.num_clients) * static_cast<std::uint64_t>(effective_recipients(cfg));
        for (auto n : per_round) EXPECT_EQ(n, expected);
        for (const auto& c : r.federation.clients) delivered_before += c.received_total;
        EXPECT_EQ(delivered_before, expected * static_cast<std::uint64_t>(cfg.rounds));
        EXPECT_EQ(r.ledger.cumulative_bytes(), zerodfl_total(cfg.comm_model, cfg, cfg.rounds));
    }
}

TEST(Simulate, NoSharingSendsNothing) {
    auto cfg = desk_profile();
    cfg.shared_prompts = 0;
    cfg.rounds = 5;
    const auto r = simulate(desk_scenario(cfg), cfg);
    EXPECT_EQ(r.ledger.cumulative_bytes(), 0.0);
    EXPECT_EQ(r.ledger.message_count(), 0u);
    for (const auto& c : r.federation.clients) {
        for (const auto& [peer, n] : c.selection_counts.counts()) EXPECT_EQ(n, 0u);
    }
}

TEST(Simulate, SameInputsSameState) {
    auto cfg = desk_profile();
    cfg.rounds = 10;
    const auto s = desk_scenario(cfg);
    const auto a = simulate(s, cfg);
    const auto b = simulate(s, cfg);
    EXPECT_EQ(a.federation.fingerprint(), b.federation.fingerprint());
    EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(Simulate, ParallelMatchesSequential) {
    auto cfg = desk_profile();
    cfg.rounds = 10;
    const auto s = desk_scenario(cfg);
    SimulationOptions par;
    par.parallel = true;
    const auto a = simulate(s, cfg);
    const auto b = simulate(s, cfg, par);
    EXPECT_EQ(a.federation.fingerprint(), b.federation.fingerprint());
    EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(Simulate, EncodersStayFrozen) {
    auto cfg = desk_profile();
    cfg.rounds = 5;
    const auto s = build_scenario(ScenarioKind::kHeterogeneous, cfg);
    std::vector<std::uint64_t> before;
    for (const auto& d : s.domains()) before.push_back(d.encoder->fingerprint());
    simulate(s, cfg);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(s.domains()[i].encoder->fingerprint(), before[i]);
}

TEST(Simulate, OnlyPromptsAreTrainable) {
    const auto cfg = desk_profile();
    const auto f = make_federation(desk_scenario(cfg), cfg);
    EXPECT_EQ(f.trainable_parameter_count(),
              static_cast<std::size_t>(cfg.num_clients * cfg.prompts_per_client * cfg.prompt_dim));
}

TEST(Simulate, EveryClientHearsFromSomeoneByRoundTen) {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto cfg = desk_profile();
        cfg.seed = seed;
        cfg.rounds = 10;
        const auto r = simulate(desk_scenario(cfg), cfg);
        bool all = true;
        for (const auto& c : r.federation.clients) all = all && c.received_total >= 1;
        ok += all;
    }
    EXPECT_EQ(ok, 100);
}

TEST(RunRound, FirstRoundTrainsOwnPrompts) {
    const auto cfg = desk_profile();
    const auto s = desk_scenario(cfg);
    auto f = make_federation(s, cfg);
    const auto out = run_round(f, cfg, 0);
    EXPECT_EQ(out.metrics.per_client_loss.size(), static_cast<std::size_t>(cfg.num_clients));
    for (const auto& c : f.clients) {
        for (ClientId src : c.active_prompts.sources()) EXPECT_EQ(src, c.id);
        for (const auto& e : c.pool.entries()) EXPECT_EQ(e.received_round, 0);
    }
}

TEST(RunRound, MessagesCarryThisRoundsTrainedPrompts) {
    const auto cfg = desk_profile();
    const auto s = desk_scenario(cfg);
    auto f = make_federation(s, cfg);
    const auto out = run_round(f, cfg, 0);
    for (const auto& m : out.messages) {
        const auto& sender = f.clients[m.sender.value];
        for (std::size_t k = 0; k < m.prompts.size(); ++k) {
            EXPECT_EQ(m.prompts[k], PromptVector(sender.active_prompts.slot(k)));
        }
    }
}

TEST(RunRound, TwoClientsAlwaysExchange) {
    auto cfg = desk_profile();
    cfg.num_clients = 2;
    cfg.recipients_per_round = 1;
    const auto s = desk_scenario(cfg);
    auto f = make_federation(s, cfg);
    for (int r = 0; r < 5; ++r) {
        const auto out = run_round(f, cfg, r);
        EXPECT_EQ(out.messages.size(), 2u);
        for (const auto& c : f.clients) {
            const auto fresh = std::count_if(c.pool.entries().begin(), c.pool.entries().end(),
                                             [r](const PoolEntry& e) { return e.received_round == r; });
            EXPECT_EQ(fresh, 4);
        }
    }
}

TEST(RunRound, RoundOutsideHorizonThrows) {
    const auto cfg = desk_profile();
    auto f = make_federation(desk_scenario(cfg), cfg);
    EXPECT_THROW(run_round(f, cfg, cfg.rounds), ProtocolError);
}

TEST(EvaluateFederation, ReadsOnlyAndIdenticalPromptsGiveZeroStd) {
    const auto cfg = desk_profile();
    const auto s = desk_scenario(cfg);
    auto f = make_federation(s, cfg);
    run_round(f, cfg, 0);
    const auto before = f.fingerprint();
    const auto report = evaluate_federation(f, s, cfg, 1);
    EXPECT_EQ(f.fingerprint(), before);
    EXPECT_EQ(report.per_client_accuracy.size(), f.clients.size());

    for (auto& c : f.clients) c.active_prompts = f.clients.front().active_prompts;
    const auto same = evaluate_federation(f, s, cfg, 1);
    ASSERT_TRUE(same.std_accuracy.has_value());
    EXPECT_EQ(*same.std_accuracy, 0.0);
}

}  // namespace
}  // namespace zerodfl
