#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "zerodfl/protocol.hpp"

namespace zerodfl {
namespace {

ClientState make_client(std::size_t id, std::size_t num_clients, int prompts = 4, int dim = 16) {
    ClientState c;
    c.id = ClientId{id};
    Eigen::MatrixXd values(dim, prompts);
    for (int m = 0; m < prompts; ++m) values.col(m).setConstant(static_cast<double>(id * 100 + m));
    c.active_prompts = PromptSet(values, c.id);
    c.selection_counts = SelectionHistory(c.id, num_clients);
    return c;
}

SelectionHistory history_with(const std::vector<std::uint64_t>& counts) {
    SelectionHistory h(ClientId{0}, counts.size() + 1);
    for (std::size_t j = 0; j < counts.size(); ++j) h.set_count(ClientId{j + 1}, counts[j]);
    return h;
}

TEST(ComputeWeights, ZeroCountsAreSymmetric) {
    const auto w = compute_weights(history_with({0, 0, 0}), 1e-6);
    ASSERT_EQ(w.weights.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_DOUBLE_EQ(w.weights[j], 1e6);
        EXPECT_NEAR(w.probabilities[j], 1.0 / 3.0, 1e-15);
    }
}

TEST(ComputeWeights, MixedCountsMatchDirectEvaluation) {
    const auto w = compute_weights(history_with({0, 1, 3}), 1e-6);
    const double wa = 1.0 / (0.0 + 1e-6);
    const double wb = 1.0 / (1.0 + 1e-6);
    const double wc = 1.0 / (3.0 + 1e-6);
    EXPECT_EQ(w.weights[0], wa);
    EXPECT_EQ(w.weights[1], wb);
    EXPECT_EQ(w.weights[2], wc);
    EXPECT_NEAR(w.probability(ClientId{1}), wa / (wa + wb + wc), 1e-15);
    EXPECT_NEAR(w.probability(ClientId{1}), 0.99999867, 1e-8);
}

TEST(ComputeWeights, EqualCountsSplitEvenly) {
    const auto w = compute_weights(history_with({5, 5}), 1e-6);
    EXPECT_DOUBLE_EQ(w.probabilities[0], 0.5);
    EXPECT_DOUBLE_EQ(w.probabilities[1], 0.5);
}

TEST(SelectRecipients, AllPeersWhenSEqualsPeerCount) {
    const auto w = compute_weights(history_with({0, 7, 100, 2}), 1e-6);
    auto rng = derive_rng(1, 0, 0, Purpose::kTest);
    const auto chosen = select_recipients(w, 4, rng);
    EXPECT_EQ(chosen, w.peers);
}

TEST(SelectRecipients, TooManyThrows) {
    const auto w = compute_weights(history_with({0, 0}), 1e-6);
    auto rng = derive_rng(1, 0, 0, Purpose::kTest);
    EXPECT_THROW(select_recipients(w, 3, rng), ProtocolError);
}

TEST(SelectRecipients, ReturnsDistinctPeers) {
    const auto w = compute_weights(history_with({0, 1, 2, 3, 4, 5, 6}), 1e-6);
    auto rng = derive_rng(2, 0, 0, Purpose::kTest);
    for (int t = 0; t < 200; ++t) {
        const auto chosen = select_recipients(w, 4, rng);
        EXPECT_EQ(std::set<ClientId>(chosen.begin(), chosen.end()).size(), 4u);
    }
}

TEST(SelectRecipients, StarvedPeerIsAlmostAlwaysChosen) {
    const auto w = compute_weights(history_with({0, 1000000, 2000000, 5000000}), 1e-6);
    auto rng = derive_rng(3, 0, 0, Purpose::kTest);
    int hits = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) hits += select_recipients(w, 1, rng).front() == ClientId{1};
    EXPECT_GT(static_cast<double>(hits) / trials, 0.999);
}

TEST(SelectRecipients, UniformCountsWithinFiveSigma) {
    const std::size_t peers = 7;
    const auto w = compute_weights(history_with(std::vector<std::uint64_t>(peers, 4)), 1e-6);
    auto rng = derive_rng(4, 0, 0, Purpose::kTest);
    const int trials = 10000;
    std::vector<int> hits(peers + 1, 0);
    for (int t = 0; t < trials; ++t) ++hits[select_recipients(w, 1, rng).front().value];
    const double p = 1.0 / peers;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (std::size_t j = 1; j <= peers; ++j) EXPECT_LT(std::abs(hits[j] - trials * p), 5 * sigma) << j;
}

TEST(SelectRecipients, PairFrequenciesMatchSuccessiveDrawOracle) {
    const std::vector<std::uint64_t> counts = {0, 1, 3};
    const auto w = compute_weights(history_with(counts), 0.5);
    std::vector<double> wt;
    for (auto c : counts) wt.push_back(1.0 / (static_cast<double>(c) + 0.5));
    const double total = wt[0] + wt[1] + wt[2];
    auto pair_prob = [&](int a, int b) {
        return wt[a] / total * wt[b] / (total - wt[a]) + wt[b] / total * wt[a] / (total - wt[b]);
    };
    auto rng = derive_rng(5, 0, 0, Purpose::kTest);
    const int trials = 20000;
    std::map<std::pair<std::size_t, std::size_t>, int> hits;
    for (int t = 0; t < trials; ++t) {
        const auto c = select_recipients(w, 2, rng);
        ++hits[{c[0].value, c[1].value}];
    }
    for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) {
            const double p = pair_prob(a, b);
            const double sigma = std::sqrt(trials * p * (1 - p));
            const int observed = hits[{static_cast<std::size_t>(a + 1), static_cast<std::size_t>(b + 1)}];
            EXPECT_LT(std::abs(observed - trials * p), 5 * sigma);
        }
    }
}

TEST(SelectRecipients, LargerWeightIsChosenAtLeastAsOften) {
    const auto w = compute_weights(history_with({0, 2, 4, 8}), 1.0);
    auto rng = derive_rng(6, 0, 0, Purpose::kTest);
    std::vector<int> hits(5, 0);
    for (int t = 0; t < 20000; ++t) {
        for (ClientId c : select_recipients(w, 2, rng)) ++hits[c.value];
    }
    for (std::size_t j = 1; j < 4; ++j) EXPECT_GT(hits[j], hits[j + 1]);
}

TEST(Dispatch, FullSharingToThreeRecipients) {
    auto c = make_client(0, 5);
    const std::vector<ClientId> to = {ClientId{1}, ClientId{3}, ClientId{4}};
    const auto msgs = dispatch(c, to, 4, 2, CommModel{});
    ASSERT_EQ(msgs.size(), 3u);
    for (const auto& m : msgs) {
        EXPECT_EQ(m.prompts.size(), 4u);
        EXPECT_EQ(m.round, 2);
        EXPECT_EQ(m.payload_bytes, 27356u);
    }
    for (ClientId r : to) EXPECT_EQ(c.selection_counts.count(r), 1u);
    EXPECT_EQ(c.selection_counts.count(ClientId{2}), 0u);
}

TEST(Dispatch, NoSharingSendsNothing) {
    auto c = make_client(0, 3);
    const std::vector<ClientId> to = {ClientId{1}};
    EXPECT_TRUE(dispatch(c, to, 0, 0, CommModel{}).empty());
    EXPECT_EQ(c.selection_counts.count(ClientId{1}), 0u);
}

TEST(Dispatch, PartialSharingCarriesSlotZero) {
    auto c = make_client(2, 3);
    const std::vector<ClientId> to = {ClientId{0}};
    const auto msgs = dispatch(c, to, 1, 0, CommModel{});
    ASSERT_EQ(msgs.front().prompts.size(), 1u);
    EXPECT_EQ(msgs.front().prompts[0], PromptVector(c.active_prompts.slot(0)));
}

TEST(Receive, AppendsEveryPrompt) {
    auto a = make_client(0, 3);
    auto b = make_client(1, 3);
    auto r = make_client(2, 3);
    const std::vector<ClientId> to = {ClientId{2}};
    auto msgs = dispatch(a, to, 4, 0, CommModel{});
    auto more = dispatch(b, to, 4, 0, CommModel{});
    msgs.insert(msgs.end(), more.begin(), more.end());
    receive(r, msgs);
    EXPECT_EQ(r.pool.size(), 8u);
    EXPECT_EQ(r.received_total, 2u);
}

TEST(Receive, NoMessagesLeavesPoolEmpty) {
    auto r = make_client(0, 2);
    receive(r, {});
    EXPECT_TRUE(r.pool.empty());
}

TEST(Receive, WrongDimensionIsCorruption) {
    auto r = make_client(0, 2);
    PromptMessage m{ClientId{1}, ClientId{0}, 0, {PromptVector::Zero(15)}, 1};
    EXPECT_THROW(receive(r, std::span<const PromptMessage>(&m, 1)), ProtocolError);
}

TEST(Receive, WrongRecipientIsRejected) {
    auto r = make_client(0, 3);
    PromptMessage m{ClientId{1}, ClientId{2}, 0, {PromptVector::Zero(16)}, 1};
    EXPECT_THROW(receive(r, std::span<const PromptMessage>(&m, 1)), ProtocolError);
}

TEST(PromptPool, PruneKeepsRetentionWindow) {
    PromptPool pool;
    for (int r = 0; r < 5; ++r) pool.add(PoolEntry{PromptVector::Zero(2), ClientId{1}, r, 0});
    pool.prune(5, 1);
    ASSERT_EQ(pool.size(), 1u);
    EXPECT_EQ(pool.entries().front().received_round, 4);
}

PromptPool pool_from(const std::vector<std::pair<std::size_t, int>>& source_slot, int dim = 16) {
    PromptPool pool;
    for (std::size_t i = 0; i < source_slot.size(); ++i) {
        pool.add(PoolEntry{PromptVector::Constant(dim, 1000.0 + static_cast<double>(i)),
                           ClientId{source_slot[i].first}, 0, source_slot[i].second});
    }
    return pool;
}

TEST(SamplePool, EmptyPoolLeavesPromptsUnchanged) {
    auto c = make_client(0, 3);
    auto rng = derive_rng(0, 0, 0, Purpose::kTest);
    EXPECT_EQ(sample_pool(c.active_prompts, PromptPool{}, 4, PoolSlotPolicy::kAligned, rng), c.active_prompts);
}

TEST(SamplePool, FourDistinctSourcesFillFourSlots) {
    for (auto policy : {PoolSlotPolicy::kAligned, PoolSlotPolicy::kAny}) {
        const PromptPool pool = pool_from({{1, 0}, {2, 1}, {3, 2}, {4, 3}});
        auto c = make_client(0, 5);
        std::set<ClientId> seen;
        for (std::uint64_t s = 0; s < 50; ++s) {
            auto rng = derive_rng(s, 0, 0, Purpose::kTest);
            const auto out = sample_pool(c.active_prompts, pool, 4, policy, rng);
            std::set<ClientId> sources(out.sources().begin(), out.sources().end());
            EXPECT_EQ(sources.size(), 4u);
            EXPECT_EQ(sources.count(ClientId{0}), 0u);
        }
    }
}

TEST(SamplePool, RetainedSlotsKeepLocalVectors) {
    const PromptPool pool = pool_from({{1, 0}, {1, 1}, {1, 2}, {1, 3}, {2, 0}, {2, 1}});
    auto c = make_client(0, 3);
    auto rng = derive_rng(9, 0, 0, Purpose::kTest);
    const auto out = sample_pool(c.active_prompts, pool, 2, PoolSlotPolicy::kAligned, rng);
    EXPECT_NE(out.source(0), ClientId{0});
    EXPECT_NE(out.source(1), ClientId{0});
    EXPECT_EQ(out.source(2), ClientId{0});
    EXPECT_EQ(out.source(3), ClientId{0});
    EXPECT_EQ(PromptVector(out.slot(3)), PromptVector(c.active_prompts.slot(3)));
}

TEST(SamplePool, FewerEntriesThanSlotsKeepsTheRest) {
    const PromptPool pool = pool_from({{1, 0}});
    auto c = make_client(0, 2);
    auto rng = derive_rng(1, 0, 0, Purpose::kTest);
    const auto out = sample_pool(c.active_prompts, pool, 4, PoolSlotPolicy::kAny, rng);
    EXPECT_EQ(out.source(0), ClientId{1});
    for (std::size_t m = 1; m < 4; ++m) EXPECT_EQ(out.source(m), ClientId{0});
}

using Outcome = std::vector<int>;

// Every sequence of pool-entry indices the greedy rule can produce.
std::set<Outcome> enumerate_greedy(const std::vector<std::pair<std::size_t, int>>& entries, int slots,
                                   bool aligned) {
    std::vector<std::size_t> sources;
    for (const auto& e : entries) sources.push_back(e.first);
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

    std::set<Outcome> out;
    std::vector<std::size_t> order = sources;
    do {
        std::function<void(int, Outcome, std::set<std::size_t>)> step = [&](int slot, Outcome picked,
                                                                          std::set<std::size_t> used_sources) {
            if (slot == slots) {
                out.insert(picked);
                return;
            }
            auto eligible = [&](std::size_t i) {
                return std::find(picked.begin(), picked.end(), static_cast<int>(i)) == picked.end() &&
                       (!aligned || entries[i].second == slot);
            };
            for (std::size_t src : order) {
                if (used_sources.count(src)) continue;
                std::vector<std::size_t> cands;
                for (std::size_t i = 0; i < entries.size(); ++i) {
                    if (entries[i].first == src && eligible(i)) cands.push_back(i);
                }
                if (cands.empty()) continue;
                for (std::size_t i : cands) {
                    auto p = picked;
                    p.push_back(static_cast<int>(i));
                    auto u = used_sources;
                    u.insert(src);
                    step(slot + 1, p, u);
                }
                return;
            }
            bool any = false;
            for (std::size_t i = 0; i < entries.size(); ++i) {
                if (!eligible(i)) continue;
                any = true;
                auto p = picked;
                p.push_back(static_cast<int>(i));
                step(slot + 1, p, used_sources);
            }
            if (!any) {
                auto p = picked;
                p.push_back(-1);
                step(slot + 1, p, used_sources);
            }
        };
        step(0, {}, {});
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
}

void check_two_source_pool(PoolSlotPolicy policy) {
    std::vector<std::pair<std::size_t, int>> layout;
    for (std::size_t src : {1u, 2u}) {
        for (int slot = 0; slot < 4; ++slot) layout.emplace_back(src, slot);
    }
    const auto outcomes = enumerate_greedy(layout, 4, policy == PoolSlotPolicy::kAligned);
    ASSERT_FALSE(outcomes.empty());
    for (const auto& o : outcomes) {
        ASSERT_GE(o[0], 0);
        ASSERT_GE(o[1], 0);
        EXPECT_NE(layout[static_cast<std::size_t>(o[0])].first, layout[static_cast<std::size_t>(o[1])].first);
    }

    const PromptPool pool = pool_from(layout);
    auto c = make_client(0, 3);
    std::set<Outcome> observed;
    for (std::uint64_t s = 0; s < 20000; ++s) {
        auto rng = derive_rng(s, 0, 0, Purpose::kTest);
        const auto out = sample_pool(c.active_prompts, pool, 4, policy, rng);
        Outcome o;
        for (std::size_t m = 0; m < 4; ++m) o.push_back(static_cast<int>(out.slot(m)(0) - 1000.0));
        EXPECT_TRUE(outcomes.count(o)) << "outcome outside the greedy rule";
        observed.insert(o);
    }
    EXPECT_EQ(observed.size(), outcomes.size());
}

TEST(SamplePool, TwoSourcePoolAlignedMatchesEnumeration) { check_two_source_pool(PoolSlotPolicy::kAligned); }

TEST(SamplePool, TwoSourcePoolAnyMatchesEnumeration) { check_two_source_pool(PoolSlotPolicy::kAny); }

TEST(SamplePool, DistinctSourcePrefixOnRandomPools) {
    for (std::uint64_t s = 0; s < 300; ++s) {
        auto gen = derive_rng(s, 1, 0, Purpose::kTest);
        std::vector<std::pair<std::size_t, int>> layout;
        const int n = 1 + static_cast<int>(gen() % 12);
        for (int i = 0; i < n; ++i) layout.emplace_back(1 + gen() % 5, static_cast<int>(gen() % 4));
        const PromptPool pool = pool_from(layout);
        std::set<std::size_t> distinct;
        for (auto& e : layout) distinct.insert(e.first);
        auto c = make_client(0, 6);
        auto rng = derive_rng(s, 2, 0, Purpose::kTest);
        const auto out = sample_pool(c.active_prompts, pool, 4, PoolSlotPolicy::kAny, rng);
        const std::size_t prefix = std::min<std::size_t>(4, distinct.size());
        std::set<ClientId> prefix_sources(out.sources().begin(), out.sources().begin() + static_cast<long>(prefix));
        EXPECT_EQ(prefix_sources.size(), prefix);
    }
}

}  // namespace
}  // namespace zerodfl
