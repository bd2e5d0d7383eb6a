#include "zerodfl/protocol.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <random>
#include <string>

namespace zerodfl {

double SelectionWeights::probability(ClientId peer) const {
    const auto it = std::lower_bound(peers.begin(), peers.end(), peer);
    if (it == peers.end() || *it != peer) throw std::out_of_range("not a peer of this client");
    return probabilities[static_cast<std::size_t>(it - peers.begin())];
}

SelectionWeights compute_weights(const SelectionHistory& history, double epsilon) {
    SelectionWeights out;
    out.peers.reserve(history.num_peers());
    out.weights.reserve(history.num_peers());
    for (const auto& [peer, count] : history.counts()) {
        out.peers.push_back(peer);
        out.weights.push_back(1.0 / (static_cast<double>(count) + epsilon));
    }
    const double total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
    out.probabilities.reserve(out.weights.size());
    for (double w : out.weights) out.probabilities.push_back(w / total);
    return out;
}

std::vector<ClientId> select_recipients(const SelectionWeights& weights, int count, RandomStream& rng) {
    const std::size_t peers = weights.peers.size();
    if (count < 0 || static_cast<std::size_t>(count) > peers) {
        throw ProtocolError("cannot select " + std::to_string(count) + " recipients from " +
                            std::to_string(peers) + " peers");
    }
    std::vector<ClientId> chosen;
    if (static_cast<std::size_t>(count) == peers) {
        chosen = weights.peers;
        return chosen;
    }

    std::vector<std::size_t> remaining(peers);
    std::iota(remaining.begin(), remaining.end(), std::size_t{0});
    chosen.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        double total = 0.0;
        for (std::size_t idx : remaining) total += weights.weights[idx];
        const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
        std::size_t pick = remaining.size() - 1;
        double running = 0.0;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            running += weights.weights[remaining[i]];
            if (target < running) {
                pick = i;
                break;
            }
        }
        chosen.push_back(weights.peers[remaining[pick]]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::vector<PromptMessage> dispatch(ClientState& client, std::span<const ClientId> recipients, int shared,
                                    int round, const CommModel& model) {
    std::vector<PromptMessage> out;
    if (shared <= 0) return out;
    const auto& active = client.active_prompts;
    if (static_cast<std::size_t>(shared) > active.size()) {
        throw ProtocolError("cannot share " + std::to_string(shared) + " of " +
                            std::to_string(active.size()) + " prompts");
    }
    std::vector<PromptVector> payload;
    payload.reserve(static_cast<std::size_t>(shared));
    for (int m = 0; m < shared; ++m) payload.emplace_back(active.slot(static_cast<std::size_t>(m)));
    const auto bytes = static_cast<std::uint64_t>(message_bytes(
        model, shared, static_cast<int>(active.dim()), static_cast<int>(active.size())));

    out.reserve(recipients.size());
    for (ClientId to : recipients) {
        if (to == client.id) throw ProtocolError("a client cannot send to itself");
        out.push_back(PromptMessage{client.id, to, round, payload, bytes});
        client.selection_counts.record(to);
    }
    return out;
}

void receive(ClientState& client, std::span<const PromptMessage> messages) {
    const auto dim = static_cast<Eigen::Index>(client.active_prompts.dim());
    for (const auto& message : messages) {
        if (message.recipient != client.id) {
            throw ProtocolError("message for client " + std::to_string(message.recipient.value) +
                                " delivered to client " + std::to_string(client.id.value));
        }
        for (std::size_t m = 0; m < message.prompts.size(); ++m) {
            const auto& v = message.prompts[m];
            if (v.size() != dim || !v.allFinite()) {
                throw ProtocolError("protocol corruption: client " + std::to_string(message.sender.value) +
                                    " sent a prompt of length " + std::to_string(v.size()) +
                                    " (expected " + std::to_string(dim) + ") in round " +
                                    std::to_string(message.round));
            }
        }
    }
    for (const auto& message : messages) {
        for (std::size_t m = 0; m < message.prompts.size(); ++m) {
            client.pool.add(PoolEntry{message.prompts[m], message.sender, message.round, static_cast<int>(m)});
        }
        ++client.received_total;
    }
}

PromptSet sample_pool(const PromptSet& active, const PromptPool& pool, int shared, PoolSlotPolicy policy,
                      RandomStream& rng) {
    PromptSet out = active;
    const int slots = std::min(shared, static_cast<int>(active.size()));
    if (slots <= 0 || pool.empty()) return out;

    const auto& entries = pool.entries();
    std::vector<ClientId> sources;
    for (const auto& e : entries) sources.push_back(e.source);
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
    std::shuffle(sources.begin(), sources.end(), rng);

    std::vector<bool> entry_used(entries.size(), false);
    std::vector<bool> source_used(sources.size(), false);
    auto eligible = [&](std::size_t i, int slot) {
        return !entry_used[i] && (policy == PoolSlotPolicy::kAny || entries[i].slot == slot);
    };
    auto uniform_pick = [&rng](const std::vector<std::size_t>& candidates) {
        return candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    };

    std::vector<std::size_t> candidates;
    for (int slot = 0; slot < slots; ++slot) {
        bool filled = false;
        for (std::size_t s = 0; s < sources.size() && !filled; ++s) {
            if (source_used[s]) continue;
            candidates.clear();
            for (std::size_t i = 0; i < entries.size(); ++i) {
                if (entries[i].source == sources[s] && eligible(i, slot)) candidates.push_back(i);
            }
            if (candidates.empty()) continue;
            const std::size_t pick = uniform_pick(candidates);
            source_used[s] = true;
            entry_used[pick] = true;
            out.set_slot(static_cast<std::size_t>(slot), entries[pick].values, entries[pick].source);
            filled = true;
        }
        if (filled) continue;
        candidates.clear();
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (eligible(i, slot)) candidates.push_back(i);
        }
        if (candidates.empty()) continue;
        const std::size_t pick = uniform_pick(candidates);
        entry_used[pick] = true;
        out.set_slot(static_cast<std::size_t>(slot), entries[pick].values, entries[pick].source);
    }
    return out;
}

PromptSet sample_pool(ClientState& client, const FederationConfig& cfg, int round, RandomStream& rng) {
    client.pool.prune(round, cfg.retention_rounds);
    return sample_pool(client.active_prompts, client.pool, cfg.shared_prompts, cfg.pool_slot_policy, rng);
}

std::size_t Federation::trainable_parameter_count() const {
    std::size_t total = 0;
    for (const auto& c : clients) total += c.active_prompts.size() * c.active_prompts.dim();
    return total;
}

std::uint64_t Federation::fingerprint() const {
    Fingerprint fp;
    for (const auto& c : clients) fp.add(zerodfl::fingerprint(c));
    for (const auto& e : encoders) fp.add(e->fingerprint());
    return fp.value();
}

Federation make_federation(const Scenario& scenario, const FederationConfig& cfg) {
    Federation federation;
    for (const auto& domain : scenario.domains()) federation.encoders.push_back(domain.encoder);
    const auto& datasets = scenario.client_datasets();
    federation.clients.reserve(datasets.size());
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const ClientId id{i};
        Eigen::MatrixXd values = Eigen::MatrixXd::Zero(cfg.prompt_dim, cfg.prompts_per_client);
        if (cfg.prompt_init_std > 0.0) {
            RandomStream rng = derive_rng(cfg.seed, id, 0, Purpose::kPromptInit);
            std::normal_distribution<double> normal(0.0, cfg.prompt_init_std);
            for (Eigen::Index m = 0; m < values.cols(); ++m) {
                for (Eigen::Index k = 0; k < values.rows(); ++k) values(k, m) = normal(rng);
            }
        }
        ClientState client;
        client.id = id;
        client.dataset = datasets[i];
        client.active_prompts = PromptSet(std::move(values), id);
        client.selection_counts = SelectionHistory(id, datasets.size());
        federation.clients.push_back(std::move(client));
    }
    return federation;
}

namespace {

struct ClientRoundResult {
    double loss = 0.0;
    std::vector<PromptMessage> messages;
};

ClientRoundResult run_client(ClientState& client, const SurrogateEncoder& enc, const FederationConfig& cfg,
                             int round) {
    RandomStream pool_rng = derive_rng(cfg.seed, client.id, static_cast<std::uint64_t>(round), Purpose::kPoolSample);
    client.active_prompts = sample_pool(client, cfg, round, pool_rng);

    RandomStream adapt_rng = derive_rng(cfg.seed, client.id, static_cast<std::uint64_t>(round), Purpose::kLocalAdapt);
    AdaptResult adapted = local_adapt(client, enc, cfg, adapt_rng);
    if (!adapted.prompts.all_finite()) {
        throw std::runtime_error("local adaptation of client " + std::to_string(client.id.value) +
                                 " diverged in round " + std::to_string(round));
    }
    client.active_prompts = std::move(adapted.prompts);

    ClientRoundResult out;
    out.loss = adapted.epoch_losses.empty() ? 0.0 : adapted.epoch_losses.back();
    if (cfg.shared_prompts > 0 && cfg.num_clients > 1) {
        const SelectionWeights weights = compute_weights(client.selection_counts, cfg.selection_epsilon);
        RandomStream select_rng =
            derive_rng(cfg.seed, client.id, static_cast<std::uint64_t>(round), Purpose::kRecipientSelect);
        const auto recipients = select_recipients(weights, effective_recipients(cfg), select_rng);
        out.messages = dispatch(client, recipients, cfg.shared_prompts, round, cfg.comm_model);
    }
    return out;
}

}  // namespace

RoundOutcome run_round(Federation& federation, const FederationConfig& cfg, int round, bool parallel) {
    if (round < 0 || round >= cfg.rounds) {
        throw ProtocolError("round " + std::to_string(round) + " outside [0, " + std::to_string(cfg.rounds) + ")");
    }
    auto& clients = federation.clients;
    std::vector<ClientRoundResult> results(clients.size());

    if (parallel && clients.size() > 1) {
        std::vector<std::future<ClientRoundResult>> futures;
        futures.reserve(clients.size());
        for (auto& client : clients) {
            const SurrogateEncoder& enc = federation.encoder_of(client);
            futures.push_back(std::async(std::launch::async, [&client, &enc, &cfg, round] {
                return run_client(client, enc, cfg, round);
            }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < clients.size(); ++i) {
            results[i] = run_client(clients[i], federation.encoder_of(clients[i]), cfg, round);
        }
    }

    RoundOutcome out;
    out.metrics.round = round;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        out.metrics.per_client_loss.emplace(clients[i].id, results[i].loss);
        for (auto& m : results[i].messages) out.messages.push_back(std::move(m));
    }

    // Barrier: delivery happens only after every client has dispatched.
    std::vector<std::vector<PromptMessage>> inbox(clients.size());
    for (const auto& m : out.messages) {
        if (m.recipient.value >= clients.size()) throw ProtocolError("message to unknown client");
        inbox[m.recipient.value].push_back(m);
    }
    for (std::size_t i = 0; i < clients.size(); ++i) receive(clients[i], inbox[i]);

    out.metrics.messages_sent = out.messages.size();
    for (const auto& m : out.messages) out.metrics.round_bytes += static_cast<double>(m.payload_bytes);
    return out;
}

}  // namespace zerodfl
