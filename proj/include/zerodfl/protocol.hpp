#pragma once

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "zerodfl/comms.hpp"
#include "zerodfl/config.hpp"
#include "zerodfl/data.hpp"
#include "zerodfl/learner.hpp"
#include "zerodfl/message.hpp"
#include "zerodfl/rng.hpp"
#include "zerodfl/types.hpp"

namespace zerodfl {

/// Inverse-frequency recipient weights of one sender, ordered by peer id.
struct SelectionWeights {
    std::vector<ClientId> peers;
    /// w_j = 1 / (F_j + epsilon)
    std::vector<double> weights;
    /// w_j / sum_k w_k
    std::vector<double> probabilities;

    double probability(ClientId peer) const;
};

SelectionWeights compute_weights(const SelectionHistory& history, double epsilon);

/// S distinct peers drawn by successive weighted draws without replacement
/// (draw, remove, renormalize). Returned in ascending id order.
/// Throws ProtocolError if S exceeds the number of peers.
std::vector<ClientId> select_recipients(const SelectionWeights& weights, int count, RandomStream& rng);

/// One message per recipient carrying active slots [0, shared). No messages
/// when shared == 0. Each recipient's selection count goes up by one.
std::vector<PromptMessage> dispatch(ClientState& client, std::span<const ClientId> recipients, int shared,
                                    int round, const CommModel& model);

/// Appends every received prompt to the pool. A message addressed elsewhere
/// or carrying a vector of the wrong length throws ProtocolError.
void receive(ClientState& client, std::span<const PromptMessage> messages);

/// Replacement of the shared slots [0, shared) from the pool.
///
/// Distinct sources are shuffled; slots are filled in index order, each from
/// the next unused source, so the first min(shared, #sources) filled slots
/// have pairwise distinct sources. Once sources run out, remaining slots are
/// drawn uniformly from leftover entries. Slots that cannot be filled keep
/// their current vector. Under kAligned a slot only takes prompts that were
/// sent from the same slot index; under kAny the chosen source contributes a
/// uniformly random one of its prompts.
PromptSet sample_pool(const PromptSet& active, const PromptPool& pool, int shared, PoolSlotPolicy policy,
                      RandomStream& rng);

/// Pool-in-place variant used by the round loop: prunes the pool to the
/// retention window ending at `round`, then samples.
PromptSet sample_pool(ClientState& client, const FederationConfig& cfg, int round, RandomStream& rng);

/// Clients plus the frozen encoder of every domain.
struct Federation {
    std::vector<ClientState> clients;
    std::vector<std::shared_ptr<const SurrogateEncoder>> encoders;

    const SurrogateEncoder& encoder_of(const ClientState& client) const {
        return *encoders.at(static_cast<std::size_t>(client.dataset.domain));
    }

    std::size_t trainable_parameter_count() const;
    std::uint64_t fingerprint() const;
};

/// Clients with freshly initialized prompts (i.i.d. N(0, prompt_init_std^2)).
Federation make_federation(const Scenario& scenario, const FederationConfig& cfg);

struct RoundMetrics {
    int round = 0;
    std::map<ClientId, double> per_client_loss;
    std::uint64_t messages_sent = 0;
    double round_bytes = 0.0;
};

struct RoundOutcome {
    RoundMetrics metrics;
    std::vector<PromptMessage> messages;
};

/// One synchronous round. Per client, in order: sample_pool, local_adapt,
/// compute_weights, select_recipients, dispatch. Every message is delivered
/// after all clients have dispatched, so nothing trained this round is read
/// before the next one.
///
/// With `parallel` set, per-client work runs on worker threads; the result is
/// identical to sequential execution because every client only touches its
/// own state and its own random streams.
RoundOutcome run_round(Federation& federation, const FederationConfig& cfg, int round,
                       bool parallel = false);

}  // namespace zerodfl
