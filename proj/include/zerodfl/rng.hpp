#pragma once

#include <cstdint>
#include <random>

namespace zerodfl {

struct ClientId;

/// What a random stream is used for. Part of the stream key, so two purposes
/// in the same (client, round) never share draws.
enum class Purpose : std::uint32_t {
    kPromptInit = 1,
    kPoolSample = 2,
    kLocalAdapt = 3,
    kRecipientSelect = 4,
    kPlantDomain = 5,
    kClassSplit = 6,
    kTrainSamples = 7,
    kTestSamples = 8,
    kDomainNoise = 9,
    kTest = 100,
};

using RandomStream = std::mt19937_64;

/// Counter-based stream derivation. The stream for (seed, stream_id, round,
/// purpose) is a pure function of that tuple, so the order in which clients
/// are processed within a round never changes any client's draws.
///
/// `stream_id` is the client index for per-client streams; generation code
/// uses it for domain and class indices.
RandomStream derive_rng(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t round,
                        Purpose purpose);

RandomStream derive_rng(std::uint64_t seed, ClientId client, std::uint64_t round, Purpose purpose);

}  // namespace zerodfl
