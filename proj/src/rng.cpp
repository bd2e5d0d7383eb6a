#include "zerodfl/rng.hpp"

#include <array>

#include "zerodfl/types.hpp"

namespace zerodfl {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

RandomStream derive_rng(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t round,
                        Purpose purpose) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ stream_id);
    key = splitmix64(key ^ round);
    key = splitmix64(key ^ static_cast<std::uint64_t>(purpose));

    // Fill the whole engine state from the key rather than a single word.
    std::array<std::uint32_t, 8> words{};
    std::uint64_t state = key;
    for (std::size_t i = 0; i < words.size(); i += 2) {
        state = splitmix64(state);
        words[i] = static_cast<std::uint32_t>(state);
        words[i + 1] = static_cast<std::uint32_t>(state >> 32);
    }
    std::seed_seq seq(words.begin(), words.end());
    return RandomStream(seq);
}

RandomStream derive_rng(std::uint64_t seed, ClientId client, std::uint64_t round, Purpose purpose) {
    return derive_rng(seed, static_cast<std::uint64_t>(client.value), round, purpose);
}

}  // namespace zerodfl
