#pragma once

#include <cstdint>
#include <vector>

#include "zerodfl/types.hpp"

namespace zerodfl {

/// One sender-to-recipient payload. `prompts[m]` is the sender's slot m, so
/// a message always carries a slot prefix [0, M_s).
struct PromptMessage {
    ClientId sender;
    ClientId recipient;
    int round = 0;
    std::vector<PromptVector> prompts;
    std::uint64_t payload_bytes = 0;
};

}  // namespace zerodfl
