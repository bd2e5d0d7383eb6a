#pragma once

#include <functional>
#include <vector>

#include "zerodfl/comms.hpp"
#include "zerodfl/config.hpp"
#include "zerodfl/data.hpp"
#include "zerodfl/metrics.hpp"
#include "zerodfl/protocol.hpp"

namespace zerodfl {

struct SimulationOptions {
    /// Run per-client work on worker threads (results are unchanged).
    bool parallel = false;
    /// Called after every round's delivery barrier.
    std::function<void(const RoundOutcome&)> on_round;
};

struct SimulationResult {
    Federation federation;
    std::vector<RoundMetrics> rounds;
    std::vector<EvalReport> evaluations;
    CommLedger ledger;
};

/// Completed-round counts at which the federation is evaluated: 1, then every
/// eval_every, then the last round.
std::vector<int> evaluation_rounds(const FederationConfig& cfg);

/// Runs cfg.rounds rounds on `scenario`. The config is validated first and
/// violations raise ConfigError.
SimulationResult simulate(const Scenario& scenario, const FederationConfig& cfg,
                          const SimulationOptions& options = {});

}  // namespace zerodfl
