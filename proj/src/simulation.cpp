#include "zerodfl/simulation.hpp"

#include <algorithm>

namespace zerodfl {

std::vector<int> evaluation_rounds(const FederationConfig& cfg) {
    std::vector<int> out;
    for (int done = 1; done <= cfg.rounds; ++done) {
        if (done == 1 || done % cfg.eval_every == 0 || done == cfg.rounds) out.push_back(done);
    }
    return out;
}

SimulationResult simulate(const Scenario& scenario, const FederationConfig& cfg, const SimulationOptions& options) {
    if (auto violations = validate_config(cfg); !violations.empty()) throw ConfigError(std::move(violations));
    if (scenario.num_clients() != static_cast<std::size_t>(cfg.num_clients)) {
        throw ConfigError("scenario has " + std::to_string(scenario.num_clients()) + " clients, config has " +
                          std::to_string(cfg.num_clients));
    }

    SimulationResult result;
    result.federation = make_federation(scenario, cfg);
    const std::vector<int> eval_at = evaluation_rounds(cfg);

    for (int round = 0; round < cfg.rounds; ++round) {
        RoundOutcome outcome = run_round(result.federation, cfg, round, options.parallel);
        result.ledger.record(round, outcome.messages);
        if (options.on_round) options.on_round(outcome);
        result.rounds.push_back(std::move(outcome.metrics));
        if (std::binary_search(eval_at.begin(), eval_at.end(), round + 1)) {
            result.evaluations.push_back(evaluate_federation(result.federation, scenario, cfg, round + 1));
        }
    }
    return result;
}

}  // namespace zerodfl
