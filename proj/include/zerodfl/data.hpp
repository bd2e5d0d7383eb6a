#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zerodfl/config.hpp"
#include "zerodfl/learner.hpp"
#include "zerodfl/rng.hpp"
#include "zerodfl/types.hpp"

namespace zerodfl {

enum class ScenarioKind { kHeterogeneous, kHomogeneous };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& text);

struct ClassSpec {
    ClassId class_id = 0;
    Eigen::VectorXd token;
    /// encode_text(v*, class_id) under the domain encoder.
    Eigen::VectorXd prototype;
    int domain_id = 0;
};

/// Output of plant_domain. `hidden_context` is the generating v*.
struct PlantedDomain {
    std::shared_ptr<const SurrogateEncoder> encoder;
    std::vector<ClassSpec> classes;
    PromptSet hidden_context;
};

/// Draws a domain: frozen encoder, class tokens, hidden context v*, and class
/// prototypes generated through v*. Class ids are first_class_id,
/// first_class_id + 1, ...
PlantedDomain plant_domain(int domain_id, int num_classes, ClassId first_class_id,
                           const FederationConfig& cfg, RandomStream& rng);

/// Image features whose embedding clusters around `spec.prototype`: the
/// prototype lifted through the pseudo-inverse of the image map, plus
/// isotropic Gaussian noise of standard deviation `sigma`.
std::vector<Sample> draw_class_samples(const SurrogateEncoder& enc, const ClassSpec& spec, int count,
                                       double sigma, RandomStream& rng);

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Class-universe layout of a scenario: how many seen classes each domain has
/// and how many of them each client holds.
struct ScenarioParams {
    ScenarioKind kind = ScenarioKind::kHomogeneous;
    std::vector<int> seen_classes_per_domain;
    int classes_per_client = 1;

    int num_clients() const;
    /// Clients of domain `d` (seen classes / classes_per_client).
    int clients_in_domain(std::size_t d) const;
};

/// Homogeneous: one domain with C*N seen classes. Heterogeneous: C clients
/// split as evenly as possible over min(num_domains, C) domains, at least two.
ScenarioParams scenario_params_from_config(const FederationConfig& cfg, ScenarioKind kind);

/// Re-shards the same seen classes at `classes_per_client` per client.
ScenarioParams shrink_clients(const ScenarioParams& params, int classes_per_client);

/// cfg with num_clients and classes_per_client taken from `params`.
FederationConfig apply_params(FederationConfig cfg, const ScenarioParams& params);

struct DomainData {
    int domain_id = 0;
    std::shared_ptr<const SurrogateEncoder> encoder;
    double noise_sigma = 0.0;
    std::vector<ClassSpec> classes;
    std::vector<ClassId> seen_classes;
    std::vector<ClassId> unseen_classes;
    std::vector<Sample> test_set;
    std::vector<ClientId> clients;
};

class OracleKey;

/// A generated federation task. Immutable once built. The hidden contexts
/// are only reachable with an OracleKey, which protocol and learner code
/// never obtain.
class Scenario {
public:
    ScenarioKind kind() const { return kind_; }
    const ScenarioParams& params() const { return params_; }
    const std::vector<ClientDataset>& client_datasets() const { return clients_; }
    const std::vector<DomainData>& domains() const { return domains_; }
    const DomainData& domain_of(ClientId client) const;

    std::size_t num_clients() const { return clients_.size(); }

    /// Union of every domain's unseen-class test samples.
    std::vector<Sample> test_set() const;

    const std::map<int, PromptSet>& hidden_contexts(const OracleKey&) const { return hidden_; }

    /// Full scenario document. The "oracle_only" key carries v* only when
    /// requested.
    nlohmann::ordered_json to_json(bool include_oracle = false) const;
    static Scenario from_json(const nlohmann::json& doc);

private:
    friend Scenario build_scenario(const ScenarioParams&, const FederationConfig&);

    ScenarioKind kind_ = ScenarioKind::kHomogeneous;
    ScenarioParams params_;
    std::vector<ClientDataset> clients_;
    std::vector<DomainData> domains_;
    std::map<int, PromptSet> hidden_;
};

/// Builds the task: each domain's classes split 50/50 into seen and unseen,
/// seen classes dealt to clients in disjoint blocks of N, K shots each, and
/// `test_samples_per_class` test samples per unseen class. Every class draws
/// its samples from its own stream, so re-sharding leaves the data unchanged.
Scenario build_scenario(const ScenarioParams& params, const FederationConfig& cfg);
Scenario build_scenario(ScenarioKind kind, const FederationConfig& cfg);

}  // namespace zerodfl
