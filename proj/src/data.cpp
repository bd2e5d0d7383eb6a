#include "zerodfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace zerodfl {

std::string to_string(ScenarioKind kind) {
    return kind == ScenarioKind::kHeterogeneous ? "heterogeneous" : "homogeneous";
}

ScenarioKind parse_scenario_kind(const std::string& text) {
    if (text == "heterogeneous") return ScenarioKind::kHeterogeneous;
    if (text == "homogeneous") return ScenarioKind::kHomogeneous;
    throw ScenarioError("unknown scenario kind \"" + text + "\" (expected heterogeneous or homogeneous)");
}

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, RandomStream& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    Eigen::MatrixXd m(rows, cols);
    // Fill column-major so the draw order is fixed by the storage order.
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
}

Eigen::VectorXd gaussian_vector(Eigen::Index n, double stddev, RandomStream& rng) {
    return gaussian_matrix(n, 1, stddev, rng).col(0);
}

}  // namespace

PlantedDomain plant_domain(int domain_id, int num_classes, ClassId first_class_id,
                           const FederationConfig& cfg, RandomStream& rng) {
    if (num_classes < 2) throw ScenarioError("plant_domain needs at least 2 classes");
    const int prompts = cfg.prompts_per_client;
    const int dim = cfg.prompt_dim;
    const double scale = cfg.token_scale;

    // Unit-variance pre-activations when prompts and tokens have entries of
    // standard deviation `scale`.
    const double map_std = 1.0 / (scale * std::sqrt(static_cast<double>((prompts + 1) * dim)));
    Eigen::MatrixXd text_map = gaussian_matrix(cfg.embed_dim, (prompts + 1) * dim, map_std, rng);

    // Orthonormal rows: the pseudo-inverse is the transpose and noise added
    // in image space stays isotropic in the embedding.
    const Eigen::MatrixXd raw = gaussian_matrix(cfg.image_dim, cfg.embed_dim, 1.0, rng);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    const Eigen::MatrixXd basis =
        qr.householderQ() * Eigen::MatrixXd::Identity(cfg.image_dim, cfg.embed_dim);
    Eigen::MatrixXd image_map = basis.transpose();

    PlantedDomain out;
    out.hidden_context = PromptSet(gaussian_matrix(dim, prompts, scale, rng), ClientId{0});

    std::map<ClassId, Eigen::VectorXd> tokens;
    for (int k = 0; k < num_classes; ++k) tokens.emplace(first_class_id + k, gaussian_vector(dim, scale, rng));

    out.encoder = std::make_shared<const SurrogateEncoder>(std::move(text_map), std::move(image_map),
                                                           tokens, prompts, dim);
    out.classes.reserve(static_cast<std::size_t>(num_classes));
    for (const auto& [id, token] : tokens) {
        out.classes.push_back(
            ClassSpec{id, token, encode_text(out.hidden_context, id, *out.encoder), domain_id});
    }
    return out;
}

std::vector<Sample> draw_class_samples(const SurrogateEncoder& enc, const ClassSpec& spec, int count,
                                       double sigma, RandomStream& rng) {
    const Eigen::MatrixXd lift = enc.image_map().completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::VectorXd center = lift * spec.prototype;
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int k = 0; k < count; ++k) {
        Eigen::VectorXd x = center;
        if (sigma > 0.0) x += gaussian_vector(center.size(), sigma, rng);
        out.push_back(Sample{std::move(x), spec.class_id});
    }
    return out;
}

int ScenarioParams::num_clients() const {
    int total = 0;
    for (std::size_t d = 0; d < seen_classes_per_domain.size(); ++d) total += clients_in_domain(d);
    return total;
}

int ScenarioParams::clients_in_domain(std::size_t d) const {
    return classes_per_client > 0 ? seen_classes_per_domain.at(d) / classes_per_client : 0;
}

ScenarioParams scenario_params_from_config(const FederationConfig& cfg, ScenarioKind kind) {
    ScenarioParams params;
    params.kind = kind;
    params.classes_per_client = cfg.classes_per_client;
    if (kind == ScenarioKind::kHomogeneous) {
        params.seen_classes_per_domain = {cfg.num_clients * cfg.classes_per_client};
        return params;
    }
    if (cfg.num_clients < 2) {
        throw ScenarioError("heterogeneous scenario needs at least 2 clients, got " +
                            std::to_string(cfg.num_clients));
    }
    const int domains = std::max(2, std::min(cfg.num_domains, cfg.num_clients));
    const int base = cfg.num_clients / domains;
    const int extra = cfg.num_clients % domains;
    for (int d = 0; d < domains; ++d) {
        params.seen_classes_per_domain.push_back((base + (d < extra ? 1 : 0)) * cfg.classes_per_client);
    }
    return params;
}

ScenarioParams shrink_clients(const ScenarioParams& params, int classes_per_client) {
    if (classes_per_client < 1) throw ScenarioError("classes per client must be >= 1");
    for (std::size_t d = 0; d < params.seen_classes_per_domain.size(); ++d) {
        const int seen = params.seen_classes_per_domain[d];
        if (seen % classes_per_client != 0) {
            throw ScenarioError("domain " + std::to_string(d) + " has " + std::to_string(seen) +
                                " seen classes, not divisible into blocks of " +
                                std::to_string(classes_per_client));
        }
    }
    ScenarioParams out = params;
    out.classes_per_client = classes_per_client;
    return out;
}

FederationConfig apply_params(FederationConfig cfg, const ScenarioParams& params) {
    cfg.num_clients = params.num_clients();
    cfg.classes_per_client = params.classes_per_client;
    return cfg;
}

const DomainData& Scenario::domain_of(ClientId client) const {
    return domains_.at(static_cast<std::size_t>(clients_.at(client.value).domain));
}

std::vector<Sample> Scenario::test_set() const {
    std::vector<Sample> out;
    for (const auto& d : domains_) out.insert(out.end(), d.test_set.begin(), d.test_set.end());
    return out;
}

namespace {

void check_params(const ScenarioParams& params, const FederationConfig& cfg) {
    std::ostringstream problem;
    const auto& seen = params.seen_classes_per_domain;
    if (seen.empty()) problem << "scenario has no domains; ";
    if (params.kind == ScenarioKind::kHomogeneous && seen.size() != 1) {
        problem << "homogeneous scenario needs exactly 1 domain, got " << seen.size() << "; ";
    }
    if (params.kind == ScenarioKind::kHeterogeneous && seen.size() < 2) {
        problem << "heterogeneous scenario needs at least 2 domains, got " << seen.size() << "; ";
    }
    if (params.classes_per_client < 1) problem << "classes per client must be >= 1; ";
    for (std::size_t d = 0; d < seen.size() && params.classes_per_client >= 1; ++d) {
        if (seen[d] < 1 || seen[d] % params.classes_per_client != 0) {
            problem << "domain " << d << ": " << seen[d] << " seen classes (of " << 2 * seen[d]
                    << " total) cannot be split into client blocks of " << params.classes_per_client
                    << "; ";
        }
    }
    if (problem.tellp() == 0) {
        if (params.num_clients() != cfg.num_clients) {
            problem << "class layout yields " << params.num_clients() << " clients but num_clients is "
                    << cfg.num_clients << "; ";
        }
        if (params.classes_per_client != cfg.classes_per_client) {
            problem << "layout has " << params.classes_per_client
                    << " classes per client but classes_per_client is " << cfg.classes_per_client << "; ";
        }
    }
    const std::string text = problem.str();
    if (!text.empty()) throw ScenarioError("infeasible scenario: " + text.substr(0, text.size() - 2));
}

}  // namespace

Scenario build_scenario(const ScenarioParams& params, const FederationConfig& cfg) {
    check_params(params, cfg);

    Scenario scenario;
    scenario.kind_ = params.kind;
    scenario.params_ = params;

    ClassId next_class = 0;
    std::size_t next_client = 0;
    for (std::size_t d = 0; d < params.seen_classes_per_domain.size(); ++d) {
        const int domain_id = static_cast<int>(d);
        const int seen_count = params.seen_classes_per_domain[d];
        const int total = 2 * seen_count;

        RandomStream plant_rng = derive_rng(cfg.seed, d, 0, Purpose::kPlantDomain);
        PlantedDomain planted = plant_domain(domain_id, total, next_class, cfg, plant_rng);
        next_class += total;

        DomainData domain;
        domain.domain_id = domain_id;
        domain.encoder = planted.encoder;
        domain.classes = planted.classes;
        domain.noise_sigma = cfg.noise_sigma;
        if (params.kind == ScenarioKind::kHeterogeneous) {
            RandomStream noise_rng = derive_rng(cfg.seed, d, 0, Purpose::kDomainNoise);
            domain.noise_sigma = cfg.noise_sigma * std::uniform_real_distribution<double>(0.5, 1.5)(noise_rng);
        }

        std::vector<std::size_t> order(static_cast<std::size_t>(total));
        std::iota(order.begin(), order.end(), std::size_t{0});
        RandomStream split_rng = derive_rng(cfg.seed, d, 0, Purpose::kClassSplit);
        std::shuffle(order.begin(), order.end(), split_rng);
        for (int k = 0; k < total; ++k) {
            const ClassId id = planted.classes[order[static_cast<std::size_t>(k)]].class_id;
            (k < seen_count ? domain.seen_classes : domain.unseen_classes).push_back(id);
        }

        std::map<ClassId, const ClassSpec*> by_id;
        for (const auto& spec : domain.classes) by_id.emplace(spec.class_id, &spec);

        for (ClassId id : domain.unseen_classes) {
            RandomStream rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(id), 0, Purpose::kTestSamples);
            auto samples = draw_class_samples(*domain.encoder, *by_id.at(id), cfg.test_samples_per_class,
                                              domain.noise_sigma, rng);
            domain.test_set.insert(domain.test_set.end(), samples.begin(), samples.end());
        }

        const int n = params.classes_per_client;
        for (int block = 0; block < seen_count / n; ++block) {
            ClientDataset dataset;
            dataset.domain = domain_id;
            for (int k = 0; k < n; ++k) {
                const ClassId id = domain.seen_classes[static_cast<std::size_t>(block * n + k)];
                dataset.classes.push_back(id);
                RandomStream rng =
                    derive_rng(cfg.seed, static_cast<std::uint64_t>(id), 0, Purpose::kTrainSamples);
                auto samples = draw_class_samples(*domain.encoder, *by_id.at(id), cfg.shots_per_class,
                                                  domain.noise_sigma, rng);
                dataset.samples.insert(dataset.samples.end(), samples.begin(), samples.end());
            }
            domain.clients.push_back(ClientId{next_client++});
            scenario.clients_.push_back(std::move(dataset));
        }

        scenario.hidden_.emplace(domain_id, std::move(planted.hidden_context));
        scenario.domains_.push_back(std::move(domain));
    }
    return scenario;
}

Scenario build_scenario(ScenarioKind kind, const FederationConfig& cfg) {
    return build_scenario(scenario_params_from_config(cfg, kind), cfg);
}

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json vector_json(const Eigen::VectorXd& v) {
    return ordered_json(std::vector<double>(v.data(), v.data() + v.size()));
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
    return rows;
}

Eigen::VectorXd vector_from(const json& doc) {
    const auto values = doc.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd matrix_from(const json& doc) {
    const auto rows = static_cast<Eigen::Index>(doc.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(doc.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(doc.at(static_cast<std::size_t>(i)).size()) != cols) {
            throw ScenarioError("ragged matrix in scenario document");
        }
        m.row(i) = vector_from(doc.at(static_cast<std::size_t>(i))).transpose();
    }
    return m;
}

ordered_json samples_json(const std::vector<Sample>& samples) {
    ordered_json out = ordered_json::array();
    for (const auto& s : samples) out.push_back({{"label", s.label}, {"features", vector_json(s.features)}});
    return out;
}

std::vector<Sample> samples_from(const json& doc) {
    std::vector<Sample> out;
    for (const auto& s : doc) out.push_back(Sample{vector_from(s.at("features")), s.at("label").get<ClassId>()});
    return out;
}

}  // namespace

nlohmann::ordered_json Scenario::to_json(bool include_oracle) const {
    ordered_json doc;
    doc["kind"] = zerodfl::to_string(kind_);
    doc["classes_per_client"] = params_.classes_per_client;
    doc["seen_classes_per_domain"] = params_.seen_classes_per_domain;
    ordered_json domains = ordered_json::array();
    for (const auto& d : domains_) {
        ordered_json classes = ordered_json::array();
        for (const auto& c : d.classes) {
            classes.push_back({{"class_id", c.class_id},
                               {"token", vector_json(c.token)},
                               {"prototype", vector_json(c.prototype)}});
        }
        std::vector<std::size_t> clients;
        for (const auto& c : d.clients) clients.push_back(c.value);
        domains.push_back({{"domain_id", d.domain_id},
                           {"noise_sigma", d.noise_sigma},
                           {"prompts_per_client", d.encoder->prompts_per_client()},
                           {"prompt_dim", d.encoder->prompt_dim()},
                           {"text_map", matrix_json(d.encoder->text_map())},
                           {"image_map", matrix_json(d.encoder->image_map())},
                           {"classes", classes},
                           {"seen_classes", d.seen_classes},
                           {"unseen_classes", d.unseen_classes},
                           {"clients", clients},
                           {"test_set", samples_json(d.test_set)}});
    }
    doc["domains"] = domains;
    ordered_json clients = ordered_json::array();
    for (std::size_t i = 0; i < clients_.size(); ++i) {
        clients.push_back({{"client_id", i},
                           {"domain", clients_[i].domain},
                           {"classes", clients_[i].classes},
                           {"samples", samples_json(clients_[i].samples)}});
    }
    doc["clients"] = clients;
    if (include_oracle) {
        ordered_json oracle = ordered_json::object();
        for (const auto& [domain, context] : hidden_) {
            oracle[std::to_string(domain)] = matrix_json(context.values().transpose());
        }
        doc["oracle_only"] = oracle;
    }
    return doc;
}

Scenario Scenario::from_json(const nlohmann::json& doc) {
    Scenario s;
    try {
        s.kind_ = parse_scenario_kind(doc.at("kind").get<std::string>());
        s.params_.kind = s.kind_;
        s.params_.classes_per_client = doc.at("classes_per_client").get<int>();
        s.params_.seen_classes_per_domain = doc.at("seen_classes_per_domain").get<std::vector<int>>();
        for (const auto& d : doc.at("domains")) {
            DomainData domain;
            domain.domain_id = d.at("domain_id").get<int>();
            domain.noise_sigma = d.at("noise_sigma").get<double>();
            std::map<ClassId, Eigen::VectorXd> tokens;
            for (const auto& c : d.at("classes")) {
                ClassSpec spec{c.at("class_id").get<ClassId>(), vector_from(c.at("token")),
                               vector_from(c.at("prototype")), domain.domain_id};
                tokens.emplace(spec.class_id, spec.token);
                domain.classes.push_back(std::move(spec));
            }
            domain.encoder = std::make_shared<const SurrogateEncoder>(
                matrix_from(d.at("text_map")), matrix_from(d.at("image_map")), std::move(tokens),
                d.at("prompts_per_client").get<int>(), d.at("prompt_dim").get<int>());
            domain.seen_classes = d.at("seen_classes").get<std::vector<ClassId>>();
            domain.unseen_classes = d.at("unseen_classes").get<std::vector<ClassId>>();
            for (const auto& c : d.at("clients")) domain.clients.push_back(ClientId{c.get<std::size_t>()});
            domain.test_set = samples_from(d.at("test_set"));
            s.domains_.push_back(std::move(domain));
        }
        for (const auto& c : doc.at("clients")) {
            ClientDataset dataset;
            dataset.domain = c.at("domain").get<int>();
            dataset.classes = c.at("classes").get<std::vector<ClassId>>();
            dataset.samples = samples_from(c.at("samples"));
            s.clients_.push_back(std::move(dataset));
        }
        if (doc.contains("oracle_only")) {
            for (const auto& [key, value] : doc.at("oracle_only").items()) {
                const Eigen::MatrixXd columns = matrix_from(value).transpose();
                s.hidden_.emplace(std::stoi(key), PromptSet(columns, ClientId{0}));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("malformed scenario document: ") + e.what());
    }
    return s;
}

}  // namespace zerodfl
