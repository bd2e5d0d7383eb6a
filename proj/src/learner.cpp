#include "zerodfl/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>

namespace zerodfl {

SurrogateEncoder::SurrogateEncoder(Eigen::MatrixXd text_map, Eigen::MatrixXd image_map,
                                   std::map<ClassId, Eigen::VectorXd> class_tokens,
                                   int prompts_per_client, int prompt_dim)
    : text_map_(std::move(text_map)),
      image_map_(std::move(image_map)),
      class_tokens_(std::move(class_tokens)),
      prompts_per_client_(prompts_per_client),
      prompt_dim_(prompt_dim) {
    if (text_map_.cols() != static_cast<Eigen::Index>(prompts_per_client + 1) * prompt_dim) {
        throw std::invalid_argument("SurrogateEncoder: text_map must have (M+1)*d columns");
    }
    if (image_map_.rows() != text_map_.rows()) {
        throw std::invalid_argument("SurrogateEncoder: image_map and text_map must share the embedding dimension");
    }
    for (const auto& [id, token] : class_tokens_) {
        if (token.size() != prompt_dim) {
            throw std::invalid_argument("SurrogateEncoder: class token " + std::to_string(id) +
                                        " has the wrong length");
        }
    }
}

const Eigen::VectorXd& SurrogateEncoder::token(ClassId id) const {
    const auto it = class_tokens_.find(id);
    if (it == class_tokens_.end()) throw EncodingError("unknown class id " + std::to_string(id));
    return it->second;
}

Eigen::VectorXd SurrogateEncoder::embed_image(const Eigen::VectorXd& features) const {
    if (features.size() != image_map_.cols()) {
        throw EncodingError("image features have length " + std::to_string(features.size()) +
                            ", expected " + std::to_string(image_map_.cols()));
    }
    Eigen::VectorXd projected = image_map_ * features;
    const double norm = projected.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw EncodingError("image embedding is degenerate");
    return projected / norm;
}

std::uint64_t SurrogateEncoder::fingerprint() const {
    Fingerprint fp;
    fp.add(text_map_);
    fp.add(image_map_);
    for (const auto& [id, token] : class_tokens_) {
        fp.add(static_cast<std::uint64_t>(id));
        fp.add(token);
    }
    fp.add(static_cast<std::uint64_t>(prompts_per_client_));
    fp.add(static_cast<std::uint64_t>(prompt_dim_));
    return fp.value();
}

namespace {

struct TextForward {
    Eigen::VectorXd activation;  // tanh(z)
    double norm = 0.0;
    Eigen::VectorXd embedding;  // activation / norm
};

void check_prompt_shape(const PromptSet& prompts, const SurrogateEncoder& enc) {
    if (static_cast<int>(prompts.size()) != enc.prompts_per_client() ||
        static_cast<int>(prompts.dim()) != enc.prompt_dim()) {
        throw std::invalid_argument("prompt set is " + std::to_string(prompts.dim()) + "x" +
                                    std::to_string(prompts.size()) + ", encoder expects " +
                                    std::to_string(enc.prompt_dim()) + "x" +
                                    std::to_string(enc.prompts_per_client()));
    }
}

TextForward forward_text(const PromptSet& prompts, ClassId class_id, const SurrogateEncoder& enc) {
    const Eigen::VectorXd& token = enc.token(class_id);
    const auto prompt_cols = static_cast<Eigen::Index>(enc.prompts_per_client()) * enc.prompt_dim();
    const Eigen::MatrixXd& map = enc.text_map();

    Eigen::VectorXd pre = map.leftCols(prompt_cols) * prompts.flattened() +
                          map.rightCols(enc.prompt_dim()) * token;
    TextForward out;
    out.activation = pre.array().tanh().matrix();
    out.norm = out.activation.norm();
    if (!(out.norm > 0.0) || !std::isfinite(out.norm)) {
        throw EncodingError("text activation for class " + std::to_string(class_id) +
                            " is the zero vector and cannot be normalized");
    }
    out.embedding = out.activation / out.norm;
    return out;
}

std::unordered_map<ClassId, std::size_t> index_classes(std::span<const ClassId> classes) {
    std::unordered_map<ClassId, std::size_t> index;
    for (std::size_t q = 0; q < classes.size(); ++q) index.emplace(classes[q], q);
    return index;
}

}  // namespace

Eigen::VectorXd encode_text(const PromptSet& prompts, ClassId class_id, const SurrogateEncoder& enc) {
    check_prompt_shape(prompts, enc);
    return forward_text(prompts, class_id, enc).embedding;
}

ClassLogits softmax_from_similarities(Eigen::VectorXd similarities, double temperature) {
    ClassLogits out;
    out.similarities = std::move(similarities);
    if (out.similarities.size() == 0) throw std::invalid_argument("softmax over zero classes");
    const Eigen::VectorXd scaled = out.similarities / temperature;
    const double top = scaled.maxCoeff();
    out.probabilities = (scaled.array() - top).exp().matrix();
    out.probabilities /= out.probabilities.sum();
    return out;
}

ClassLogits class_probabilities(const Eigen::VectorXd& image_embedding,
                                std::span<const Eigen::VectorXd> text_embeddings, double temperature) {
    Eigen::VectorXd sims(static_cast<Eigen::Index>(text_embeddings.size()));
    for (std::size_t q = 0; q < text_embeddings.size(); ++q) {
        sims[static_cast<Eigen::Index>(q)] = std::clamp(image_embedding.dot(text_embeddings[q]), -1.0, 1.0);
    }
    return softmax_from_similarities(std::move(sims), temperature);
}

double nll_loss(const ClassLogits& logits, std::size_t label_index) {
    if (label_index >= static_cast<std::size_t>(logits.probabilities.size())) {
        throw std::out_of_range("label index outside the logits");
    }
    const double p = logits.probabilities[static_cast<Eigen::Index>(label_index)];
    return -std::log(std::max(p, std::numeric_limits<double>::min()));
}

double nll_loss(std::span<const ClassLogits> logits, std::span<const std::size_t> label_indices) {
    if (logits.size() != label_indices.size() || logits.empty()) {
        throw std::invalid_argument("batch loss needs one label per logits row");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) total += nll_loss(logits[i], label_indices[i]);
    return total / static_cast<double>(logits.size());
}

LossAndGradient prompt_gradient(const PromptSet& prompts, std::span<const Sample> batch,
                                std::span<const ClassId> classes, const SurrogateEncoder& enc,
                                double temperature) {
    if (batch.empty()) throw std::invalid_argument("prompt_gradient: empty batch");
    if (classes.empty()) throw std::invalid_argument("prompt_gradient: empty class set");
    check_prompt_shape(prompts, enc);

    const auto num_classes = static_cast<Eigen::Index>(classes.size());
    const auto embed = static_cast<Eigen::Index>(enc.embed_dim());
    const auto class_index = index_classes(classes);

    std::vector<TextForward> text;
    text.reserve(classes.size());
    Eigen::MatrixXd text_embeddings(embed, num_classes);
    for (Eigen::Index q = 0; q < num_classes; ++q) {
        text.push_back(forward_text(prompts, classes[static_cast<std::size_t>(q)], enc));
        text_embeddings.col(q) = text.back().embedding;
    }

    // Per-class upstream gradient dL/dg_q, accumulated over the batch.
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(embed, num_classes);
    double loss = 0.0;
    for (const Sample& sample : batch) {
        const auto it = class_index.find(sample.label);
        if (it == class_index.end()) {
            throw std::invalid_argument("prompt_gradient: label " + std::to_string(sample.label) +
                                        " is not in the class set");
        }
        const auto label = static_cast<Eigen::Index>(it->second);
        const Eigen::VectorXd image = enc.embed_image(sample.features);
        const ClassLogits logits =
            softmax_from_similarities(text_embeddings.transpose() * image, temperature);
        loss += nll_loss(logits, static_cast<std::size_t>(label));

        Eigen::VectorXd dlogit = logits.probabilities;
        dlogit[label] -= 1.0;
        upstream.noalias() += image * (dlogit.transpose() / temperature);
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    loss *= scale;
    upstream *= scale;

    const auto prompt_cols = static_cast<Eigen::Index>(enc.prompts_per_client()) * enc.prompt_dim();
    const auto prompt_map = enc.text_map().leftCols(prompt_cols);
    Eigen::VectorXd flat_grad = Eigen::VectorXd::Zero(prompt_cols);
    for (Eigen::Index q = 0; q < num_classes; ++q) {
        const TextForward& fwd = text[static_cast<std::size_t>(q)];
        const Eigen::VectorXd d_embed = upstream.col(q);
        // Through the normalization g = h / |h|.
        const Eigen::VectorXd d_act = (d_embed - fwd.embedding * fwd.embedding.dot(d_embed)) / fwd.norm;
        // Through tanh.
        const Eigen::VectorXd d_pre =
            (d_act.array() * (1.0 - fwd.activation.array().square())).matrix();
        flat_grad.noalias() += prompt_map.transpose() * d_pre;
    }

    LossAndGradient out;
    out.loss = loss;
    out.gradient = Eigen::Map<const Eigen::MatrixXd>(flat_grad.data(), enc.prompt_dim(),
                                                     enc.prompts_per_client());
    return out;
}

AdaptResult local_adapt(const PromptSet& prompts, const ClientDataset& dataset,
                        const SurrogateEncoder& enc, int epochs, double learning_rate,
                        int batch_size, double temperature, RandomStream& rng) {
    AdaptResult out{prompts, {}};
    if (epochs <= 0) return out;
    if (dataset.samples.empty()) throw std::invalid_argument("local_adapt: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("local_adapt: batch size must be >= 1");

    const std::size_t n = dataset.samples.size();
    const std::size_t per_batch = std::min(static_cast<std::size_t>(batch_size), n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Sample> batch;
    batch.reserve(per_batch);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double weighted_loss = 0.0;
        for (std::size_t start = 0; start < n; start += per_batch) {
            const std::size_t stop = std::min(start + per_batch, n);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset.samples[order[i]]);
            const LossAndGradient step =
                prompt_gradient(out.prompts, batch, dataset.classes, enc, temperature);
            out.prompts.mutable_values() -= learning_rate * step.gradient;
            weighted_loss += step.loss * static_cast<double>(batch.size());
        }
        out.epoch_losses.push_back(weighted_loss / static_cast<double>(n));
    }
    return out;
}

AdaptResult local_adapt(const ClientState& client, const SurrogateEncoder& enc,
                        const FederationConfig& cfg, RandomStream& rng) {
    return local_adapt(client.active_prompts, client.dataset, enc, cfg.local_epochs,
                       cfg.learning_rate, cfg.batch_size, cfg.temperature, rng);
}

double classification_accuracy(const PromptSet& prompts, std::span<const Sample> samples,
                               std::span<const ClassId> classes, const SurrogateEncoder& enc,
                               double /*temperature*/) {
    if (samples.empty()) throw std::invalid_argument("accuracy over an empty sample set");
    if (classes.empty()) throw std::invalid_argument("accuracy over an empty class set");
    check_prompt_shape(prompts, enc);

    std::vector<ClassId> sorted(classes.begin(), classes.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<Eigen::VectorXd> text;
    text.reserve(sorted.size());
    for (ClassId id : sorted) text.push_back(forward_text(prompts, id, enc).embedding);

    std::size_t correct = 0;
    for (const Sample& sample : samples) {
        // Softmax is monotone in the similarity, so the argmax is taken on the
        // similarities directly. First maximum wins: lowest class id on ties.
        const Eigen::VectorXd image = enc.embed_image(sample.features);
        std::size_t best = 0;
        double best_sim = image.dot(text[0]);
        for (std::size_t q = 1; q < text.size(); ++q) {
            const double sim = image.dot(text[q]);
            if (sim > best_sim) {
                best = q;
                best_sim = sim;
            }
        }
        if (sorted[best] == sample.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double zero_shot_eval(const PromptSet& prompts, std::span<const Sample> test_set,
                      std::span<const ClassId> unseen_classes, const SurrogateEncoder& enc,
                      double temperature) {
    if (test_set.empty()) throw std::invalid_argument("zero_shot_eval: empty test set");
    return classification_accuracy(prompts, test_set, unseen_classes, enc, temperature);
}

}  // namespace zerodfl
