#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "zerodfl/config.hpp"
#include "zerodfl/rng.hpp"
#include "zerodfl/types.hpp"

namespace zerodfl {

class EncodingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Frozen stand-in for a vision-language model.
///
/// Text side: g(P) = normalize(tanh(text_map * [v_1; ...; v_M; token])).
/// Image side: f(x) = normalize(image_map * x).
/// Similarity is the cosine, i.e. a dot product of unit vectors.
///
/// Every member is fixed at construction; there are no mutators.
class SurrogateEncoder {
public:
    SurrogateEncoder(Eigen::MatrixXd text_map, Eigen::MatrixXd image_map,
                     std::map<ClassId, Eigen::VectorXd> class_tokens, int prompts_per_client,
                     int prompt_dim);

    int prompts_per_client() const { return prompts_per_client_; }
    int prompt_dim() const { return prompt_dim_; }
    int embed_dim() const { return static_cast<int>(text_map_.rows()); }
    int image_dim() const { return static_cast<int>(image_map_.cols()); }

    const Eigen::MatrixXd& text_map() const { return text_map_; }
    const Eigen::MatrixXd& image_map() const { return image_map_; }
    const std::map<ClassId, Eigen::VectorXd>& class_tokens() const { return class_tokens_; }

    bool has_class(ClassId id) const { return class_tokens_.contains(id); }
    const Eigen::VectorXd& token(ClassId id) const;

    /// f(x); throws EncodingError for a zero projection.
    Eigen::VectorXd embed_image(const Eigen::VectorXd& features) const;

    std::uint64_t fingerprint() const;

private:
    Eigen::MatrixXd text_map_;
    Eigen::MatrixXd image_map_;
    std::map<ClassId, Eigen::VectorXd> class_tokens_;
    int prompts_per_client_;
    int prompt_dim_;
};

/// g(P_q) for P_q = [v_1, ..., v_M, token(class_id)].
Eigen::VectorXd encode_text(const PromptSet& prompts, ClassId class_id, const SurrogateEncoder& enc);

struct ClassLogits {
    Eigen::VectorXd similarities;
    Eigen::VectorXd probabilities;
};

/// Temperature softmax over cosine similarities, max-subtracted.
ClassLogits class_probabilities(const Eigen::VectorXd& image_embedding,
                                std::span<const Eigen::VectorXd> text_embeddings, double temperature);

ClassLogits softmax_from_similarities(Eigen::VectorXd similarities, double temperature);

/// -log p[label], with p floored at the smallest positive normal double.
double nll_loss(const ClassLogits& logits, std::size_t label_index);
double nll_loss(std::span<const ClassLogits> logits, std::span<const std::size_t> label_indices);

struct LossAndGradient {
    double loss = 0.0;
    /// Same shape as PromptSet::values() (d x M).
    Eigen::MatrixXd gradient;
};

/// Mean NLL over `batch` and its analytic gradient with respect to every prompt
/// entry. `classes` is the label space the softmax runs over.
LossAndGradient prompt_gradient(const PromptSet& prompts, std::span<const Sample> batch,
                                std::span<const ClassId> classes, const SurrogateEncoder& enc,
                                double temperature);

struct AdaptResult {
    PromptSet prompts;
    /// Sample-weighted mean loss for each epoch, measured as the epoch ran.
    std::vector<double> epoch_losses;
};

/// `epochs` passes of mini-batch SGD over the client's data. Batches have
/// min(batch_size, |dataset|) samples; order is shuffled per epoch from `rng`.
AdaptResult local_adapt(const PromptSet& prompts, const ClientDataset& dataset,
                        const SurrogateEncoder& enc, int epochs, double learning_rate,
                        int batch_size, double temperature, RandomStream& rng);

AdaptResult local_adapt(const ClientState& client, const SurrogateEncoder& enc,
                        const FederationConfig& cfg, RandomStream& rng);

/// Top-1 accuracy over `samples` against the label space `classes`. Ties go to
/// the lowest class id. Throws std::invalid_argument for an empty sample set.
double classification_accuracy(const PromptSet& prompts, std::span<const Sample> samples,
                               std::span<const ClassId> classes, const SurrogateEncoder& enc,
                               double temperature);

/// Accuracy on classes that no client trained on.
double zero_shot_eval(const PromptSet& prompts, std::span<const Sample> test_set,
                      std::span<const ClassId> unseen_classes, const SurrogateEncoder& enc,
                      double temperature);

}  // namespace zerodfl
