#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbbr/encoder.hpp"
#include "mbbr/label_embeddings.hpp"
#include "mbbr/optim.hpp"
#include "mbbr/sampling.hpp"
#include "mbbr/scene.hpp"

namespace mbbr {

struct FeatureAblationConfig {
  bool use_visual = true;
  bool use_spatial = true;
  bool use_linguistic = true;
};

void validate_config(const FeatureAblationConfig& cfg);

struct FewShotConfig {
  size_t epochs = 20;
  size_t batch_size = 16;
  double learning_rate = 2e-3;
  double weight_decay = 1e-4;
  size_t hidden_dim = 512;
  bool unfreeze_encoder = false;
  std::string representation = "encoded";  // encoded | raw
  FeatureAblationConfig ablation;
  uint64_t seed = 1;
};

void validate_config(const FewShotConfig& cfg);

// Width of a pair feature: [z_S | z_O | spatial | ling_S | ling_O] with
// disabled blocks omitted.
size_t pair_feature_dim(const FeatureAblationConfig& ab, size_t z_dim,
                        size_t ling_dim);

// Per-entity representation under the given mode: raw entity features, or the
// pretrained encoder's output for an unmasked pass.
std::vector<std::vector<double>> entity_representation(
    const Scene& scene, const ad::ParamSet& pretrained, const EncoderConfig& enc,
    const std::string& representation);

std::vector<double> build_pair_feature(const Scene& scene, size_t subj, size_t obj,
                                       const std::vector<std::vector<double>>& z,
                                       const LabelEmbeddingTable& table,
                                       const FeatureAblationConfig& ab);

struct FewShotModel {
  ad::ParamSet classifier;  // classifier.w1 / b1 / w2 / b2
  size_t feature_dim = 0;
  size_t num_predicates = 0;
};

// Trains the 2-layer MLP on the sampled triplets. The pretrained weights stay
// untouched unless cfg.unfreeze_encoder, in which case they join the optimizer
// and are updated in place.
FewShotModel train_few_shot(const Dataset& scenes,
                            const std::vector<KShotSample>& samples,
                            ad::ParamSet& pretrained, const EncoderConfig& enc,
                            const LabelEmbeddingTable& table,
                            const FewShotConfig& cfg, size_t num_predicates);

// Softmax scores over predicates.
std::vector<double> predict_pair(const std::vector<double>& pair_feature,
                                 const FewShotModel& model);

// Predicate ids ranked by score descending; ties broken toward lower ids.
std::vector<size_t> rank_predicates(const std::vector<double>& scores);

}  // namespace mbbr
