#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbbr/encoder.hpp"
#include "mbbr/optim.hpp"
#include "mbbr/rng.hpp"
#include "mbbr/scene.hpp"
#include "mbbr/tensor.hpp"

namespace mbbr {

struct PretrainConfig {
  double mask_ratio = 0.5;
  size_t epochs = 30;
  size_t batch_size = 16;
  double learning_rate = 2e-3;
  double weight_decay = 1e-4;
  size_t fine_tune_epochs = 20;
  std::string loss_kind = "reconstruction";  // reconstruction | classification
  uint64_t seed = 1;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  double lr_decay = 1.0;   // per-epoch multiplier
  bool mask_zeros = false; // replace masked features with zeros, not the learned vector
  EncoderConfig encoder;
};

void validate_config(const PretrainConfig& cfg);

// Per-entity flags, 1 = feature replaced before encoding.
using MaskPlan = std::vector<uint8_t>;

// Independent Bernoulli(ratio) per entity.
MaskPlan draw_mask(const PretrainExample& scene, double ratio, SplitRng& rng);

// Views into the shared ParamSet; tensors alias the registered nodes.
struct FusionWeights {
  ad::Tensor mask_vector;  // [feature_dim]
  ad::Tensor w_in, b_in;   // [feature_dim + geometry_dim, model_dim], [model_dim]
  ad::Tensor w_rec, b_rec; // [model_dim, feature_dim], [feature_dim]
};

// Registers fusion.* parameters. Call before init_encoder_params so the
// checkpoint layout starts with the fusion block.
void init_fusion_params(ad::ParamSet& params, size_t model_dim, const SplitRng& rng);
// Adds the classification head fusion.w_cls/b_cls, [model_dim, C] and [C].
void init_classifier_head(ad::ParamSet& params, size_t model_dim,
                          size_t num_categories, const SplitRng& rng);

FusionWeights fusion_view(const ad::ParamSet& params);

// Registers fusion + encoder weights in the canonical checkpoint order.
void init_pretrain_params(ad::ParamSet& params, const PretrainConfig& cfg,
                          size_t num_categories, const SplitRng& rng);

// Masked features swapped for the mask vector, concatenated with geometry
// embeddings, projected to model_dim. [N, model_dim].
ad::Tensor build_entity_embeddings(const PretrainExample& scene, const MaskPlan& plan,
                                   const FusionWeights& fw, bool mask_zeros = false);

// Full single-scene pass: fuse, encode, project back to feature space.
ad::Tensor reconstruct(const PretrainExample& scene, const MaskPlan& plan,
                       const ad::ParamSet& params, const EncoderConfig& cfg,
                       bool mask_zeros = false);

// Differentiable batch assembly over several scenes at once.
struct BatchBuild {
  PaddedBatch batch;
  std::vector<size_t> real_rows;    // flat rows in [batch * max_entities)
  std::vector<size_t> masked_rows;  // subset of real_rows
  std::vector<size_t> masked_labels;
  ad::Tensor targets;               // [real_rows.size(), feature_dim]
};

BatchBuild assemble_batch(const std::vector<const PretrainExample*>& scenes,
                          const std::vector<MaskPlan>& plans, const FusionWeights& fw,
                          const EncoderConfig& cfg, bool mask_zeros = false);

// Forward-only reconstruction of many scenes; rows follow scene order.
struct ReconBatch {
  std::vector<double> y_rec;  // rows x feature_dim
  std::vector<size_t> scene_index;
  std::vector<size_t> entity_index;
  std::vector<uint8_t> masked;
};

ReconBatch reconstruct_batch(const std::vector<PretrainExample>& scenes,
                             const std::vector<MaskPlan>& plans,
                             const ad::ParamSet& params, const PretrainConfig& cfg);

struct ReconErrors {
  double masked_mse = 0.0;
  double unmasked_mse = 0.0;
  size_t masked_count = 0;
  size_t unmasked_count = 0;
};

// Per-element squared error split by mask status.
ReconErrors reconstruction_errors(const std::vector<PretrainExample>& scenes,
                                  const std::vector<MaskPlan>& plans,
                                  const ad::ParamSet& params,
                                  const PretrainConfig& cfg);

struct PretrainResult {
  std::vector<double> epoch_losses;
  double wall_time_s = 0.0;
  size_t num_categories = 0;  // classification head width, 0 otherwise
};

// Initializes `params` (must be empty) and trains. Reconstruction mode never
// sees relationships or categories; classification mode reads categories only
// to build labels for the masked-entity head.
PretrainResult pretrain(const std::vector<PretrainExample>& dataset,
                        const PretrainConfig& cfg, ad::ParamSet& params);

// Unmasked single-scene encoding, [N, model_dim]. Records on the active tape
// if one exists, so it serves both frozen and fine-tuned paths.
ad::Tensor encode_scene(const PretrainExample& scene, const ad::ParamSet& params,
                        const EncoderConfig& cfg);

}  // namespace mbbr
