#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbbr/optim.hpp"
#include "mbbr/rng.hpp"
#include "mbbr/tensor.hpp"

namespace mbbr {

struct EncoderConfig {
  size_t num_layers = 6;
  size_t num_heads = 8;
  size_t model_dim = 256;
  size_t ffn_dim = 1024;
  double dropout = 0.0;
  std::string activation = "relu";       // relu | gelu
  std::string norm_placement = "post";   // post | pre
};

void validate_config(const EncoderConfig& cfg);

// Registers encoder weights under "encoder.layers.<i>.*" (plus
// "encoder.final_ln.*" for pre-norm). Matrices get Xavier-uniform init,
// biases start at zero, layer norm gains at one. Each tensor draws from its
// own rng fork, so init is stable under reordering.
void init_encoder_params(ad::ParamSet& params, const EncoderConfig& cfg,
                         const SplitRng& rng);

// Zero-padded batch of entity embeddings. real[b * max_entities + i] flags
// which rows are actual entities; padded rows must hold exact zeros and every
// scene needs at least one real entity.
struct PaddedBatch {
  ad::Tensor embeddings;  // [batch, max_entities, model_dim]
  std::vector<uint8_t> real;

  size_t batch() const { return embeddings.dim(0); }
  size_t max_entities() const { return embeddings.dim(1); }
  bool is_real(size_t b, size_t i) const {
    return real[b * max_entities() + i] != 0;
  }
};

PaddedBatch pad_scenes(const std::vector<std::vector<std::vector<double>>>& scenes,
                       size_t model_dim);

void validate_batch(const PaddedBatch& batch, size_t model_dim);

// Post-softmax attention weights, [batch][head][query][key] per layer,
// flattened row-major.
struct AttentionMaps {
  size_t batch = 0;
  size_t heads = 0;
  size_t entities = 0;
  std::vector<std::vector<double>> layers;

  double at(size_t layer, size_t b, size_t h, size_t q, size_t k) const {
    return layers[layer][((b * heads + h) * entities + q) * entities + k];
  }
};

// Runs the transformer over the batch; output is [batch, max_entities,
// model_dim] with padded rows forced to zero. Pass `attention` to capture
// the per-layer softmax weights.
ad::Tensor encode(const ad::ParamSet& params, const EncoderConfig& cfg,
                  const PaddedBatch& batch, AttentionMaps* attention = nullptr);

}  // namespace mbbr
