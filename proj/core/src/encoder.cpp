#include "mbbr/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "mbbr/errors.hpp"
#include "mbbr/ops.hpp"

namespace mbbr {

namespace ad = mbbr::ad;

void validate_config(const EncoderConfig& cfg) {
  if (cfg.num_layers < 1) throw ConfigError("encoder: num_layers must be >= 1");
  if (cfg.num_heads < 1) throw ConfigError("encoder: num_heads must be >= 1");
  if (cfg.model_dim < 1 || cfg.model_dim % cfg.num_heads != 0)
    throw ConfigError("encoder: model_dim must be a positive multiple of num_heads");
  if (cfg.ffn_dim < 1) throw ConfigError("encoder: ffn_dim must be >= 1");
  if (cfg.dropout != 0.0)
    throw ConfigError("encoder: dropout is pinned at 0.0");
  if (cfg.activation != "relu" && cfg.activation != "gelu")
    throw ConfigError("encoder: unknown activation '" + cfg.activation + "'");
  if (cfg.norm_placement != "post" && cfg.norm_placement != "pre")
    throw ConfigError("encoder: unknown norm_placement '" + cfg.norm_placement + "'");
}

namespace {

ad::Tensor xavier(size_t fan_in, size_t fan_out, const SplitRng& rng,
                  const std::string& name, double gain = 1.0) {
  SplitRng r = rng.fork(name);
  double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = r.uniform(-limit, limit);
  return ad::Tensor::from_values({fan_in, fan_out}, std::move(v), true);
}

std::string layer_prefix(size_t i) {
  return "encoder.layers." + std::to_string(i) + ".";
}

}  // namespace

void init_encoder_params(ad::ParamSet& params, const EncoderConfig& cfg,
                         const SplitRng& rng) {
  validate_config(cfg);
  size_t d = cfg.model_dim, f = cfg.ffn_dim;
  // Residual-branch outputs start small so deep post-norm stacks train
  // stably at the default learning rate without warmup.
  double res = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.num_layers));
  for (size_t i = 0; i < cfg.num_layers; ++i) {
    std::string p = layer_prefix(i);
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      double gain = std::string(w) == "wo" ? res : 1.0;
      params.add(p + w, xavier(d, d, rng, p + w, gain));
      std::string b = std::string("b") + (w + 1);
      params.add(p + b, ad::Tensor::zeros({d}, true));
    }
    params.add(p + "ln1.gain", ad::Tensor::full({d}, 1.0, true));
    params.add(p + "ln1.bias", ad::Tensor::zeros({d}, true));
    params.add(p + "ffn.w1", xavier(d, f, rng, p + "ffn.w1"));
    params.add(p + "ffn.b1", ad::Tensor::zeros({f}, true));
    params.add(p + "ffn.w2", xavier(f, d, rng, p + "ffn.w2", res));
    params.add(p + "ffn.b2", ad::Tensor::zeros({d}, true));
    params.add(p + "ln2.gain", ad::Tensor::full({d}, 1.0, true));
    params.add(p + "ln2.bias", ad::Tensor::zeros({d}, true));
  }
  if (cfg.norm_placement == "pre") {
    params.add("encoder.final_ln.gain", ad::Tensor::full({d}, 1.0, true));
    params.add("encoder.final_ln.bias", ad::Tensor::zeros({d}, true));
  }
}

PaddedBatch pad_scenes(const std::vector<std::vector<std::vector<double>>>& scenes,
                       size_t model_dim) {
  if (scenes.empty()) throw std::invalid_argument("pad_scenes: empty batch");
  size_t max_n = 0;
  for (const auto& s : scenes) max_n = std::max(max_n, s.size());
  if (max_n == 0) throw std::invalid_argument("pad_scenes: scene with no entities");
  size_t B = scenes.size();
  std::vector<double> buf(B * max_n * model_dim, 0.0);
  std::vector<uint8_t> real(B * max_n, 0);
  for (size_t b = 0; b < B; ++b) {
    if (scenes[b].empty())
      throw std::invalid_argument("pad_scenes: scene with no entities");
    for (size_t i = 0; i < scenes[b].size(); ++i) {
      if (scenes[b][i].size() != model_dim)
        throw std::invalid_argument("pad_scenes: embedding dim mismatch");
      std::copy(scenes[b][i].begin(), scenes[b][i].end(),
                buf.begin() + static_cast<long>((b * max_n + i) * model_dim));
      real[b * max_n + i] = 1;
    }
  }
  PaddedBatch batch;
  batch.embeddings = ad::Tensor::from_values({B, max_n, model_dim}, std::move(buf));
  batch.real = std::move(real);
  return batch;
}

void validate_batch(const PaddedBatch& batch, size_t model_dim) {
  if (!batch.embeddings.defined() || batch.embeddings.ndim() != 3)
    throw std::invalid_argument("batch embeddings must be [batch, entities, dim]");
  size_t B = batch.embeddings.dim(0), N = batch.embeddings.dim(1);
  if (batch.embeddings.dim(2) != model_dim)
    throw std::invalid_argument("batch embedding dim does not match model_dim");
  if (batch.real.size() != B * N)
    throw std::invalid_argument("batch real-mask size mismatch");
  const auto& v = batch.embeddings.values();
  for (size_t b = 0; b < B; ++b) {
    bool any = false;
    for (size_t i = 0; i < N; ++i) {
      if (batch.real[b * N + i]) {
        any = true;
      } else {
        for (size_t k = 0; k < model_dim; ++k)
          if (v[(b * N + i) * model_dim + k] != 0.0)
            throw std::invalid_argument("padded rows must be zero");
      }
    }
    if (!any) throw std::invalid_argument("every scene needs a real entity");
  }
}

namespace {

constexpr double kMaskedScore = -1e30;

// [B*H, N, N]: column j gets kMaskedScore when key j is padding.
ad::Tensor key_mask(const PaddedBatch& batch, size_t heads) {
  size_t B = batch.batch(), N = batch.max_entities();
  std::vector<double> m(B * heads * N * N, 0.0);
  for (size_t b = 0; b < B; ++b)
    for (size_t j = 0; j < N; ++j)
      if (!batch.real[b * N + j])
        for (size_t h = 0; h < heads; ++h)
          for (size_t q = 0; q < N; ++q)
            m[((b * heads + h) * N + q) * N + j] = kMaskedScore;
  return ad::Tensor::from_values({B * heads, N, N}, std::move(m));
}

// [B*N, D] with zero rows at padding.
ad::Tensor real_row_mask(const PaddedBatch& batch, size_t model_dim) {
  size_t rows = batch.real.size();
  std::vector<double> m(rows * model_dim, 0.0);
  for (size_t r = 0; r < rows; ++r)
    if (batch.real[r]) std::fill_n(m.begin() + static_cast<long>(r * model_dim), model_dim, 1.0);
  return ad::Tensor::from_values({rows, model_dim}, std::move(m));
}

// [B*N, D] -> [B*H, N, dh]
ad::Tensor split_heads(const ad::Tensor& x, size_t B, size_t N, size_t H, size_t dh) {
  ad::Tensor t = ad::reshape(x, {B, N, H, dh});
  t = ad::swap_axes(t, 1, 2);
  return ad::reshape(t, {B * H, N, dh});
}

ad::Tensor merge_heads(const ad::Tensor& x, size_t B, size_t N, size_t H, size_t dh) {
  ad::Tensor t = ad::reshape(x, {B, H, N, dh});
  t = ad::swap_axes(t, 1, 2);
  return ad::reshape(t, {B * N, H * dh});
}

}  // namespace

ad::Tensor encode(const ad::ParamSet& params, const EncoderConfig& cfg,
                  const PaddedBatch& batch, AttentionMaps* attention) {
  validate_config(cfg);
  validate_batch(batch, cfg.model_dim);
  size_t B = batch.batch(), N = batch.max_entities();
  size_t D = cfg.model_dim, H = cfg.num_heads, dh = D / H;
  bool pre = cfg.norm_placement == "pre";

  ad::Tensor mask = key_mask(batch, H);
  ad::Tensor row_mask = real_row_mask(batch, D);
  if (attention) {
    attention->batch = B;
    attention->heads = H;
    attention->entities = N;
    attention->layers.clear();
  }

  auto activate = [&](const ad::Tensor& t) {
    return cfg.activation == "gelu" ? ad::gelu(t) : ad::relu(t);
  };

  ad::Tensor x = ad::reshape(batch.embeddings, {B * N, D});
  for (size_t i = 0; i < cfg.num_layers; ++i) {
    std::string p = layer_prefix(i);
    auto lin = [&](const ad::Tensor& in, const char* w, const char* b) {
      return ad::add_bias(ad::matmul(in, params.at(p + w)), params.at(p + b));
    };

    ad::Tensor attn_in = pre ? ad::layer_norm(x, params.at(p + "ln1.gain"),
                                              params.at(p + "ln1.bias"))
                             : x;
    ad::Tensor q = split_heads(lin(attn_in, "wq", "bq"), B, N, H, dh);
    ad::Tensor k = split_heads(lin(attn_in, "wk", "bk"), B, N, H, dh);
    ad::Tensor v = split_heads(lin(attn_in, "wv", "bv"), B, N, H, dh);
    ad::Tensor scores = ad::scale(ad::bmm(q, k, /*transpose_b=*/true),
                                  1.0 / std::sqrt(static_cast<double>(dh)));
    ad::Tensor weights = ad::softmax(ad::add(scores, mask), -1);
    if (attention) attention->layers.push_back(weights.values());
    ad::Tensor ctx = merge_heads(ad::bmm(weights, v), B, N, H, dh);
    ad::Tensor attn_out =
        ad::add_bias(ad::matmul(ctx, params.at(p + "wo")), params.at(p + "bo"));

    if (pre) {
      x = ad::add(x, attn_out);
      ad::Tensor ffn_in =
          ad::layer_norm(x, params.at(p + "ln2.gain"), params.at(p + "ln2.bias"));
      ad::Tensor h = activate(lin(ffn_in, "ffn.w1", "ffn.b1"));
      x = ad::add(x, lin(h, "ffn.w2", "ffn.b2"));
    } else {
      x = ad::layer_norm(ad::add(x, attn_out), params.at(p + "ln1.gain"),
                         params.at(p + "ln1.bias"));
      ad::Tensor h = activate(lin(x, "ffn.w1", "ffn.b1"));
      x = ad::layer_norm(ad::add(x, lin(h, "ffn.w2", "ffn.b2")),
                         params.at(p + "ln2.gain"), params.at(p + "ln2.bias"));
    }
  }
  if (pre)
    x = ad::layer_norm(x, params.at("encoder.final_ln.gain"),
                       params.at("encoder.final_ln.bias"));
  x = ad::mul(x, row_mask);
  return ad::reshape(x, {B, N, D});
}

}  // namespace mbbr
