#include <cmath>

#include "doctest.h"
#include "mbbr/encoder.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/ops.hpp"
#include "mbbr/rng.hpp"
#include "test_util.hpp"

using namespace mbbr;
using ad::ParamSet;
using ad::Tensor;

namespace {

constexpr double kPropTol = 1e-9;

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.model_dim = 8;
  cfg.ffn_dim = 16;
  return cfg;
}

std::vector<std::vector<double>> random_entities(size_t n, size_t dim,
                                                 SplitRng& rng) {
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& e : out)
    for (double& v : e) v = rng.normal(0.0, 1.0);
  return out;
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  validate_config(cfg);
  cfg.model_dim = 255;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = EncoderConfig{};
  cfg.dropout = 0.1;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = EncoderConfig{};
  cfg.activation = "tanh";
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = EncoderConfig{};
  cfg.norm_placement = "sandwich";
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = EncoderConfig{};
  cfg.num_layers = 0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("encoder init is seeded and shaped") {
  EncoderConfig cfg = tiny_config();
  ParamSet a, b, c;
  init_encoder_params(a, cfg, SplitRng(7));
  init_encoder_params(b, cfg, SplitRng(7));
  init_encoder_params(c, cfg, SplitRng(8));
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == cfg.num_layers * 16);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.items()[i].first == b.items()[i].first);
    CHECK(a.items()[i].second.values() == b.items()[i].second.values());
    if (a.items()[i].second.values() != c.items()[i].second.values())
      any_diff = true;
  }
  CHECK(any_diff);

  // Xavier bound on the first projection
  const Tensor& wq = a.at("encoder.layers.0.wq");
  double limit = std::sqrt(6.0 / 16.0);
  double lo = 0, hi = 0;
  for (double v : wq.values()) {
    CHECK(std::abs(v) <= limit);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi > 0.5 * limit);
  CHECK(lo < -0.5 * limit);
  CHECK(a.at("encoder.layers.0.bq").values() == std::vector<double>(8, 0.0));
  CHECK(a.at("encoder.layers.1.ln2.gain").values() == std::vector<double>(8, 1.0));
}

TEST_CASE("attention rows are a distribution over real keys") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(3));

  SplitRng rng(11);
  auto batch = pad_scenes({random_entities(4, 8, rng), random_entities(2, 8, rng)}, 8);
  REQUIRE(batch.max_entities() == 4);

  AttentionMaps maps;
  encode(params, cfg, batch, &maps);
  REQUIRE(maps.layers.size() == cfg.num_layers);
  CHECK(maps.batch == 2);
  CHECK(maps.heads == 2);
  CHECK(maps.entities == 4);
  for (size_t l = 0; l < maps.layers.size(); ++l) {
    for (size_t b = 0; b < 2; ++b) {
      for (size_t h = 0; h < 2; ++h) {
        for (size_t q = 0; q < 4; ++q) {
          double sum = 0;
          for (size_t k = 0; k < 4; ++k) {
            double w = maps.at(l, b, h, q, k);
            CHECK(w >= 0.0);
            if (!batch.is_real(b, k)) CHECK(w == 0.0);
            sum += w;
          }
          CHECK(std::abs(sum - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("single entity scene attends to itself") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(3));
  SplitRng rng(4);
  auto batch = pad_scenes({random_entities(1, 8, rng)}, 8);
  AttentionMaps maps;
  Tensor out = encode(params, cfg, batch, &maps);
  CHECK(out.shape() == ad::Shape{1, 1, 8});
  for (size_t l = 0; l < cfg.num_layers; ++l)
    for (size_t h = 0; h < 2; ++h) CHECK(maps.at(l, 0, h, 0, 0) == 1.0);
}

TEST_CASE("padding amount does not change real outputs") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(5));

  SplitRng rng(21);
  auto s1 = random_entities(3, 8, rng);
  auto s2 = random_entities(2, 8, rng);
  auto tight = pad_scenes({s1, s2}, 8);

  // same content padded out to 6 slots
  size_t B = 2, N = 6, D = 8;
  std::vector<double> buf(B * N * D, 0.0);
  std::vector<uint8_t> real(B * N, 0);
  auto place = [&](size_t b, size_t i, const std::vector<double>& e) {
    std::copy(e.begin(), e.end(), buf.begin() + static_cast<long>((b * N + i) * D));
    real[b * N + i] = 1;
  };
  for (size_t i = 0; i < s1.size(); ++i) place(0, i, s1[i]);
  for (size_t i = 0; i < s2.size(); ++i) place(1, i, s2[i]);
  PaddedBatch wide;
  wide.embeddings = Tensor::from_values({B, N, D}, std::move(buf));
  wide.real = std::move(real);

  Tensor a = encode(params, cfg, tight);
  Tensor b = encode(params, cfg, wide);
  for (size_t bi = 0; bi < 2; ++bi) {
    size_t n = bi == 0 ? 3 : 2;
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < D; ++k) {
        double va = a.values()[(bi * tight.max_entities() + i) * D + k];
        double vb = b.values()[(bi * N + i) * D + k];
        CHECK(std::abs(va - vb) < kPropTol);
      }
    // padded rows come out as exact zeros
    for (size_t i = n; i < N; ++i)
      for (size_t k = 0; k < D; ++k)
        CHECK(b.values()[(bi * N + i) * D + k] == 0.0);
  }
}

TEST_CASE("entity permutation permutes outputs") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(9));

  SplitRng rng(31);
  auto ents = random_entities(4, 8, rng);
  auto base = pad_scenes({ents}, 8);

  std::vector<size_t> perm{2, 0, 3, 1};
  std::vector<std::vector<double>> shuffled(4);
  for (size_t i = 0; i < 4; ++i) shuffled[i] = ents[perm[i]];
  auto permuted = pad_scenes({shuffled}, 8);

  Tensor a = encode(params, cfg, base);
  Tensor b = encode(params, cfg, permuted);
  for (size_t i = 0; i < 4; ++i)
    for (size_t k = 0; k < 8; ++k)
      CHECK(std::abs(b.values()[i * 8 + k] - a.values()[perm[i] * 8 + k]) < kPropTol);

  // permutation also carries the attention maps along
  AttentionMaps ma, mb;
  encode(params, cfg, base, &ma);
  encode(params, cfg, permuted, &mb);
  for (size_t l = 0; l < cfg.num_layers; ++l)
    for (size_t h = 0; h < 2; ++h)
      for (size_t q = 0; q < 4; ++q)
        for (size_t k = 0; k < 4; ++k)
          CHECK(std::abs(mb.at(l, 0, h, q, k) - ma.at(l, 0, h, perm[q], perm[k])) <
                kPropTol);
}

TEST_CASE("interleaving real and padded slots is allowed") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(13));

  SplitRng rng(41);
  auto ents = random_entities(2, 8, rng);
  auto tight = pad_scenes({ents}, 8);

  size_t N = 4, D = 8;
  std::vector<double> buf(N * D, 0.0);
  std::vector<uint8_t> real(N, 0);
  std::copy(ents[0].begin(), ents[0].end(), buf.begin() + 1 * 8);
  std::copy(ents[1].begin(), ents[1].end(), buf.begin() + 3 * 8);
  real[1] = real[3] = 1;
  PaddedBatch gappy;
  gappy.embeddings = Tensor::from_values({1, N, D}, std::move(buf));
  gappy.real = std::move(real);

  Tensor a = encode(params, cfg, tight);
  Tensor b = encode(params, cfg, gappy);
  for (size_t k = 0; k < D; ++k) {
    CHECK(std::abs(a.values()[0 * D + k] - b.values()[1 * D + k]) < kPropTol);
    CHECK(std::abs(a.values()[1 * D + k] - b.values()[3 * D + k]) < kPropTol);
  }
}

TEST_CASE("batch validation rejects broken inputs") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(2));

  PaddedBatch bad;
  bad.embeddings = Tensor::zeros({1, 2, 8});
  bad.real = {0, 0};
  CHECK_THROWS_AS(encode(params, cfg, bad), std::invalid_argument);

  bad.real = {1};
  CHECK_THROWS_AS(encode(params, cfg, bad), std::invalid_argument);

  std::vector<double> buf(16, 0.0);
  buf[8] = 0.5;  // nonzero in a padded row
  bad.embeddings = Tensor::from_values({1, 2, 8}, std::move(buf));
  bad.real = {1, 0};
  CHECK_THROWS_AS(encode(params, cfg, bad), std::invalid_argument);

  CHECK_THROWS_AS(pad_scenes({}, 8), std::invalid_argument);
  CHECK_THROWS_AS(pad_scenes({{}}, 8), std::invalid_argument);
}

TEST_CASE("full encoder gradients match finite differences") {
  EncoderConfig cfg = tiny_config();
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(17));

  SplitRng rng(23);
  // no padding here so every embedding component is free to wiggle
  auto batch = pad_scenes({random_entities(3, 8, rng), random_entities(3, 8, rng)}, 8);
  batch.embeddings.d->requires_grad = true;

  Tensor target = Tensor::from_values({2, 3, 8}, [&] {
    std::vector<double> t(48);
    for (double& v : t) v = rng.normal(0.0, 1.0);
    return t;
  }());

  std::vector<std::pair<std::string, Tensor>> inputs;
  inputs.push_back({"embeddings", batch.embeddings});
  for (auto& [name, t] : params.items()) inputs.push_back({name, t});

  auto loss_fn = [&] { return ad::mse_loss(encode(params, cfg, batch), target); };
  auto res = check_gradients(inputs, loss_fn, 1e-5, 24, 17, 1e-6);
  INFO(res.worst);
  CHECK(res.max_rel_err < 1e-4);
  CHECK(res.checked > 400);
}

TEST_CASE("pre-norm gelu variant works and differentiates") {
  EncoderConfig cfg = tiny_config();
  cfg.norm_placement = "pre";
  cfg.activation = "gelu";
  ParamSet params;
  init_encoder_params(params, cfg, SplitRng(19));
  CHECK(params.contains("encoder.final_ln.gain"));

  SplitRng rng(29);
  auto batch = pad_scenes({random_entities(3, 8, rng)}, 8);

  AttentionMaps maps;
  Tensor out = encode(params, cfg, batch, &maps);
  CHECK(out.shape() == ad::Shape{1, 3, 8});
  for (size_t q = 0; q < 3; ++q) {
    double sum = 0;
    for (size_t k = 0; k < 3; ++k) sum += maps.at(0, 0, 0, q, k);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  Tensor target = Tensor::zeros({1, 3, 8});
  std::vector<std::pair<std::string, Tensor>> inputs;
  for (auto& [name, t] : params.items()) inputs.push_back({name, t});
  auto res = check_gradients(
      inputs, [&] { return ad::mse_loss(encode(params, cfg, batch), target); }, 1e-5,
      10, 17, 1e-6);
  INFO(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gelu op matches finite differences") {
  std::vector<double> xs{-2.5, -1.0, -0.1, 0.0, 0.3, 1.7};
  Tensor x = Tensor::from_values({6}, xs, true);
  auto res = check_gradients({{"x", x}}, [&] { return ad::sum_all(ad::gelu(x)); });
  CHECK(res.max_rel_err < 1e-6);
  Tensor y = ad::gelu(x);
  CHECK(y.values()[3] == 0.0);
  CHECK(std::abs(y.values()[5] - 1.7 * 0.5 * (1.0 + std::erf(1.7 / std::sqrt(2.0)))) <
        1e-15);
}
