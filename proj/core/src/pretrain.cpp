#include "mbbr/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mbbr/errors.hpp"
#include "mbbr/geometry.hpp"
#include "mbbr/ops.hpp"

namespace mbbr {

namespace ad = mbbr::ad;

void validate_config(const PretrainConfig& cfg) {
  if (cfg.mask_ratio < 0.0 || cfg.mask_ratio > 1.0)
    throw ConfigError("pretrain: mask_ratio must lie in [0,1]");
  if (cfg.batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw ConfigError("pretrain: learning_rate must be > 0");
  if (cfg.weight_decay < 0.0) throw ConfigError("pretrain: weight_decay must be >= 0");
  if (cfg.loss_kind != "reconstruction" && cfg.loss_kind != "classification")
    throw ConfigError("pretrain: unknown loss_kind '" + cfg.loss_kind + "'");
  if (cfg.grad_clip < 0.0) throw ConfigError("pretrain: grad_clip must be >= 0");
  if (cfg.lr_decay <= 0.0) throw ConfigError("pretrain: lr_decay must be > 0");
  validate_config(cfg.encoder);
}

MaskPlan draw_mask(const PretrainExample& scene, double ratio, SplitRng& rng) {
  if (ratio < 0.0 || ratio > 1.0)
    throw std::invalid_argument("draw_mask: ratio must lie in [0,1]");
  MaskPlan plan(scene.entities.size(), 0);
  for (auto& m : plan) m = rng.flip(ratio) ? 1 : 0;
  return plan;
}

namespace {

ad::Tensor xavier(size_t fan_in, size_t fan_out, const SplitRng& rng,
                  const std::string& name) {
  SplitRng r = rng.fork(name);
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = r.uniform(-limit, limit);
  return ad::Tensor::from_values({fan_in, fan_out}, std::move(v), true);
}

void check_scene(const PretrainExample& s) {
  for (size_t i = 0; i < s.entities.size(); ++i) {
    const Entity& e = s.entities[i];
    if (e.feature.size() != kFeatureDim)
      throw DataError("scene " + s.scene_id + " entity " + std::to_string(i) +
                      ": feature dimension " + std::to_string(e.feature.size()));
    validate_box(e.box, s.width, s.height);
  }
}

}  // namespace

void init_fusion_params(ad::ParamSet& params, size_t model_dim, const SplitRng& rng) {
  SplitRng mv = rng.fork("fusion.mask_vector");
  std::vector<double> m(kFeatureDim);
  for (double& x : m) x = mv.normal(0.0, 0.02);
  params.add("fusion.mask_vector",
             ad::Tensor::from_values({kFeatureDim}, std::move(m), true));
  params.add("fusion.w_in",
             xavier(kFeatureDim + kGeometryDim, model_dim, rng, "fusion.w_in"));
  params.add("fusion.b_in", ad::Tensor::zeros({model_dim}, true));
  params.add("fusion.w_rec", xavier(model_dim, kFeatureDim, rng, "fusion.w_rec"));
  params.add("fusion.b_rec", ad::Tensor::zeros({kFeatureDim}, true));
}

void init_classifier_head(ad::ParamSet& params, size_t model_dim,
                          size_t num_categories, const SplitRng& rng) {
  if (num_categories < 1)
    throw ConfigError("classifier head needs at least one category");
  params.add("fusion.w_cls", xavier(model_dim, num_categories, rng, "fusion.w_cls"));
  params.add("fusion.b_cls", ad::Tensor::zeros({num_categories}, true));
}

FusionWeights fusion_view(const ad::ParamSet& params) {
  FusionWeights fw;
  fw.mask_vector = params.at("fusion.mask_vector");
  fw.w_in = params.at("fusion.w_in");
  fw.b_in = params.at("fusion.b_in");
  fw.w_rec = params.at("fusion.w_rec");
  fw.b_rec = params.at("fusion.b_rec");
  return fw;
}

void init_pretrain_params(ad::ParamSet& params, const PretrainConfig& cfg,
                          size_t num_categories, const SplitRng& rng) {
  if (params.size() != 0)
    throw std::invalid_argument("init_pretrain_params: params must start empty");
  init_fusion_params(params, cfg.encoder.model_dim, rng);
  if (cfg.loss_kind == "classification")
    init_classifier_head(params, cfg.encoder.model_dim, num_categories, rng);
  init_encoder_params(params, cfg.encoder, rng);
}

ad::Tensor build_entity_embeddings(const PretrainExample& scene, const MaskPlan& plan,
                                   const FusionWeights& fw, bool mask_zeros) {
  if (plan.size() != scene.entities.size())
    throw std::invalid_argument("build_entity_embeddings: plan does not match scene");
  if (scene.entities.empty())
    throw std::invalid_argument("build_entity_embeddings: scene has no entities");
  check_scene(scene);
  size_t n = scene.entities.size();

  std::vector<double> fdata(n * kFeatureDim, 0.0);
  std::vector<double> mcol(n, 0.0);
  std::vector<double> geo(n * kGeometryDim);
  for (size_t i = 0; i < n; ++i) {
    const Entity& e = scene.entities[i];
    if (plan[i])
      mcol[i] = 1.0;
    else
      std::copy(e.feature.begin(), e.feature.end(),
                fdata.begin() + static_cast<long>(i * kFeatureDim));
    auto g = geometry_embedding(e.box, scene.width, scene.height);
    std::copy(g.begin(), g.end(), geo.begin() + static_cast<long>(i * kGeometryDim));
  }

  ad::Tensor features = ad::Tensor::from_values({n, kFeatureDim}, std::move(fdata));
  if (!mask_zeros) {
    ad::Tensor sel = ad::Tensor::from_values({n, 1}, std::move(mcol));
    features = ad::add(
        features, ad::matmul(sel, ad::reshape(fw.mask_vector, {1, kFeatureDim})));
  }
  ad::Tensor g = ad::Tensor::from_values({n, kGeometryDim}, std::move(geo));
  return ad::add_bias(ad::matmul(ad::concat_lastdim(features, g), fw.w_in), fw.b_in);
}

ad::Tensor reconstruct(const PretrainExample& scene, const MaskPlan& plan,
                       const ad::ParamSet& params, const EncoderConfig& cfg,
                       bool mask_zeros) {
  FusionWeights fw = fusion_view(params);
  size_t n = scene.entities.size();
  ad::Tensor e = build_entity_embeddings(scene, plan, fw, mask_zeros);
  PaddedBatch batch;
  batch.embeddings = ad::reshape(e, {1, n, cfg.model_dim});
  batch.real.assign(n, 1);
  ad::Tensor z = ad::reshape(encode(params, cfg, batch), {n, cfg.model_dim});
  return ad::add_bias(ad::matmul(z, fw.w_rec), fw.b_rec);
}

BatchBuild assemble_batch(const std::vector<const PretrainExample*>& scenes,
                          const std::vector<MaskPlan>& plans, const FusionWeights& fw,
                          const EncoderConfig& cfg, bool mask_zeros) {
  if (scenes.empty()) throw std::invalid_argument("assemble_batch: empty batch");
  if (plans.size() != scenes.size())
    throw std::invalid_argument("assemble_batch: one plan per scene required");
  size_t max_n = 0;
  for (const auto* s : scenes) {
    if (!s || s->entities.empty())
      throw std::invalid_argument("assemble_batch: scene without entities");
    max_n = std::max(max_n, s->entities.size());
  }
  size_t B = scenes.size();

  BatchBuild out;
  std::vector<double> fdata(B * max_n * kFeatureDim, 0.0);
  std::vector<double> mcol(B * max_n, 0.0);
  std::vector<double> geo(B * max_n * kGeometryDim, 0.0);
  std::vector<double> row_mask(B * max_n * cfg.model_dim, 0.0);
  std::vector<double> targets;
  out.batch.real.assign(B * max_n, 0);

  for (size_t b = 0; b < B; ++b) {
    const PretrainExample& s = *scenes[b];
    check_scene(s);
    if (plans[b].size() != s.entities.size())
      throw std::invalid_argument("assemble_batch: plan does not match scene");
    for (size_t i = 0; i < s.entities.size(); ++i) {
      const Entity& e = s.entities[i];
      size_t row = b * max_n + i;
      out.batch.real[row] = 1;
      out.real_rows.push_back(row);
      if (plans[b][i]) {
        out.masked_rows.push_back(row);
        out.masked_labels.push_back(static_cast<size_t>(e.category_id));
        mcol[row] = 1.0;
      } else {
        std::copy(e.feature.begin(), e.feature.end(),
                  fdata.begin() + static_cast<long>(row * kFeatureDim));
      }
      auto g = geometry_embedding(e.box, s.width, s.height);
      std::copy(g.begin(), g.end(), geo.begin() + static_cast<long>(row * kGeometryDim));
      std::fill_n(row_mask.begin() + static_cast<long>(row * cfg.model_dim),
                  cfg.model_dim, 1.0);
      targets.insert(targets.end(), e.feature.begin(), e.feature.end());
    }
  }

  ad::Tensor features =
      ad::Tensor::from_values({B * max_n, kFeatureDim}, std::move(fdata));
  if (!mask_zeros) {
    ad::Tensor sel = ad::Tensor::from_values({B * max_n, 1}, std::move(mcol));
    features = ad::add(
        features, ad::matmul(sel, ad::reshape(fw.mask_vector, {1, kFeatureDim})));
  }
  ad::Tensor g = ad::Tensor::from_values({B * max_n, kGeometryDim}, std::move(geo));
  ad::Tensor e =
      ad::add_bias(ad::matmul(ad::concat_lastdim(features, g), fw.w_in), fw.b_in);
  e = ad::mul(e, ad::Tensor::from_values({B * max_n, cfg.model_dim}, std::move(row_mask)));
  out.batch.embeddings = ad::reshape(e, {B, max_n, cfg.model_dim});
  out.targets =
      ad::Tensor::from_values({out.real_rows.size(), kFeatureDim}, std::move(targets));
  return out;
}

namespace {

ad::Tensor batch_loss(const BatchBuild& build, const ad::ParamSet& params,
                      const PretrainConfig& cfg, const FusionWeights& fw) {
  ad::Tensor z = encode(params, cfg.encoder, build.batch);
  size_t rows = build.batch.batch() * build.batch.max_entities();
  ad::Tensor z2 = ad::reshape(z, {rows, cfg.encoder.model_dim});
  if (cfg.loss_kind == "classification") {
    ad::Tensor zm = ad::gather_rows(z2, build.masked_rows);
    ad::Tensor logits = ad::add_bias(ad::matmul(zm, params.at("fusion.w_cls")),
                                     params.at("fusion.b_cls"));
    return ad::cross_entropy(logits, build.masked_labels);
  }
  ad::Tensor zr = ad::gather_rows(z2, build.real_rows);
  ad::Tensor y = ad::add_bias(ad::matmul(zr, fw.w_rec), fw.b_rec);
  return ad::mse_loss(y, build.targets);
}

void clip_gradients(ad::ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params.items())
    if (t.has_grad())
      for (double gv : t.grad()) sq += gv * gv;
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  double s = max_norm / norm;
  for (auto& [name, t] : params.items())
    if (t.has_grad())
      for (double& gv : t.d->grad) gv *= s;
}

}  // namespace

PretrainResult pretrain(const std::vector<PretrainExample>& dataset,
                        const PretrainConfig& cfg, ad::ParamSet& params) {
  validate_config(cfg);
  if (params.size() != 0)
    throw std::invalid_argument("pretrain: params must start empty");
  if (dataset.empty()) throw DataError("pretrain: empty dataset");

  std::vector<const PretrainExample*> usable;
  for (const auto& s : dataset)
    if (!s.entities.empty()) usable.push_back(&s);
  if (usable.empty()) throw DataError("pretrain: no scene has entities");
  for (const auto* s : usable) check_scene(*s);

  size_t num_categories = 0;
  if (cfg.loss_kind == "classification") {
    int max_cat = -1;
    for (const auto* s : usable)
      for (const Entity& e : s->entities) {
        if (e.category_id < 0)
          throw DataError("pretrain: negative category in scene " + s->scene_id);
        max_cat = std::max(max_cat, e.category_id);
      }
    num_categories = static_cast<size_t>(max_cat) + 1;
  }

  SplitRng root(cfg.seed);
  init_pretrain_params(params, cfg, num_categories, root.fork("init"));
  FusionWeights fw = fusion_view(params);

  ad::AdamConfig acfg;
  acfg.lr = cfg.learning_rate;
  acfg.weight_decay = cfg.weight_decay;
  ad::Adam adam(params, acfg);

  SplitRng mask_root = root.fork("mask");
  SplitRng shuffle_root = root.fork("shuffle");

  PretrainResult result;
  result.num_categories = num_categories;
  auto t0 = std::chrono::steady_clock::now();

  // cfg.learning_rate is the base rate; warm up to it over the first tenth
  // of training, then cosine-decay to a tenth of it. Post-norm stacks
  // oscillate if the base rate is applied cold.
  size_t steps_per_epoch = (usable.size() + cfg.batch_size - 1) / cfg.batch_size;
  size_t total_steps = std::max<size_t>(1, cfg.epochs * steps_per_epoch);
  size_t warmup_steps = std::max<size_t>(1, total_steps / 10);
  size_t global_step = 0;
  auto scheduled_lr = [&](size_t step) {
    double base = cfg.learning_rate;
    if (step < warmup_steps)
      return base * static_cast<double>(step + 1) /
             static_cast<double>(warmup_steps);
    double t = static_cast<double>(step - warmup_steps) /
               static_cast<double>(std::max<size_t>(1, total_steps - warmup_steps));
    double floor = 0.1 * base;
    return floor + (base - floor) * 0.5 * (1.0 + std::cos(t * std::numbers::pi));
  };

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_scale = std::pow(cfg.lr_decay, static_cast<double>(epoch));
    SplitRng mask_rng = mask_root.fork("epoch-" + std::to_string(epoch));
    std::vector<size_t> order = shuffle_root.permutation(usable.size());

    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const PretrainExample*> scenes;
      std::vector<MaskPlan> plans;
      for (size_t i = start; i < end; ++i) {
        scenes.push_back(usable[order[i]]);
        plans.push_back(draw_mask(*usable[order[i]], cfg.mask_ratio, mask_rng));
      }
      try {
        adam.set_learning_rate(scheduled_lr(global_step++) * epoch_scale);
        ad::Tape tape;
        BatchBuild build = assemble_batch(scenes, plans, fw, cfg.encoder, cfg.mask_zeros);
        if (cfg.loss_kind == "classification" && build.masked_rows.empty()) continue;
        ad::Tensor loss = batch_loss(build, params, cfg, fw);
        double lv = loss.scalar();
        if (!std::isfinite(lv))
          throw NumericError("loss is not finite");
        tape.backward(loss);
        if (cfg.grad_clip > 0.0) clip_gradients(params, cfg.grad_clip);
        adam.step();
        params.zero_grad();
        loss_sum += lv;
        ++batches;
      } catch (const NumericError& e) {
        throw NumericError("pretrain aborted at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(start / cfg.batch_size) + ": " +
                           e.what());
      }
    }
    result.epoch_losses.push_back(batches ? loss_sum / static_cast<double>(batches)
                                          : 0.0);
  }

  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

ad::Tensor encode_scene(const PretrainExample& scene, const ad::ParamSet& params,
                        const EncoderConfig& cfg) {
  if (scene.entities.empty())
    throw std::invalid_argument("encode_scene: scene has no entities");
  MaskPlan none(scene.entities.size(), 0);
  FusionWeights fw = fusion_view(params);
  ad::Tensor e = build_entity_embeddings(scene, none, fw, false);
  PaddedBatch batch;
  batch.embeddings = ad::reshape(e, {1, scene.entities.size(), cfg.model_dim});
  batch.real.assign(scene.entities.size(), 1);
  return ad::reshape(encode(params, cfg, batch),
                     {scene.entities.size(), cfg.model_dim});
}

ReconBatch reconstruct_batch(const std::vector<PretrainExample>& scenes,
                             const std::vector<MaskPlan>& plans,
                             const ad::ParamSet& params, const PretrainConfig& cfg) {
  if (scenes.size() != plans.size())
    throw std::invalid_argument("reconstruct_batch: one plan per scene required");
  FusionWeights fw = fusion_view(params);
  ReconBatch out;
  const size_t chunk = 32;
  for (size_t begin = 0; begin < scenes.size(); begin += chunk) {
    size_t end = std::min(scenes.size(), begin + chunk);
    std::vector<const PretrainExample*> ptrs;
    std::vector<MaskPlan> chunk_plans;
    std::vector<size_t> chunk_scene;
    for (size_t i = begin; i < end; ++i) {
      if (scenes[i].entities.empty()) continue;
      ptrs.push_back(&scenes[i]);
      chunk_plans.push_back(plans[i]);
      chunk_scene.push_back(i);
    }
    if (ptrs.empty()) continue;
    BatchBuild build = assemble_batch(ptrs, chunk_plans, fw, cfg.encoder, cfg.mask_zeros);
    ad::Tensor z = encode(params, cfg.encoder, build.batch);
    size_t rows = build.batch.batch() * build.batch.max_entities();
    ad::Tensor zr = ad::gather_rows(ad::reshape(z, {rows, cfg.encoder.model_dim}),
                                    build.real_rows);
    ad::Tensor y = ad::add_bias(ad::matmul(zr, fw.w_rec), fw.b_rec);
    size_t max_n = build.batch.max_entities();
    for (size_t r = 0; r < build.real_rows.size(); ++r) {
      size_t flat = build.real_rows[r];
      size_t b = flat / max_n, i = flat % max_n;
      out.scene_index.push_back(chunk_scene[b]);
      out.entity_index.push_back(i);
      out.masked.push_back(chunk_plans[b][i]);
    }
    const auto& yv = y.values();
    out.y_rec.insert(out.y_rec.end(), yv.begin(), yv.end());
  }
  return out;
}

ReconErrors reconstruction_errors(const std::vector<PretrainExample>& scenes,
                                  const std::vector<MaskPlan>& plans,
                                  const ad::ParamSet& params,
                                  const PretrainConfig& cfg) {
  ReconBatch rb = reconstruct_batch(scenes, plans, params, cfg);
  ReconErrors err;
  double masked_sq = 0.0, unmasked_sq = 0.0;
  size_t rows = rb.masked.size();
  for (size_t r = 0; r < rows; ++r) {
    const auto& truth = scenes[rb.scene_index[r]].entities[rb.entity_index[r]].feature;
    double sq = 0.0;
    for (size_t k = 0; k < kFeatureDim; ++k) {
      double d = rb.y_rec[r * kFeatureDim + k] - truth[k];
      sq += d * d;
    }
    if (rb.masked[r]) {
      masked_sq += sq;
      ++err.masked_count;
    } else {
      unmasked_sq += sq;
      ++err.unmasked_count;
    }
  }
  if (err.masked_count)
    err.masked_mse = masked_sq / static_cast<double>(err.masked_count * kFeatureDim);
  if (err.unmasked_count)
    err.unmasked_mse =
        unmasked_sq / static_cast<double>(err.unmasked_count * kFeatureDim);
  return err;
}

}  // namespace mbbr
