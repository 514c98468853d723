#include "mbbr/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mbbr/errors.hpp"
#include "mbbr/geometry.hpp"
#include "mbbr/ops.hpp"
#include "mbbr/pretrain.hpp"
#include "mbbr/rng.hpp"

namespace mbbr {

namespace ad = mbbr::ad;

void validate_config(const FeatureAblationConfig& cfg) {
  if (!cfg.use_visual && !cfg.use_spatial && !cfg.use_linguistic)
    throw ConfigError("feature ablation: at least one block must stay enabled");
}

void validate_config(const FewShotConfig& cfg) {
  validate_config(cfg.ablation);
  if (cfg.batch_size < 1) throw ConfigError("few-shot: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0)
    throw ConfigError("few-shot: learning_rate must be > 0");
  if (cfg.weight_decay < 0.0) throw ConfigError("few-shot: weight_decay must be >= 0");
  if (cfg.hidden_dim < 1) throw ConfigError("few-shot: hidden_dim must be >= 1");
  if (cfg.representation != "encoded" && cfg.representation != "raw")
    throw ConfigError("few-shot: unknown representation '" + cfg.representation + "'");
  if (cfg.unfreeze_encoder && cfg.representation != "encoded")
    throw ConfigError("few-shot: unfreezing only makes sense with representation=encoded");
}

size_t pair_feature_dim(const FeatureAblationConfig& ab, size_t z_dim,
                        size_t ling_dim) {
  size_t d = 0;
  if (ab.use_visual) d += 2 * z_dim;
  if (ab.use_spatial) d += kSpatialDim;
  if (ab.use_linguistic) d += 2 * ling_dim;
  return d;
}

namespace {

PretrainExample as_example(const Scene& s) {
  PretrainExample e;
  e.scene_id = s.scene_id;
  e.width = s.width;
  e.height = s.height;
  e.entities = s.entities;
  return e;
}

}  // namespace

std::vector<std::vector<double>> entity_representation(
    const Scene& scene, const ad::ParamSet& pretrained, const EncoderConfig& enc,
    const std::string& representation) {
  std::vector<std::vector<double>> z;
  if (representation == "raw") {
    for (const Entity& e : scene.entities) z.push_back(e.feature);
    return z;
  }
  if (representation != "encoded")
    throw ConfigError("unknown representation '" + representation + "'");
  ad::Tensor out = encode_scene(as_example(scene), pretrained, enc);
  size_t n = scene.entities.size(), d = enc.model_dim;
  for (size_t i = 0; i < n; ++i)
    z.emplace_back(out.values().begin() + static_cast<long>(i * d),
                   out.values().begin() + static_cast<long>((i + 1) * d));
  return z;
}

std::vector<double> build_pair_feature(const Scene& scene, size_t subj, size_t obj,
                                       const std::vector<std::vector<double>>& z,
                                       const LabelEmbeddingTable& table,
                                       const FeatureAblationConfig& ab) {
  validate_config(ab);
  if (subj >= scene.entities.size() || obj >= scene.entities.size())
    throw std::out_of_range("build_pair_feature: entity index out of range");
  if (subj == obj)
    throw std::invalid_argument("build_pair_feature: subject equals object");
  if (z.size() != scene.entities.size())
    throw std::invalid_argument("build_pair_feature: representation size mismatch");

  std::vector<double> f;
  if (ab.use_visual) {
    f.insert(f.end(), z[subj].begin(), z[subj].end());
    f.insert(f.end(), z[obj].begin(), z[obj].end());
  }
  if (ab.use_spatial) {
    auto sp = compute_spatial(scene.entities[subj].box, scene.entities[obj].box,
                              scene.width, scene.height);
    f.insert(f.end(), sp.begin(), sp.end());
  }
  if (ab.use_linguistic) {
    const auto& ls = table.at(scene.entities[subj].category_id);
    const auto& lo = table.at(scene.entities[obj].category_id);
    f.insert(f.end(), ls.begin(), ls.end());
    f.insert(f.end(), lo.begin(), lo.end());
  }
  return f;
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

struct ResolvedSample {
  size_t scene_index, subject, object;
  size_t label;
};

ad::Tensor classifier_logits(const ad::Tensor& x, const ad::ParamSet& cls) {
  ad::Tensor h = ad::relu(
      ad::add_bias(ad::matmul(x, cls.at("classifier.w1")), cls.at("classifier.b1")));
  return ad::add_bias(ad::matmul(h, cls.at("classifier.w2")), cls.at("classifier.b2"));
}

}  // namespace

FewShotModel train_few_shot(const Dataset& scenes,
                            const std::vector<KShotSample>& samples,
                            ad::ParamSet& pretrained, const EncoderConfig& enc,
                            const LabelEmbeddingTable& table,
                            const FewShotConfig& cfg, size_t num_predicates) {
  validate_config(cfg);
  if (samples.empty()) throw DataError("few-shot training: empty sample set");
  if (num_predicates < 1)
    throw ConfigError("few-shot training: num_predicates must be >= 1");

  std::vector<ResolvedSample> resolved;
  for (const KShotSample& s : samples) {
    if (s.scene_index >= scenes.size())
      throw DataError("few-shot training: sample scene index out of range");
    const Scene& sc = scenes[s.scene_index];
    if (s.triplet_index >= sc.relationships.size())
      throw DataError("few-shot training: sample triplet index out of range in scene " +
                      sc.scene_id);
    const RelationshipTriplet& t = sc.relationships[s.triplet_index];
    if (t.predicate_id < 0 || static_cast<size_t>(t.predicate_id) >= num_predicates)
      throw DataError("few-shot training: predicate " + std::to_string(t.predicate_id) +
                      " outside [0," + std::to_string(num_predicates) + ")");
    resolved.push_back({s.scene_index, t.subject, t.object,
                        static_cast<size_t>(t.predicate_id)});
  }

  size_t z_dim = cfg.representation == "raw" ? kFeatureDim : enc.model_dim;
  size_t fdim = pair_feature_dim(cfg.ablation, z_dim, table.dim);

  FewShotModel model;
  model.feature_dim = fdim;
  model.num_predicates = num_predicates;
  SplitRng root(cfg.seed);
  SplitRng init = root.fork("init");
  model.classifier.add("classifier.w1", xavier(fdim, cfg.hidden_dim, init, "classifier.w1"));
  model.classifier.add("classifier.b1", ad::Tensor::zeros({cfg.hidden_dim}, true));
  model.classifier.add("classifier.w2",
                       xavier(cfg.hidden_dim, num_predicates, init, "classifier.w2"));
  model.classifier.add("classifier.b2", ad::Tensor::zeros({num_predicates}, true));

  ad::ParamSet trainable;
  for (auto& [name, t] : model.classifier.items()) trainable.add(name, t);
  if (cfg.unfreeze_encoder)
    for (auto& [name, t] : pretrained.items()) trainable.add(name, t);

  ad::AdamConfig acfg;
  acfg.lr = cfg.learning_rate;
  acfg.weight_decay = cfg.weight_decay;
  ad::Adam adam(trainable, acfg);

  // frozen path: representations are constants, build every feature once
  std::vector<std::vector<double>> frozen_features;
  if (!cfg.unfreeze_encoder) {
    std::map<size_t, std::vector<std::vector<double>>> z_cache;
    for (const ResolvedSample& r : resolved) {
      auto it = z_cache.find(r.scene_index);
      if (it == z_cache.end())
        it = z_cache
                 .emplace(r.scene_index,
                          entity_representation(scenes[r.scene_index], pretrained, enc,
                                                cfg.representation))
                 .first;
      frozen_features.push_back(build_pair_feature(
          scenes[r.scene_index], r.subject, r.object, it->second, table, cfg.ablation));
    }
  }

  SplitRng shuffle = root.fork("shuffle");
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order = shuffle.permutation(resolved.size());
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<size_t> labels;
      ad::Tape tape;
      ad::Tensor x;

      if (!cfg.unfreeze_encoder) {
        std::vector<double> buf;
        for (size_t i = start; i < end; ++i) {
          buf.insert(buf.end(), frozen_features[order[i]].begin(),
                     frozen_features[order[i]].end());
          labels.push_back(resolved[order[i]].label);
        }
        x = ad::Tensor::from_values({end - start, fdim}, std::move(buf));
      } else {
        // encoder in the loop: encode each distinct scene once per batch
        std::map<size_t, ad::Tensor> z_by_scene;
        std::vector<ad::Tensor> rows;
        for (size_t i = start; i < end; ++i) {
          const ResolvedSample& r = resolved[order[i]];
          auto it = z_by_scene.find(r.scene_index);
          if (it == z_by_scene.end())
            it = z_by_scene
                     .emplace(r.scene_index,
                              encode_scene(as_example(scenes[r.scene_index]), pretrained,
                                           enc))
                     .first;
          const Scene& sc = scenes[r.scene_index];
          std::vector<ad::Tensor> blocks;
          if (cfg.ablation.use_visual) {
            blocks.push_back(ad::gather_rows(it->second, {r.subject}));
            blocks.push_back(ad::gather_rows(it->second, {r.object}));
          }
          std::vector<double> rest;
          if (cfg.ablation.use_spatial) {
            auto sp = compute_spatial(sc.entities[r.subject].box,
                                      sc.entities[r.object].box, sc.width, sc.height);
            rest.insert(rest.end(), sp.begin(), sp.end());
          }
          if (cfg.ablation.use_linguistic) {
            const auto& ls = table.at(sc.entities[r.subject].category_id);
            const auto& lo = table.at(sc.entities[r.object].category_id);
            rest.insert(rest.end(), ls.begin(), ls.end());
            rest.insert(rest.end(), lo.begin(), lo.end());
          }
          if (!rest.empty()) {
            size_t w = rest.size();
            blocks.push_back(ad::Tensor::from_values({1, w}, std::move(rest)));
          }
          rows.push_back(blocks.size() == 1 ? blocks[0] : ad::concat_lastdim(blocks));
          labels.push_back(r.label);
        }
        x = rows.size() == 1 ? rows[0] : ad::stack_rows(rows);
      }

      ad::Tensor loss = ad::cross_entropy(classifier_logits(x, model.classifier), labels);
      tape.backward(loss);
      adam.step();
      trainable.zero_grad();
    }
  }
  return model;
}

std::vector<double> predict_pair(const std::vector<double>& pair_feature,
                                 const FewShotModel& model) {
  if (pair_feature.size() != model.feature_dim)
    throw std::invalid_argument("predict_pair: feature dimension " +
                                std::to_string(pair_feature.size()) + ", classifier " +
                                std::to_string(model.feature_dim));
  const auto& w1 = model.classifier.at("classifier.w1").values();
  const auto& b1 = model.classifier.at("classifier.b1").values();
  const auto& w2 = model.classifier.at("classifier.w2").values();
  const auto& b2 = model.classifier.at("classifier.b2").values();
  size_t hid = b1.size(), k = b2.size();

  std::vector<double> h(hid);
  for (size_t j = 0; j < hid; ++j) {
    double acc = b1[j];
    for (size_t i = 0; i < pair_feature.size(); ++i)
      acc += pair_feature[i] * w1[i * hid + j];
    h[j] = acc > 0.0 ? acc : 0.0;
  }
  std::vector<double> logits(k);
  for (size_t j = 0; j < k; ++j) {
    double acc = b2[j];
    for (size_t i = 0; i < hid; ++i) acc += h[i] * w2[i * k + j];
    logits[j] = acc;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  for (double& l : logits) l /= denom;
  return logits;
}

std::vector<size_t> rank_predicates(const std::vector<double>& scores) {
  std::vector<size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return ids;
}

}  // namespace mbbr
