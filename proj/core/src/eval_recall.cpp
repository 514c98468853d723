#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/eval.hpp"

namespace mbbr {

using nlohmann::json;

void validate_config(const RecallConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("recall: k must be >= 1");
  if (cfg.top_n < 1) throw ConfigError("recall: top_n must be >= 1");
}

namespace {

struct SceneTally {
  size_t hits = 0;
  size_t total = 0;
};

SceneTally score_scene(const std::vector<PairPrediction>& preds, const Scene& gt,
                       const RecallConfig& cfg) {
  size_t width = 0;
  std::map<std::pair<size_t, size_t>, size_t> pair_index;
  for (size_t p = 0; p < preds.size(); ++p) {
    const PairPrediction& pp = preds[p];
    if (pp.scene_id != gt.scene_id)
      throw DataError("recall: prediction for scene '" + pp.scene_id +
                      "' grouped under scene '" + gt.scene_id + "'");
    if (pp.subject == pp.object)
      throw DataError("recall: self-pair prediction in scene " + gt.scene_id);
    if (pp.scores.empty())
      throw DataError("recall: empty score vector in scene " + gt.scene_id);
    if (width == 0) width = pp.scores.size();
    if (pp.scores.size() != width)
      throw DataError("recall: score widths disagree in scene " + gt.scene_id);
    for (double s : pp.scores)
      if (!std::isfinite(s))
        throw DataError("recall: non-finite score in scene " + gt.scene_id);
    if (!pair_index.emplace(std::make_pair(pp.subject, pp.object), p).second)
      throw DataError("recall: duplicate prediction for pair (" +
                      std::to_string(pp.subject) + "," + std::to_string(pp.object) +
                      ") in scene " + gt.scene_id);
  }

  SceneTally tally;
  tally.total = gt.relationships.size();
  if (tally.total == 0) return tally;

  struct Cand {
    double score;
    size_t pair;
    size_t pred;
  };
  std::vector<Cand> pool;
  for (size_t p = 0; p < preds.size(); ++p) {
    std::vector<size_t> ids(width);
    for (size_t c = 0; c < width; ++c) ids[c] = c;
    std::sort(ids.begin(), ids.end(), [&](size_t a, size_t b) {
      if (preds[p].scores[a] != preds[p].scores[b])
        return preds[p].scores[a] > preds[p].scores[b];
      return a < b;
    });
    for (size_t r = 0; r < std::min(cfg.k, width); ++r)
      pool.push_back({preds[p].scores[ids[r]], p, ids[r]});
  }
  std::sort(pool.begin(), pool.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pair != b.pair) return a.pair < b.pair;
    return a.pred < b.pred;
  });
  if (pool.size() > cfg.top_n) pool.resize(cfg.top_n);

  std::set<std::pair<size_t, size_t>> kept;
  for (const Cand& c : pool) kept.emplace(c.pair, c.pred);

  for (const RelationshipTriplet& t : gt.relationships) {
    auto it = pair_index.find({t.subject, t.object});
    if (it == pair_index.end())
      throw DataError("recall: no prediction for ground-truth pair (" +
                      std::to_string(t.subject) + "," + std::to_string(t.object) +
                      ") in scene " + gt.scene_id);
    if (t.predicate_id < 0 || static_cast<size_t>(t.predicate_id) >= width)
      throw DataError("recall: predicate " + std::to_string(t.predicate_id) +
                      " outside the " + std::to_string(width) +
                      " scored classes in scene " + gt.scene_id);
    if (kept.count({it->second, static_cast<size_t>(t.predicate_id)})) ++tally.hits;
  }
  return tally;
}

}  // namespace

double recall_at(const std::vector<std::vector<PairPrediction>>& predictions,
                 const Dataset& ground_truth, const RecallConfig& cfg) {
  validate_config(cfg);
  if (predictions.size() != ground_truth.size())
    throw std::invalid_argument("recall: " + std::to_string(predictions.size()) +
                                " prediction groups for " +
                                std::to_string(ground_truth.size()) + " scenes");

  double macro_sum = 0.0;
  size_t scored_scenes = 0, micro_hits = 0, micro_total = 0;
  for (size_t i = 0; i < ground_truth.size(); ++i) {
    SceneTally t = score_scene(predictions[i], ground_truth[i], cfg);
    if (t.total == 0) continue;
    macro_sum += static_cast<double>(t.hits) / static_cast<double>(t.total);
    ++scored_scenes;
    micro_hits += t.hits;
    micro_total += t.total;
  }
  if (scored_scenes == 0)
    throw DataError("recall: no scene carries ground-truth relationships");
  if (cfg.micro)
    return static_cast<double>(micro_hits) / static_cast<double>(micro_total);
  return macro_sum / static_cast<double>(scored_scenes);
}

void save_predictions(const std::string& path,
                      const std::vector<std::vector<PairPrediction>>& predictions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& group : predictions)
    for (const PairPrediction& pp : group) {
      json j;
      j["scene_id"] = pp.scene_id;
      j["subject"] = pp.subject;
      j["object"] = pp.object;
      j["scores"] = pp.scores;
      out << j.dump() << "\n";
    }
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::vector<PairPrediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<PairPrediction> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      PairPrediction pp;
      pp.scene_id = j.at("scene_id").get<std::string>();
      pp.subject = j.at("subject").get<size_t>();
      pp.object = j.at("object").get<size_t>();
      pp.scores = j.at("scores").get<std::vector<double>>();
      out.push_back(std::move(pp));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::vector<PairPrediction>> group_predictions(
    const std::vector<PairPrediction>& flat, const Dataset& scenes) {
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < scenes.size(); ++i)
    if (!index.emplace(scenes[i].scene_id, i).second)
      throw DataError("duplicate scene_id '" + scenes[i].scene_id + "'");
  std::vector<std::vector<PairPrediction>> grouped(scenes.size());
  for (const PairPrediction& pp : flat) {
    auto it = index.find(pp.scene_id);
    if (it == index.end())
      throw DataError("prediction references unknown scene '" + pp.scene_id + "'");
    grouped[it->second].push_back(pp);
  }
  return grouped;
}

std::vector<std::vector<PairPrediction>> predict_scenes(
    const Dataset& scenes, const FewShotModel& model, const ad::ParamSet& pretrained,
    const EncoderConfig& enc, const LabelEmbeddingTable& table,
    const FewShotConfig& cfg) {
  std::vector<std::vector<PairPrediction>> out(scenes.size());
  for (size_t s = 0; s < scenes.size(); ++s) {
    const Scene& scene = scenes[s];
    if (scene.entities.size() < 2) continue;
    auto z = entity_representation(scene, pretrained, enc, cfg.representation);
    for (size_t i = 0; i < scene.entities.size(); ++i)
      for (size_t j = 0; j < scene.entities.size(); ++j) {
        if (i == j) continue;
        auto f = build_pair_feature(scene, i, j, z, table, cfg.ablation);
        out[s].push_back({scene.scene_id, i, j, predict_pair(f, model)});
      }
  }
  return out;
}

}  // namespace mbbr
