#include "mbbr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "config_json.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/ops.hpp"
#include "mbbr/rng.hpp"

namespace mbbr {

using nlohmann::json;

ExperimentConfig experiment_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");

  ExperimentConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "seed" || key == "out_dir" || key == "precision" ||
        key == "data" || key == "synth" || key == "pretrain" ||
        key == "fewshot" || key == "eval" || key == "ablate" || key == "labels")
      continue;
    throw ConfigError("config: unknown key '" + key + "'");
  }

  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned())
      throw ConfigError("config.seed: expected an unsigned integer");
    cfg.seed = it->get<uint64_t>();
  }
  if (auto it = j.find("out_dir"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("config.out_dir: expected a string");
    cfg.out_dir = it->get<std::string>();
  }
  if (auto it = j.find("precision"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("config.precision: expected a string");
    cfg.precision = it->get<std::string>();
  }
  if (auto it = j.find("data"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("config.data: expected an object");
    for (auto d = it->begin(); d != it->end(); ++d)
      if (d.key() != "train" && d.key() != "eval")
        throw ConfigError("config.data: unknown key '" + d.key() + "'");
    if (auto t = it->find("train"); t != it->end())
      cfg.train_data = t->get<std::string>();
    if (auto e = it->find("eval"); e != it->end())
      cfg.eval_data = e->get<std::string>();
  }
  if (auto it = j.find("synth"); it != j.end())
    cfg.synth = cfgjson::synth_from_json(*it, cfg.synth);
  if (auto it = j.find("pretrain"); it != j.end())
    cfg.pretrain = cfgjson::pretrain_from_json(*it, cfg.pretrain);
  if (auto it = j.find("fewshot"); it != j.end())
    cfg.fewshot = cfgjson::fewshot_from_json(*it, cfg.fewshot);
  cfg.eval.fewshot = cfg.fewshot;
  if (auto it = j.find("eval"); it != j.end())
    cfg.eval = cfgjson::fewshot_eval_from_json(*it, cfg.eval);
  if (auto it = j.find("ablate"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("config.ablate: expected an object");
    for (auto a = it->begin(); a != it->end(); ++a)
      if (a.key() != "ratios")
        throw ConfigError("config.ablate: unknown key '" + a.key() + "'");
    if (auto r = it->find("ratios"); r != it->end())
      cfg.ablate_ratios = r->get<std::vector<double>>();
  }
  if (auto it = j.find("labels"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("config.labels: expected an object");
    for (auto l = it->begin(); l != it->end(); ++l)
      if (l.key() != "dim" && l.key() != "path")
        throw ConfigError("config.labels: unknown key '" + l.key() + "'");
    if (auto d = it->find("dim"); d != it->end()) cfg.label_dim = d->get<size_t>();
    if (auto p = it->find("path"); p != it->end())
      cfg.label_embeddings = p->get<std::string>();
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  return experiment_from_json_text(text);
}

std::string experiment_json(const ExperimentConfig& cfg) {
  json j{{"seed", cfg.seed},
         {"out_dir", cfg.out_dir},
         {"precision", cfg.precision},
         {"data", {{"train", cfg.train_data}, {"eval", cfg.eval_data}}},
         {"synth", cfgjson::to_json(cfg.synth)},
         {"pretrain", cfgjson::to_json(cfg.pretrain)},
         {"fewshot", cfgjson::to_json(cfg.fewshot)},
         {"eval", cfgjson::to_json(cfg.eval)},
         {"ablate", {{"ratios", cfg.ablate_ratios}}},
         {"labels", {{"dim", cfg.label_dim}, {"path", cfg.label_embeddings}}}};
  return j.dump(2) + "\n";
}

uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage) {
  return SplitRng(cfg.seed).fork(stage).seed();
}

void resolve_stage_seeds(ExperimentConfig& cfg) {
  cfg.synth.seed = stage_seed(cfg, "synth");
  cfg.pretrain.seed = stage_seed(cfg, "pretrain");
  cfg.fewshot.seed = stage_seed(cfg, "fewshot");
  cfg.eval.fewshot.seed = cfg.fewshot.seed;
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.precision != "f64" && cfg.precision != "f32")
    throw ConfigError("config.precision must be f64 or f32, got '" +
                      cfg.precision + "'");
  if (cfg.out_dir.empty()) throw ConfigError("config.out_dir must be non-empty");
}

uint64_t config_hash(const std::string& text) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string manifest_json(const ExperimentConfig& cfg) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(config_hash(experiment_json(cfg))));
  json j{{"seed", cfg.seed}, {"config_hash", hex}};
  return j.dump(2) + "\n";
}

void atomic_write_text(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("rename to '" + path + "' failed: " + ec.message());
  }
}

std::string training_log_json(const PretrainResult& result,
                              const PretrainConfig& cfg) {
  json j{{"seed", cfg.seed},
         {"config", cfgjson::to_json(cfg)},
         {"epoch_losses", result.epoch_losses},
         {"num_categories", result.num_categories}};
  return j.dump(2) + "\n";
}

Dataset load_train_scenes(const ExperimentConfig& cfg) {
  if (!cfg.train_data.empty()) return load_scenes(cfg.train_data);
  return synthesize(cfg.synth);
}

Dataset load_eval_scenes(const ExperimentConfig& cfg) {
  if (!cfg.eval_data.empty()) return load_scenes(cfg.eval_data);
  SynthConfig sc = cfg.synth;
  sc.seed = SplitRng(cfg.synth.seed).fork("eval-split").seed();
  sc.num_scenes = std::max<size_t>(1, cfg.synth.num_scenes / 5);
  return synthesize(sc);
}

LabelEmbeddingTable load_labels(const ExperimentConfig& cfg, size_t num_categories) {
  if (!cfg.label_embeddings.empty())
    return load_label_embeddings(cfg.label_embeddings, num_categories);
  return make_label_embeddings(num_categories, stage_seed(cfg, "labels"),
                               cfg.label_dim);
}

std::string attention_export_json(const Dataset& scenes, const ad::ParamSet& params,
                                  const EncoderConfig& enc) {
  json out = json::array();
  FusionWeights fw = fusion_view(params);
  for (const Scene& s : scenes) {
    if (s.entities.empty()) continue;
    PretrainExample e;
    e.scene_id = s.scene_id;
    e.width = s.width;
    e.height = s.height;
    e.entities = s.entities;
    MaskPlan none(s.entities.size(), 0);
    ad::Tensor emb = build_entity_embeddings(e, none, fw, false);
    PaddedBatch batch;
    batch.embeddings =
        ad::reshape(emb, {1, s.entities.size(), enc.model_dim});
    batch.real.assign(s.entities.size(), 1);
    AttentionMaps maps;
    encode(params, enc, batch, &maps);

    size_t n = s.entities.size();
    json layers = json::array();
    for (size_t l = 0; l < maps.layers.size(); ++l) {
      json heads = json::array();
      for (size_t h = 0; h < maps.heads; ++h) {
        json rows = json::array();
        for (size_t q = 0; q < n; ++q) {
          json row = json::array();
          for (size_t k = 0; k < n; ++k) row.push_back(maps.at(l, 0, h, q, k));
          rows.push_back(std::move(row));
        }
        heads.push_back(std::move(rows));
      }
      layers.push_back(std::move(heads));
    }
    out.push_back(json{{"scene_id", s.scene_id},
                       {"entities", n},
                       {"layers", std::move(layers)}});
  }
  return out.dump(2) + "\n";
}

namespace {

json eval_cells_json(const FewShotEvalResult& result) {
  json cells = json::array();
  for (const FewShotCell& c : result.cells)
    cells.push_back({{"k_shot", c.k_shot},
                     {"constraint_mode", c.constraint_mode},
                     {"mean", c.mean},
                     {"std", c.std_dev},
                     {"per_seed", c.per_seed}});
  return cells;
}

FewShotEvalResult run_eval_variant(const Dataset& train, const Dataset& eval_scenes,
                                   const ExperimentConfig& cfg,
                                   const PretrainConfig& pretrain_cfg,
                                   const FewShotConfig& fewshot_cfg) {
  std::vector<PretrainExample> examples = strip_for_pretraining(train);
  ad::ParamSet params;
  pretrain(examples, pretrain_cfg, params);

  FewShotEvalConfig ec = cfg.eval;
  ec.fewshot = fewshot_cfg;
  if (ec.num_predicates == 0)
    ec.num_predicates =
        std::max(count_predicates(train), count_predicates(eval_scenes));
  LabelEmbeddingTable table = load_labels(
      cfg, std::max(count_categories(train), count_categories(eval_scenes)));
  return evaluate_few_shot(train, eval_scenes, params, pretrain_cfg.encoder, table, ec);
}

}  // namespace

std::string loss_ablation_report(const Dataset& train, const Dataset& eval_scenes,
                                 const ExperimentConfig& cfg) {
  json variants = json::array();
  for (const std::string kind : {"reconstruction", "classification"}) {
    PretrainConfig pc = cfg.pretrain;
    pc.loss_kind = kind;
    FewShotEvalResult r = run_eval_variant(train, eval_scenes, cfg, pc, cfg.fewshot);
    variants.push_back({{"loss_kind", kind}, {"cells", eval_cells_json(r)}});
  }
  json j{{"config", json::parse(experiment_json(cfg))},
         {"variants", variants},
         {"paper_reference",
          {{"label", "paper-reported"},
           {"dataset", "vrd"},
           {"k_shot", 10},
           {"constraint_mode", "graph"},
           {"recall_at", 20},
           {"units", "percent"},
           {"cells",
            json::array({{{"loss_kind", "reconstruction"}, {"mean", 20.87}, {"std", 2.46}},
                         {{"loss_kind", "classification"}, {"mean", 16.7}, {"std", 1.51}}})}}}};
  return j.dump(2) + "\n";
}

std::string feature_ablation_report(const Dataset& train, const Dataset& eval_scenes,
                                    const ExperimentConfig& cfg) {
  size_t z_dim = cfg.fewshot.representation == "raw" ? kFeatureDim
                                                     : cfg.pretrain.encoder.model_dim;
  json variants = json::array();
  for (const std::string name : {"L+S", "L+S+V"}) {
    FewShotConfig fs = cfg.fewshot;
    fs.ablation.use_linguistic = true;
    fs.ablation.use_spatial = true;
    fs.ablation.use_visual = name == "L+S+V";
    FewShotEvalResult r = run_eval_variant(train, eval_scenes, cfg, cfg.pretrain, fs);
    variants.push_back(
        {{"features", name},
         {"pair_feature_dim", pair_feature_dim(fs.ablation, z_dim, cfg.label_dim)},
         {"cells", eval_cells_json(r)}});
  }
  json j{{"config", json::parse(experiment_json(cfg))},
         {"variants", variants},
         {"paper_reference",
          {{"label", "paper-reported"},
           {"dataset", "vrd"},
           {"k_shot", 10},
           {"constraint_mode", "graph"},
           {"recall_at", 20},
           {"units", "percent"},
           {"cells", json::array({{{"features", "L+S"}, {"mean", 13.68}, {"std", 2.27}},
                                  {{"features", "L+S+V"}, {"mean", 20.87}, {"std", 2.46}}})}}}};
  return j.dump(2) + "\n";
}

}  // namespace mbbr
