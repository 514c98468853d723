#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbbr/eval.hpp"
#include "mbbr/fewshot.hpp"
#include "mbbr/pretrain.hpp"
#include "mbbr/synthetic.hpp"

namespace mbbr {

// One experiment = one config file. Every stage seed is re-derived from the
// top-level seed, so a single number pins the whole run.
struct ExperimentConfig {
  uint64_t seed = 1;
  std::string out_dir = ".";
  std::string precision = "f64";  // f64 | f32
  std::string train_data;  // scene JSONL; empty means synthesize
  std::string eval_data;
  SynthConfig synth;
  PretrainConfig pretrain;
  FewShotConfig fewshot;
  FewShotEvalConfig eval;
  std::vector<double> ablate_ratios = {0.10, 0.25, 0.50, 0.75, 0.90};
  size_t label_dim = kDefaultLabelDim;
  std::string label_embeddings;  // JSONL path; empty means seeded fallback
};

ExperimentConfig experiment_from_json_text(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);

// Full resolved echo, stable across identical configs.
std::string experiment_json(const ExperimentConfig& cfg);

// Stamps the per-stage seeds (synth, pretrain, fewshot, labels, sampling)
// derived from cfg.seed into the stage configs and syncs eval.fewshot.
void resolve_stage_seeds(ExperimentConfig& cfg);
uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage);

void validate_config(const ExperimentConfig& cfg);

// FNV-1a over the resolved config echo.
uint64_t config_hash(const std::string& text);
std::string manifest_json(const ExperimentConfig& cfg);

// write-then-rename so readers never observe a partial file
void atomic_write_text(const std::string& path, const std::string& content);

std::string training_log_json(const PretrainResult& result,
                              const PretrainConfig& cfg);

// Scenes from cfg.train_data / cfg.eval_data, or synthesized when no path is
// set (eval falls back to a disjoint-seed synthetic split).
Dataset load_train_scenes(const ExperimentConfig& cfg);
Dataset load_eval_scenes(const ExperimentConfig& cfg);

LabelEmbeddingTable load_labels(const ExperimentConfig& cfg, size_t num_categories);

// max category / predicate id + 1 across the dataset

// Per-scene attention tensors for an unmasked pass:
// [{scene_id, entities, layers[layer][head][q][k]}, ...] as JSON text.
std::string attention_export_json(const Dataset& scenes, const ad::ParamSet& params,
                                  const EncoderConfig& enc);

// The three study reports behind the `ablate` command.
std::string loss_ablation_report(const Dataset& train, const Dataset& eval_scenes,
                                 const ExperimentConfig& cfg);
std::string feature_ablation_report(const Dataset& train, const Dataset& eval_scenes,
                                    const ExperimentConfig& cfg);

}  // namespace mbbr
