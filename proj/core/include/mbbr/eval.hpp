#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbbr/fewshot.hpp"
#include "mbbr/pretrain.hpp"
#include "mbbr/scene.hpp"

namespace mbbr {

// ---------------------------------------------------------------- recall ---

struct PairPrediction {
  std::string scene_id;
  size_t subject = 0;
  size_t object = 0;
  std::vector<double> scores;
};

struct RecallConfig {
  size_t k = 1;      // per-pair prediction budget (1 = graph constraints)
  size_t top_n = 20; // global budget N
  bool micro = false;  // default is the per-scene (macro) average
};

void validate_config(const RecallConfig& cfg);

// R_k@N over aligned per-scene prediction lists. Per scene: each pair keeps
// its k best predicates (ties break toward the lower id), the pooled
// candidates keep the top_n best (score desc, then pair order, then predicate
// id), and a ground-truth triplet counts as recalled when its
// (subject, object, predicate) survives. Scenes without ground truth are
// skipped. Throws DataError when a ground-truth pair has no prediction.
double recall_at(const std::vector<std::vector<PairPrediction>>& predictions,
                 const Dataset& ground_truth, const RecallConfig& cfg);

// JSONL of {"scene_id","subject","object","scores"}; groups restore the
// per-scene lists by matching scene order.
void save_predictions(const std::string& path,
                      const std::vector<std::vector<PairPrediction>>& predictions);
std::vector<PairPrediction> load_predictions(const std::string& path);
std::vector<std::vector<PairPrediction>> group_predictions(
    const std::vector<PairPrediction>& flat, const Dataset& scenes);

// Scores for every ordered entity pair of every scene under the trained
// few-shot classifier.
std::vector<std::vector<PairPrediction>> predict_scenes(
    const Dataset& scenes, const FewShotModel& model, const ad::ParamSet& pretrained,
    const EncoderConfig& enc, const LabelEmbeddingTable& table,
    const FewShotConfig& cfg);

// ----------------------------------------------------------------- probe ---

struct ProbeResult {
  double accuracy = 0.0;           // linear probe on reconstructed features
  double baseline_accuracy = 0.0;  // same probe trained on the raw features
  size_t num_train = 0;
  size_t num_eval = 0;
  size_t num_categories = 0;
};

// Masks at the given ratio, reconstructs, and trains a linear category probe
// on the reconstructions of masked entities (80/20 split). Throws DataError
// when fewer than two entities end up masked.
ProbeResult masked_top1_probe(const Dataset& dataset, const ad::ParamSet& params,
                              const PretrainConfig& cfg, double ratio,
                              uint64_t seed);

struct SweepRow {
  double ratio = 0.0;
  double accuracy = 0.0;
  double baseline_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Pretrains from scratch at every ratio and probes at that same ratio.
SweepResult mask_ratio_sweep(const Dataset& dataset,
                             const std::vector<double>& ratios,
                             const PretrainConfig& cfg);

std::string sweep_chart(const SweepResult& result);
std::string sweep_report_json(const SweepResult& result, const PretrainConfig& cfg);

// -------------------------------------------------------- few-shot eval ---

struct FewShotEvalConfig {
  std::vector<size_t> k_shots = {5, 10};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  size_t recall_n = 20;
  size_t num_predicates = 0;
  bool micro = false;
  FewShotConfig fewshot;  // seed field is overridden per run
};

void validate_config(const FewShotEvalConfig& cfg);

struct FewShotCell {
  size_t k_shot = 0;
  std::string constraint_mode;  // graph | no_graph
  double mean = 0.0;
  double std_dev = 0.0;
  std::vector<double> per_seed;
};

struct FewShotEvalResult {
  std::vector<FewShotCell> cells;
};

// For every (k_shot, seed): sample k triplets per predicate from the training
// scenes, train the classifier, and score recall on the eval scenes under
// graph (k=1) and no-graph (k=K) constraints. Pretrained weights are copied
// per run, so the caller's set never changes even when unfreezing.
FewShotEvalResult evaluate_few_shot(const Dataset& train_scenes,
                                    const Dataset& eval_scenes,
                                    const ad::ParamSet& pretrained,
                                    const EncoderConfig& enc,
                                    const LabelEmbeddingTable& table,
                                    const FewShotEvalConfig& cfg);

std::string few_shot_report_json(const FewShotEvalResult& result,
                                 const FewShotEvalConfig& cfg);

}  // namespace mbbr
