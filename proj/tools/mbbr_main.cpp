#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mbbr/checkpoint.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/eval.hpp"
#include "mbbr/pipeline.hpp"
#include "mbbr/sampling.hpp"

namespace fs = std::filesystem;
using namespace mbbr;

namespace {

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string precision;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config JSON");
  cmd->add_option("--seed", opts.seed, "top-level seed, overrides the config")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--out", opts.out, "output directory, overrides the config");
  cmd->add_option("--precision", opts.precision, "f64 | f32")
      ->check(CLI::IsMember({"f64", "f32"}));
}

// config file first, flags on top
ExperimentConfig resolve(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = load_experiment(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (!opts.precision.empty()) cfg.precision = opts.precision;
  validate_config(cfg);
  resolve_stage_seeds(cfg);
  ad::set_precision(cfg.precision == "f32" ? ad::Precision::f32
                                           : ad::Precision::f64);
  return cfg;
}

ad::Precision checkpoint_dtype(const ExperimentConfig& cfg) {
  return cfg.precision == "f32" ? ad::Precision::f32 : ad::Precision::f64;
}

void write_run_metadata(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  atomic_write_text(cfg.out_dir + "/config.json", experiment_json(cfg));
  atomic_write_text(cfg.out_dir + "/manifest.json", manifest_json(cfg));
}

void save_scenes_atomic(const std::string& path, const Dataset& scenes) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  save_scenes(tmp.string(), scenes);
  fs::rename(tmp, target);
}

size_t resolved_predicates(const ExperimentConfig& cfg, const Dataset& train,
                           const Dataset& eval_scenes) {
  if (cfg.eval.num_predicates > 0) return cfg.eval.num_predicates;
  return std::max(count_predicates(train), count_predicates(eval_scenes));
}

int cmd_synth(const ExperimentConfig& cfg) {
  Dataset scenes = synthesize(cfg.synth);
  write_run_metadata(cfg);
  save_scenes_atomic(cfg.out_dir + "/scenes.jsonl", scenes);
  std::cout << "wrote " << scenes.size() << " scenes to " << cfg.out_dir
            << "/scenes.jsonl\n";
  return 0;
}

int cmd_pretrain(const ExperimentConfig& cfg) {
  Dataset scenes = load_train_scenes(cfg);
  std::vector<PretrainExample> examples = strip_for_pretraining(scenes);
  ad::ParamSet params;
  PretrainResult result = pretrain(examples, cfg.pretrain, params);
  write_run_metadata(cfg);
  save_checkpoint(cfg.out_dir + "/checkpoint.bin", params, checkpoint_dtype(cfg));
  atomic_write_text(cfg.out_dir + "/training_log.json",
                    training_log_json(result, cfg.pretrain));
  if (!result.epoch_losses.empty())
    std::printf("pretrained %zu epochs, loss %.6f -> %.6f (%.1fs)\n",
                result.epoch_losses.size(), result.epoch_losses.front(),
                result.epoch_losses.back(), result.wall_time_s);
  else
    std::printf("pretrained 0 epochs (initialization only)\n");
  return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& checkpoint) {
  Dataset train = load_train_scenes(cfg);
  Dataset eval_scenes = load_eval_scenes(cfg);
  size_t num_predicates = resolved_predicates(cfg, train, eval_scenes);
  LabelEmbeddingTable table = load_labels(
      cfg, std::max(count_categories(train), count_categories(eval_scenes)));
  ad::ParamSet pretrained = read_checkpoint(checkpoint);

  size_t k = cfg.eval.k_shots.front();
  std::vector<KShotSample> samples =
      sample_k_shot(train, k, num_predicates, stage_seed(cfg, "sampling"));
  FewShotModel model = train_few_shot(train, samples, pretrained,
                                      cfg.pretrain.encoder, table, cfg.fewshot,
                                      num_predicates);

  write_run_metadata(cfg);
  save_checkpoint(cfg.out_dir + "/classifier.bin", model.classifier,
                  checkpoint_dtype(cfg));
  auto preds = predict_scenes(eval_scenes, model, pretrained, cfg.pretrain.encoder,
                              table, cfg.fewshot);
  save_predictions(cfg.out_dir + "/predictions.jsonl", preds);
  std::printf("trained %zu-shot classifier on %zu samples (feature dim %zu)\n", k,
              samples.size(), model.feature_dim);
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
  Dataset train = load_train_scenes(cfg);
  Dataset eval_scenes = load_eval_scenes(cfg);
  FewShotEvalConfig ec = cfg.eval;
  ec.num_predicates = resolved_predicates(cfg, train, eval_scenes);
  LabelEmbeddingTable table = load_labels(
      cfg, std::max(count_categories(train), count_categories(eval_scenes)));
  ad::ParamSet pretrained = read_checkpoint(checkpoint);

  FewShotEvalResult result = evaluate_few_shot(train, eval_scenes, pretrained,
                                               cfg.pretrain.encoder, table, ec);
  write_run_metadata(cfg);
  atomic_write_text(cfg.out_dir + "/report.json",
                    few_shot_report_json(result, ec));

  std::printf("%6s  %-9s  %10s  %8s\n", "k-shot", "mode", "R@N mean", "std");
  for (const FewShotCell& c : result.cells)
    std::printf("%6zu  %-9s  %10.4f  %8.4f\n", c.k_shot, c.constraint_mode.c_str(),
                c.mean, c.std_dev);
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg) {
  Dataset train = load_train_scenes(cfg);
  Dataset eval_scenes = load_eval_scenes(cfg);
  write_run_metadata(cfg);

  SweepResult sweep = mask_ratio_sweep(train, cfg.ablate_ratios, cfg.pretrain);
  atomic_write_text(cfg.out_dir + "/mask_sweep.json",
                    sweep_report_json(sweep, cfg.pretrain));
  std::cout << sweep_chart(sweep);

  atomic_write_text(cfg.out_dir + "/loss_ablation.json",
                    loss_ablation_report(train, eval_scenes, cfg));
  atomic_write_text(cfg.out_dir + "/feature_ablation.json",
                    feature_ablation_report(train, eval_scenes, cfg));
  std::cout << "wrote mask_sweep.json, loss_ablation.json, feature_ablation.json\n";
  return 0;
}

int cmd_export_attention(const ExperimentConfig& cfg, const std::string& checkpoint,
                         const std::string& data) {
  Dataset scenes = data.empty() ? load_train_scenes(cfg) : load_scenes(data);
  ad::ParamSet params = read_checkpoint(checkpoint);
  write_run_metadata(cfg);
  atomic_write_text(cfg.out_dir + "/attention.json",
                    attention_export_json(scenes, params, cfg.pretrain.encoder));
  std::cout << "wrote attention maps for " << scenes.size() << " scenes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked bounding-box reconstruction pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string checkpoint, attention_data;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
  add_common(synth, opts);
  CLI::App* pretrain_cmd =
      app.add_subcommand("pretrain", "self-supervised encoder pretraining");
  add_common(pretrain_cmd, opts);
  CLI::App* finetune =
      app.add_subcommand("finetune", "train the few-shot predicate classifier");
  add_common(finetune, opts);
  finetune->add_option("--checkpoint", checkpoint, "pretrained encoder checkpoint")
      ->required();
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "few-shot recall evaluation grid");
  add_common(eval_cmd, opts);
  eval_cmd->add_option("--checkpoint", checkpoint, "pretrained encoder checkpoint")
      ->required();
  CLI::App* ablate =
      app.add_subcommand("ablate", "mask-ratio, loss, and feature ablations");
  add_common(ablate, opts);
  CLI::App* export_att =
      app.add_subcommand("export-attention", "dump per-scene attention maps");
  add_common(export_att, opts);
  export_att->add_option("--checkpoint", checkpoint, "pretrained encoder checkpoint")
      ->required();
  export_att->add_option("--data", attention_data, "scene JSONL to encode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = resolve(opts);
    if (synth->parsed()) return cmd_synth(cfg);
    if (pretrain_cmd->parsed()) return cmd_pretrain(cfg);
    if (finetune->parsed()) return cmd_finetune(cfg, checkpoint);
    if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint);
    if (ablate->parsed()) return cmd_ablate(cfg);
    if (export_att->parsed())
      return cmd_export_attention(cfg, checkpoint, attention_data);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
