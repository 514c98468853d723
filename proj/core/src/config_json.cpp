#include "config_json.hpp"

#include <initializer_list>
#include <string_view>

#include "mbbr/errors.hpp"

namespace mbbr::cfgjson {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<std::string_view> keys) {
  if (!j.is_object())
    throw ConfigError(scope + ": expected a JSON object, got " +
                      std::string(j.type_name()));
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (std::string_view k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError(scope + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void get(const json& j, const std::string& scope, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(scope + "." + key + ": wrong type, got " +
                      std::string(it->type_name()));
  }
}

}  // namespace

json to_json(const EncoderConfig& cfg) {
  return json{{"num_layers", cfg.num_layers},
              {"num_heads", cfg.num_heads},
              {"model_dim", cfg.model_dim},
              {"ffn_dim", cfg.ffn_dim},
              {"dropout", cfg.dropout},
              {"activation", cfg.activation},
              {"norm_placement", cfg.norm_placement}};
}

EncoderConfig encoder_from_json(const json& j, EncoderConfig cfg) {
  check_keys(j, "encoder",
             {"num_layers", "num_heads", "model_dim", "ffn_dim", "dropout",
              "activation", "norm_placement"});
  get(j, "encoder", "num_layers", cfg.num_layers);
  get(j, "encoder", "num_heads", cfg.num_heads);
  get(j, "encoder", "model_dim", cfg.model_dim);
  get(j, "encoder", "ffn_dim", cfg.ffn_dim);
  get(j, "encoder", "dropout", cfg.dropout);
  get(j, "encoder", "activation", cfg.activation);
  get(j, "encoder", "norm_placement", cfg.norm_placement);
  return cfg;
}

json to_json(const PretrainConfig& cfg) {
  return json{{"mask_ratio", cfg.mask_ratio},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"weight_decay", cfg.weight_decay},
              {"fine_tune_epochs", cfg.fine_tune_epochs},
              {"loss_kind", cfg.loss_kind},
              {"seed", cfg.seed},
              {"grad_clip", cfg.grad_clip},
              {"lr_decay", cfg.lr_decay},
              {"mask_zeros", cfg.mask_zeros},
              {"encoder", to_json(cfg.encoder)}};
}

PretrainConfig pretrain_from_json(const json& j, PretrainConfig cfg) {
  check_keys(j, "pretrain",
             {"mask_ratio", "epochs", "batch_size", "learning_rate",
              "weight_decay", "fine_tune_epochs", "loss_kind", "seed",
              "grad_clip", "lr_decay", "mask_zeros", "encoder"});
  get(j, "pretrain", "mask_ratio", cfg.mask_ratio);
  get(j, "pretrain", "epochs", cfg.epochs);
  get(j, "pretrain", "batch_size", cfg.batch_size);
  get(j, "pretrain", "learning_rate", cfg.learning_rate);
  get(j, "pretrain", "weight_decay", cfg.weight_decay);
  get(j, "pretrain", "fine_tune_epochs", cfg.fine_tune_epochs);
  get(j, "pretrain", "loss_kind", cfg.loss_kind);
  get(j, "pretrain", "seed", cfg.seed);
  get(j, "pretrain", "grad_clip", cfg.grad_clip);
  get(j, "pretrain", "lr_decay", cfg.lr_decay);
  get(j, "pretrain", "mask_zeros", cfg.mask_zeros);
  if (auto it = j.find("encoder"); it != j.end())
    cfg.encoder = encoder_from_json(*it, cfg.encoder);
  return cfg;
}

json to_json(const FeatureAblationConfig& cfg) {
  return json{{"use_visual", cfg.use_visual},
              {"use_spatial", cfg.use_spatial},
              {"use_linguistic", cfg.use_linguistic}};
}

FeatureAblationConfig ablation_from_json(const json& j, FeatureAblationConfig cfg) {
  check_keys(j, "ablation", {"use_visual", "use_spatial", "use_linguistic"});
  get(j, "ablation", "use_visual", cfg.use_visual);
  get(j, "ablation", "use_spatial", cfg.use_spatial);
  get(j, "ablation", "use_linguistic", cfg.use_linguistic);
  return cfg;
}

json to_json(const FewShotConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"weight_decay", cfg.weight_decay},
              {"hidden_dim", cfg.hidden_dim},
              {"unfreeze_encoder", cfg.unfreeze_encoder},
              {"representation", cfg.representation},
              {"ablation", to_json(cfg.ablation)},
              {"seed", cfg.seed}};
}

FewShotConfig fewshot_from_json(const json& j, FewShotConfig cfg) {
  check_keys(j, "fewshot",
             {"epochs", "batch_size", "learning_rate", "weight_decay",
              "hidden_dim", "unfreeze_encoder", "representation", "ablation",
              "seed"});
  get(j, "fewshot", "epochs", cfg.epochs);
  get(j, "fewshot", "batch_size", cfg.batch_size);
  get(j, "fewshot", "learning_rate", cfg.learning_rate);
  get(j, "fewshot", "weight_decay", cfg.weight_decay);
  get(j, "fewshot", "hidden_dim", cfg.hidden_dim);
  get(j, "fewshot", "unfreeze_encoder", cfg.unfreeze_encoder);
  get(j, "fewshot", "representation", cfg.representation);
  get(j, "fewshot", "seed", cfg.seed);
  if (auto it = j.find("ablation"); it != j.end())
    cfg.ablation = ablation_from_json(*it, cfg.ablation);
  return cfg;
}

json to_json(const SynthConfig& cfg) {
  return json{{"num_scenes", cfg.num_scenes},
              {"min_entities", cfg.min_entities},
              {"max_entities", cfg.max_entities},
              {"num_categories", cfg.num_categories},
              {"num_predicates", cfg.num_predicates},
              {"prototype_scale", cfg.prototype_scale},
              {"context_strength", cfg.context_strength},
              {"noise_scale", cfg.noise_scale},
              {"theme_mix", cfg.theme_mix},
              {"canvas", cfg.canvas},
              {"seed", cfg.seed}};
}

SynthConfig synth_from_json(const json& j, SynthConfig cfg) {
  check_keys(j, "synth",
             {"num_scenes", "min_entities", "max_entities", "num_categories",
              "num_predicates", "prototype_scale", "context_strength",
              "noise_scale", "theme_mix", "canvas", "seed"});
  get(j, "synth", "num_scenes", cfg.num_scenes);
  get(j, "synth", "min_entities", cfg.min_entities);
  get(j, "synth", "max_entities", cfg.max_entities);
  get(j, "synth", "num_categories", cfg.num_categories);
  get(j, "synth", "num_predicates", cfg.num_predicates);
  get(j, "synth", "prototype_scale", cfg.prototype_scale);
  get(j, "synth", "context_strength", cfg.context_strength);
  get(j, "synth", "noise_scale", cfg.noise_scale);
  get(j, "synth", "theme_mix", cfg.theme_mix);
  get(j, "synth", "canvas", cfg.canvas);
  get(j, "synth", "seed", cfg.seed);
  return cfg;
}

json to_json(const FewShotEvalConfig& cfg) {
  return json{{"k_shots", cfg.k_shots},
              {"seeds", cfg.seeds},
              {"recall_n", cfg.recall_n},
              {"num_predicates", cfg.num_predicates},
              {"micro", cfg.micro},
              {"fewshot", to_json(cfg.fewshot)}};
}

FewShotEvalConfig fewshot_eval_from_json(const json& j, FewShotEvalConfig cfg) {
  check_keys(j, "eval",
             {"k_shots", "seeds", "recall_n", "num_predicates", "micro",
              "fewshot"});
  get(j, "eval", "k_shots", cfg.k_shots);
  get(j, "eval", "seeds", cfg.seeds);
  get(j, "eval", "recall_n", cfg.recall_n);
  get(j, "eval", "num_predicates", cfg.num_predicates);
  get(j, "eval", "micro", cfg.micro);
  if (auto it = j.find("fewshot"); it != j.end())
    cfg.fewshot = fewshot_from_json(*it, cfg.fewshot);
  return cfg;
}

}  // namespace mbbr::cfgjson
