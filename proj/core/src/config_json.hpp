#pragma once

#include <string>

#include "json.hpp"
#include "mbbr/encoder.hpp"
#include "mbbr/eval.hpp"
#include "mbbr/fewshot.hpp"
#include "mbbr/pretrain.hpp"
#include "mbbr/synthetic.hpp"

// JSON <-> config structs, shared by report writers and the command line.
// Readers start from the passed defaults, apply present keys, and reject
// unknown keys so typos never silently fall back to a default.
namespace mbbr::cfgjson {

nlohmann::json to_json(const EncoderConfig& cfg);
nlohmann::json to_json(const PretrainConfig& cfg);
nlohmann::json to_json(const FeatureAblationConfig& cfg);
nlohmann::json to_json(const FewShotConfig& cfg);
nlohmann::json to_json(const SynthConfig& cfg);
nlohmann::json to_json(const FewShotEvalConfig& cfg);

EncoderConfig encoder_from_json(const nlohmann::json& j, EncoderConfig defaults);
PretrainConfig pretrain_from_json(const nlohmann::json& j, PretrainConfig defaults);
FeatureAblationConfig ablation_from_json(const nlohmann::json& j,
                                         FeatureAblationConfig defaults);
FewShotConfig fewshot_from_json(const nlohmann::json& j, FewShotConfig defaults);
SynthConfig synth_from_json(const nlohmann::json& j, SynthConfig defaults);
FewShotEvalConfig fewshot_eval_from_json(const nlohmann::json& j,
                                         FewShotEvalConfig defaults);

}  // namespace mbbr::cfgjson
