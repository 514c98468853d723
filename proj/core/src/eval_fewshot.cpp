#include <cmath>

#include "config_json.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/eval.hpp"
#include "mbbr/sampling.hpp"

namespace mbbr {

using nlohmann::json;

void validate_config(const FewShotEvalConfig& cfg) {
  if (cfg.k_shots.empty()) throw ConfigError("eval: k_shots must be non-empty");
  for (size_t k : cfg.k_shots)
    if (k < 1) throw ConfigError("eval: k_shot values must be >= 1");
  if (cfg.seeds.empty()) throw ConfigError("eval: seeds must be non-empty");
  if (cfg.recall_n < 1) throw ConfigError("eval: recall_n must be >= 1");
  if (cfg.num_predicates < 1)
    throw ConfigError("eval: num_predicates must be >= 1");
  validate_config(cfg.fewshot);
}

namespace {

ad::ParamSet clone_params(const ad::ParamSet& src) {
  ad::ParamSet out;
  for (const auto& [name, t] : src.items())
    out.add(name, ad::Tensor::from_values(t.shape(), t.values(), t.requires_grad()));
  return out;
}

struct Stats {
  double mean = 0.0, std_dev = 0.0;
};

Stats summarize(const std::vector<double>& xs) {
  Stats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std_dev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

FewShotEvalResult evaluate_few_shot(const Dataset& train_scenes,
                                    const Dataset& eval_scenes,
                                    const ad::ParamSet& pretrained,
                                    const EncoderConfig& enc,
                                    const LabelEmbeddingTable& table,
                                    const FewShotEvalConfig& cfg) {
  validate_config(cfg);
  if (eval_scenes.empty()) throw DataError("eval: no evaluation scenes");

  FewShotEvalResult result;
  for (size_t k : cfg.k_shots) {
    std::vector<double> graph_scores, no_graph_scores;
    for (uint64_t seed : cfg.seeds) {
      std::vector<KShotSample> samples =
          sample_k_shot(train_scenes, k, cfg.num_predicates, seed);
      ad::ParamSet run_params = clone_params(pretrained);
      FewShotConfig fs = cfg.fewshot;
      fs.seed = seed;
      FewShotModel model = train_few_shot(train_scenes, samples, run_params, enc,
                                          table, fs, cfg.num_predicates);
      auto preds = predict_scenes(eval_scenes, model, run_params, enc, table, fs);

      RecallConfig rc;
      rc.top_n = cfg.recall_n;
      rc.micro = cfg.micro;
      rc.k = 1;
      graph_scores.push_back(recall_at(preds, eval_scenes, rc));
      rc.k = cfg.num_predicates;
      no_graph_scores.push_back(recall_at(preds, eval_scenes, rc));
    }
    Stats g = summarize(graph_scores);
    result.cells.push_back({k, "graph", g.mean, g.std_dev, graph_scores});
    Stats n = summarize(no_graph_scores);
    result.cells.push_back({k, "no_graph", n.mean, n.std_dev, no_graph_scores});
  }
  return result;
}

std::string few_shot_report_json(const FewShotEvalResult& result,
                                 const FewShotEvalConfig& cfg) {
  json cells = json::array();
  for (const FewShotCell& c : result.cells)
    cells.push_back({{"k_shot", c.k_shot},
                     {"constraint_mode", c.constraint_mode},
                     {"mean", c.mean},
                     {"std", c.std_dev},
                     {"per_seed", c.per_seed}});
  json j{{"config", cfgjson::to_json(cfg)},
         {"seeds", cfg.seeds},
         {"cells", cells},
         {"paper_reference",
          {{"label", "paper-reported"},
           {"dataset", "vrd"},
           {"recall_at", 20},
           {"units", "percent"},
           {"cells",
            json::array(
                {{{"k_shot", 10}, {"constraint_mode", "graph"}, {"mean", 20.87}, {"std", 2.46}},
                 {{"k_shot", 20}, {"constraint_mode", "graph"}, {"mean", 21.52}, {"std", 1.34}},
                 {{"k_shot", 10}, {"constraint_mode", "no_graph"}, {"mean", 30.75}, {"std", 3.66}},
                 {{"k_shot", 20}, {"constraint_mode", "no_graph"}, {"mean", 34.01}, {"std", 2.51}}})}}}};
  return j.dump(2) + "\n";
}

}  // namespace mbbr
