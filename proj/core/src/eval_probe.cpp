#include <algorithm>
#include <cmath>
#include <cstdio>

#include "config_json.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/eval.hpp"
#include "mbbr/ops.hpp"
#include "mbbr/optim.hpp"
#include "mbbr/rng.hpp"

namespace mbbr {

using nlohmann::json;

namespace {

struct Probe {
  std::vector<double> w;  // dim x classes
  std::vector<double> b;
  size_t dim = 0, classes = 0;
};

Probe train_probe(const std::vector<std::vector<double>>& features,
                  const std::vector<size_t>& labels, size_t classes,
                  const SplitRng& rng) {
  size_t n = features.size(), dim = features[0].size();
  double limit = std::sqrt(6.0 / static_cast<double>(dim + classes));
  SplitRng init = rng.fork("init");
  std::vector<double> w0(dim * classes);
  for (double& x : w0) x = init.uniform(-limit, limit);

  ad::ParamSet params;
  params.add("probe.w", ad::Tensor::from_values({dim, classes}, std::move(w0), true));
  params.add("probe.b", ad::Tensor::zeros({classes}, true));
  ad::AdamConfig acfg;
  acfg.lr = 2e-3;
  ad::Adam adam(params, acfg);

  const size_t batch = 16, epochs = 20;
  SplitRng shuffle = rng.fork("shuffle");
  for (size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<size_t> order = shuffle.permutation(n);
    for (size_t start = 0; start < n; start += batch) {
      size_t end = std::min(n, start + batch);
      std::vector<double> buf;
      std::vector<size_t> y;
      for (size_t i = start; i < end; ++i) {
        buf.insert(buf.end(), features[order[i]].begin(), features[order[i]].end());
        y.push_back(labels[order[i]]);
      }
      ad::Tape tape;
      ad::Tensor x = ad::Tensor::from_values({end - start, dim}, std::move(buf));
      ad::Tensor loss = ad::cross_entropy(
          ad::add_bias(ad::matmul(x, params.at("probe.w")), params.at("probe.b")), y);
      tape.backward(loss);
      adam.step();
      params.zero_grad();
    }
  }

  Probe p;
  p.w = params.at("probe.w").values();
  p.b = params.at("probe.b").values();
  p.dim = dim;
  p.classes = classes;
  return p;
}

double probe_accuracy(const Probe& p, const std::vector<std::vector<double>>& features,
                      const std::vector<size_t>& labels) {
  size_t hits = 0;
  for (size_t i = 0; i < features.size(); ++i) {
    size_t best = 0;
    double best_score = -HUGE_VAL;
    for (size_t c = 0; c < p.classes; ++c) {
      double acc = p.b[c];
      for (size_t d = 0; d < p.dim; ++d) acc += features[i][d] * p.w[d * p.classes + c];
      if (acc > best_score) {
        best_score = acc;
        best = c;
      }
    }
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(features.size());
}

}  // namespace

ProbeResult masked_top1_probe(const Dataset& dataset, const ad::ParamSet& params,
                              const PretrainConfig& cfg, double ratio,
                              uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ConfigError("probe: mask ratio must lie in [0,1]");
  if (dataset.empty()) throw DataError("probe: empty dataset");

  int max_cat = -1;
  for (const Scene& s : dataset)
    for (const Entity& e : s.entities) {
      if (e.category_id < 0)
        throw DataError("probe: negative category in scene " + s.scene_id);
      max_cat = std::max(max_cat, e.category_id);
    }
  if (max_cat < 0) throw DataError("probe: dataset has no entities");
  size_t classes = static_cast<size_t>(max_cat) + 1;

  std::vector<PretrainExample> examples = strip_for_pretraining(dataset);
  SplitRng root(seed);
  SplitRng mask_rng = root.fork("mask");
  std::vector<MaskPlan> plans;
  for (const PretrainExample& e : examples)
    plans.push_back(draw_mask(e, ratio, mask_rng));

  ReconBatch recon = reconstruct_batch(examples, plans, params, cfg);

  std::vector<std::vector<double>> rec_feats, raw_feats;
  std::vector<size_t> labels;
  size_t rows = recon.scene_index.size();
  for (size_t r = 0; r < rows; ++r) {
    if (!recon.masked[r]) continue;
    const Entity& e =
        dataset[recon.scene_index[r]].entities[recon.entity_index[r]];
    rec_feats.emplace_back(recon.y_rec.begin() + static_cast<long>(r * kFeatureDim),
                           recon.y_rec.begin() + static_cast<long>((r + 1) * kFeatureDim));
    raw_feats.push_back(e.feature);
    labels.push_back(static_cast<size_t>(e.category_id));
  }
  if (rec_feats.empty())
    throw DataError("probe: mask ratio " + std::to_string(ratio) +
                    " left no entity masked");
  if (rec_feats.size() < 2)
    throw DataError("probe: a single masked entity cannot be split for evaluation");

  size_t n = rec_feats.size();
  std::vector<size_t> perm = root.fork("split").permutation(n);
  size_t train_n = std::clamp<size_t>((n * 4) / 5, 1, n - 1);

  auto take = [&](const std::vector<std::vector<double>>& src, size_t lo, size_t hi) {
    std::vector<std::vector<double>> out;
    for (size_t i = lo; i < hi; ++i) out.push_back(src[perm[i]]);
    return out;
  };
  auto take_labels = [&](size_t lo, size_t hi) {
    std::vector<size_t> out;
    for (size_t i = lo; i < hi; ++i) out.push_back(labels[perm[i]]);
    return out;
  };

  auto rec_train = take(rec_feats, 0, train_n);
  auto rec_eval = take(rec_feats, train_n, n);
  auto raw_train = take(raw_feats, 0, train_n);
  auto raw_eval = take(raw_feats, train_n, n);
  auto y_train = take_labels(0, train_n);
  auto y_eval = take_labels(train_n, n);

  ProbeResult result;
  result.num_train = train_n;
  result.num_eval = n - train_n;
  result.num_categories = classes;
  Probe probe = train_probe(rec_train, y_train, classes, root.fork("probe"));
  result.accuracy = probe_accuracy(probe, rec_eval, y_eval);
  Probe baseline = train_probe(raw_train, y_train, classes, root.fork("baseline"));
  result.baseline_accuracy = probe_accuracy(baseline, raw_eval, y_eval);
  return result;
}

SweepResult mask_ratio_sweep(const Dataset& dataset,
                             const std::vector<double>& ratios,
                             const PretrainConfig& cfg) {
  if (ratios.empty()) throw ConfigError("sweep: empty ratio list");
  for (double r : ratios)
    if (!(r > 0.0 && r < 1.0))
      throw ConfigError("sweep: ratios must lie in (0,1), got " + std::to_string(r));

  std::vector<PretrainExample> examples = strip_for_pretraining(dataset);
  SweepResult result;
  for (double ratio : ratios) {
    PretrainConfig run_cfg = cfg;
    run_cfg.mask_ratio = ratio;
    ad::ParamSet params;
    pretrain(examples, run_cfg, params);
    ProbeResult probe = masked_top1_probe(dataset, params, run_cfg, ratio, cfg.seed);
    result.rows.push_back({ratio, probe.accuracy, probe.baseline_accuracy});
  }
  return result;
}

std::string sweep_chart(const SweepResult& result) {
  std::string out = "mask ratio vs masked-entity probe accuracy\n";
  for (const SweepRow& row : result.rows) {
    int bars = static_cast<int>(std::lround(row.accuracy * 40.0));
    bars = std::clamp(bars, 0, 40);
    char line[128];
    std::snprintf(line, sizeof line, "  %4.2f  |%-40s|  %.4f  (raw baseline %.4f)\n",
                  row.ratio, std::string(static_cast<size_t>(bars), '#').c_str(),
                  row.accuracy, row.baseline_accuracy);
    out += line;
  }
  return out;
}

std::string sweep_report_json(const SweepResult& result, const PretrainConfig& cfg) {
  json rows = json::array();
  for (const SweepRow& row : result.rows)
    rows.push_back({{"ratio", row.ratio},
                    {"accuracy", row.accuracy},
                    {"baseline_accuracy", row.baseline_accuracy}});
  json j{{"config", cfgjson::to_json(cfg)},
         {"rows", rows},
         {"paper_reference",
          {{"label", "paper-reported"},
           {"units", "percent"},
           {"points",
            json::array({{0.10, 21.13},
                         {0.25, 24.56},
                         {0.50, 34.97},
                         {0.75, 30.18},
                         {0.90, 19.21}})}}}};
  return j.dump(2) + "\n";
}

}  // namespace mbbr
