#include "mbbr/synthetic.hpp"

#include <cmath>

#include "mbbr/errors.hpp"
#include "mbbr/rng.hpp"

namespace mbbr {

std::vector<int> geometric_predicates(const Box& subj, const Box& obj, double w,
                                      double h) {
  std::vector<int> out;
  if (subj.cy() < obj.cy() - kCenterMargin * h) out.push_back(kPredAbove);
  if (subj.cy() > obj.cy() + kCenterMargin * h) out.push_back(kPredBelow);
  if (subj.cx() < obj.cx() - kCenterMargin * w) out.push_back(kPredLeftOf);
  if (subj.cx() > obj.cx() + kCenterMargin * w) out.push_back(kPredRightOf);
  if (iou(subj, obj) > kOverlapIouThreshold) out.push_back(kPredOverlaps);
  if (contains_strictly(subj, obj)) out.push_back(kPredContains);
  return out;
}

void validate_config(const SynthConfig& cfg) {
  if (cfg.min_entities == 0 || cfg.max_entities < cfg.min_entities)
    throw ConfigError("synthetic: bad entity range [" +
                      std::to_string(cfg.min_entities) + ", " +
                      std::to_string(cfg.max_entities) + "]");
  if (cfg.num_categories == 0) throw ConfigError("synthetic: need >= 1 category");
  if (cfg.num_predicates < kNumGeometricPredicates + 1)
    throw ConfigError("synthetic: need >= " +
                      std::to_string(kNumGeometricPredicates + 1) + " predicates");
  size_t rule_ids = cfg.num_predicates - kNumGeometricPredicates;
  if (rule_ids > cfg.num_categories * cfg.num_categories)
    throw ConfigError("synthetic: more rule predicates than category pairs");
  if (cfg.prototype_scale < 0 || cfg.context_strength < 0 || cfg.noise_scale < 0)
    throw ConfigError("synthetic: negative scale");
  if (cfg.theme_mix < 0 || cfg.theme_mix > 1)
    throw ConfigError("synthetic: theme_mix must be in [0,1]");
  if (!(cfg.canvas > 0)) throw ConfigError("synthetic: canvas must be positive");
}

namespace {

std::vector<std::vector<double>> draw_prototypes(const SynthConfig& cfg,
                                                 SplitRng& root) {
  SplitRng rng = root.fork("prototypes");
  std::vector<std::vector<double>> protos(cfg.num_categories);
  for (auto& p : protos) {
    p.resize(kFeatureDim);
    for (double& v : p) v = rng.normal(0.0, cfg.prototype_scale);
  }
  return protos;
}

// entries N(0, 1/sqrt(32)) so each component of M*c has unit variance
std::vector<double> draw_context_matrix(SplitRng& root) {
  SplitRng rng = root.fork("context-matrix");
  std::vector<double> m(kFeatureDim * kContextDim);
  double sd = 1.0 / std::sqrt(static_cast<double>(kContextDim));
  for (double& v : m) v = rng.normal(0.0, sd);
  return m;
}

// rule_table[a * C + b] in [6, K); every rule id appears at least once
std::vector<int> draw_rule_table(const SynthConfig& cfg, SplitRng& root) {
  SplitRng rng = root.fork("rules");
  size_t cells = cfg.num_categories * cfg.num_categories;
  size_t rule_ids = cfg.num_predicates - kNumGeometricPredicates;
  std::vector<int> table(cells);
  auto perm = rng.permutation(cells);
  for (size_t i = 0; i < cells; ++i) {
    if (i < rule_ids)
      table[perm[i]] = static_cast<int>(kNumGeometricPredicates + i);
    else
      table[perm[i]] = static_cast<int>(rng.uniform_int(
          static_cast<int64_t>(kNumGeometricPredicates),
          static_cast<int64_t>(cfg.num_predicates) - 1));
  }
  return table;
}

}  // namespace

std::vector<std::vector<double>> synthetic_prototypes(const SynthConfig& cfg) {
  validate_config(cfg);
  SplitRng root(cfg.seed);
  return draw_prototypes(cfg, root);
}

Dataset synthesize(const SynthConfig& cfg) {
  validate_config(cfg);
  SplitRng root(cfg.seed);
  auto protos = draw_prototypes(cfg, root);
  auto ctx_matrix = draw_context_matrix(root);
  auto rule_table = draw_rule_table(cfg, root);
  SplitRng scenes_root = root.fork("scenes");

  double w = cfg.canvas, h = cfg.canvas;
  Dataset out;
  out.reserve(cfg.num_scenes);
  for (size_t si = 0; si < cfg.num_scenes; ++si) {
    SplitRng rng = scenes_root.fork("scene-" + std::to_string(si));
    Scene s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%06zu", si);
    s.scene_id = buf;
    s.width = w;
    s.height = h;

    size_t n = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(cfg.min_entities),
                        static_cast<int64_t>(cfg.max_entities)));
    int theme =
        static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(cfg.num_categories) - 1));

    s.entities.resize(n);
    for (Entity& e : s.entities) {
      e.category_id =
          rng.flip(cfg.theme_mix)
              ? theme
              : static_cast<int>(
                    rng.uniform_int(0, static_cast<int64_t>(cfg.num_categories) - 1));
    }
    for (Entity& e : s.entities) {
      double bw = rng.uniform(0.08, 0.45) * w;
      double bh = rng.uniform(0.08, 0.45) * h;
      double x = rng.uniform(0.0, w - bw);
      double y = rng.uniform(0.0, h - bh);
      e.box = Box{x, y, x + bw, y + bh};
    }

    std::vector<double> c(kContextDim);
    for (double& v : c) v = rng.normal();
    std::vector<double> ctx(kFeatureDim, 0.0);
    for (size_t j = 0; j < kFeatureDim; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < kContextDim; ++k)
        acc += ctx_matrix[j * kContextDim + k] * c[k];
      ctx[j] = cfg.context_strength * acc;
    }

    for (Entity& e : s.entities) {
      e.feature.resize(kFeatureDim);
      const auto& p = protos[static_cast<size_t>(e.category_id)];
      for (size_t j = 0; j < kFeatureDim; ++j)
        e.feature[j] = p[j] + ctx[j] + rng.normal(0.0, cfg.noise_scale);
    }

    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        for (int p : geometric_predicates(s.entities[i].box, s.entities[j].box, w, h))
          s.relationships.push_back({i, j, p});
        int rule = rule_table[static_cast<size_t>(s.entities[i].category_id) *
                                  cfg.num_categories +
                              static_cast<size_t>(s.entities[j].category_id)];
        s.relationships.push_back({i, j, rule});
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mbbr
