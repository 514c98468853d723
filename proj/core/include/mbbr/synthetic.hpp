#pragma once

#include <cstdint>
#include <vector>

#include "mbbr/scene.hpp"

namespace mbbr {

// Geometric predicate ids. Rule-table predicates occupy [6, K).
inline constexpr int kPredAbove = 0;
inline constexpr int kPredBelow = 1;
inline constexpr int kPredLeftOf = 2;
inline constexpr int kPredRightOf = 3;
inline constexpr int kPredOverlaps = 4;
inline constexpr int kPredContains = 5;
inline constexpr size_t kNumGeometricPredicates = 6;

inline constexpr double kCenterMargin = 0.2;        // fraction of W or H
inline constexpr double kOverlapIouThreshold = 0.25;
inline constexpr size_t kContextDim = 32;

// All geometric predicates that hold for the ordered pair, ascending id.
std::vector<int> geometric_predicates(const Box& subj, const Box& obj, double w,
                                      double h);

struct SynthConfig {
  size_t num_scenes = 500;
  size_t min_entities = 4;
  size_t max_entities = 8;
  size_t num_categories = 12;   // C
  size_t num_predicates = 16;   // K, >= 7 (6 geometric + rule table)
  double prototype_scale = 0.6;  // sigma_p
  double context_strength = 1.5; // alpha
  double noise_scale = 0.1;      // sigma_n
  // Probability an entity takes the scene's theme category instead of a
  // uniform draw. 0 keeps categories iid across a scene.
  double theme_mix = 0.0;
  double canvas = 1024.0;  // square W = H
  uint64_t seed = 1;
};

void validate_config(const SynthConfig& cfg);

// Pure function of cfg (including cfg.seed): same config, same dataset.
// feature = prototype[category] + alpha * (M * c) + N(0, sigma_n), with c a
// per-scene 32-d latent and M a fixed seeded 256x32 matrix. Relationships are
// the geometric predicates plus one rule-table predicate per ordered pair.
Dataset synthesize(const SynthConfig& cfg);

// The fixed prototypes the generator would use; exposed for analytic tests.
std::vector<std::vector<double>> synthetic_prototypes(const SynthConfig& cfg);

}  // namespace mbbr
