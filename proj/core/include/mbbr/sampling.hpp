#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mbbr/scene.hpp"

namespace mbbr {

struct KShotSample {
  size_t scene_index = 0;
  size_t triplet_index = 0;
};

// Exactly k triplets per predicate in [0, num_predicates), uniform without
// replacement within each predicate's pool, deterministic in seed. Shortage in
// any predicate class is an error, never a silent truncation.
std::vector<KShotSample> sample_k_shot(const Dataset& scenes, size_t k,
                                       size_t num_predicates, uint64_t seed);

// Manual curation path: explicit (scene_id, triplet index) pairs.
std::vector<KShotSample> resolve_curated(
    const Dataset& scenes,
    const std::vector<std::pair<std::string, size_t>>& picks);

}  // namespace mbbr
