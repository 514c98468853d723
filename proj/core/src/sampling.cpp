#include "mbbr/sampling.hpp"

#include "mbbr/errors.hpp"
#include "mbbr/rng.hpp"

namespace mbbr {

std::vector<KShotSample> sample_k_shot(const Dataset& scenes, size_t k,
                                       size_t num_predicates, uint64_t seed) {
  if (num_predicates == 0) throw ConfigError("sample_k_shot: num_predicates == 0");
  std::vector<std::vector<KShotSample>> pools(num_predicates);
  for (size_t si = 0; si < scenes.size(); ++si) {
    const auto& rels = scenes[si].relationships;
    for (size_t ti = 0; ti < rels.size(); ++ti) {
      int p = rels[ti].predicate_id;
      if (p < 0 || static_cast<size_t>(p) >= num_predicates)
        throw DataError("scene " + scenes[si].scene_id + ": predicate_id " +
                        std::to_string(p) + " outside [0, " +
                        std::to_string(num_predicates) + ")");
      pools[static_cast<size_t>(p)].push_back({si, ti});
    }
  }
  std::vector<KShotSample> out;
  if (k == 0) return out;

  SplitRng rng = SplitRng(seed).fork("sampling");
  for (size_t p = 0; p < num_predicates; ++p) {
    auto& pool = pools[p];
    if (pool.size() < k)
      throw DataError("sample_k_shot: predicate " + std::to_string(p) + " has only " +
                      std::to_string(pool.size()) + " triplets, need " +
                      std::to_string(k));
    // partial Fisher-Yates: take the first k of a seeded shuffle
    for (size_t t = 0; t < k; ++t) {
      size_t j = static_cast<size_t>(rng.uniform_int(
          static_cast<int64_t>(t), static_cast<int64_t>(pool.size()) - 1));
      std::swap(pool[t], pool[j]);
      out.push_back(pool[t]);
    }
  }
  return out;
}

std::vector<KShotSample> resolve_curated(
    const Dataset& scenes,
    const std::vector<std::pair<std::string, size_t>>& picks) {
  std::vector<KShotSample> out;
  out.reserve(picks.size());
  for (const auto& [scene_id, triplet_index] : picks) {
    bool found = false;
    for (size_t si = 0; si < scenes.size(); ++si) {
      if (scenes[si].scene_id != scene_id) continue;
      if (triplet_index >= scenes[si].relationships.size())
        throw DataError("curated sample: scene " + scene_id + " has " +
                        std::to_string(scenes[si].relationships.size()) +
                        " triplets, index " + std::to_string(triplet_index) +
                        " out of range");
      out.push_back({si, triplet_index});
      found = true;
      break;
    }
    if (!found) throw DataError("curated sample: no scene with id " + scene_id);
  }
  return out;
}

}  // namespace mbbr
