#pragma once

#include <string>
#include <vector>

#include "mbbr/geometry.hpp"

namespace mbbr {

inline constexpr size_t kFeatureDim = 256;

struct Entity {
  int category_id = 0;
  Box box;
  std::vector<double> feature;  // exactly kFeatureDim, finite
};

struct RelationshipTriplet {
  size_t subject = 0;
  size_t object = 0;
  int predicate_id = 0;
};

struct Scene {
  std::string scene_id;
  double width = 0, height = 0;
  std::vector<Entity> entities;
  std::vector<RelationshipTriplet> relationships;
};

using Dataset = std::vector<Scene>;

// Throws DataError naming the offending field.
void validate_scene(const Scene& s);

// One JSON object per line. Errors carry the 1-based line number.
Dataset load_scenes(const std::string& path);
void save_scenes(const std::string& path, const Dataset& scenes);

// Pretraining input: relationships removed by type, so the pretext task cannot
// read predicate labels.
struct PretrainExample {
  std::string scene_id;
  double width = 0, height = 0;
  std::vector<Entity> entities;
};

std::vector<PretrainExample> strip_for_pretraining(const Dataset& scenes);

// Highest category_id + 1 across the dataset.
size_t count_categories(const Dataset& scenes);
// Highest predicate_id + 1 across the dataset.
size_t count_predicates(const Dataset& scenes);

}  // namespace mbbr
