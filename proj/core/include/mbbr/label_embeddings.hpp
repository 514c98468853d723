#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbbr/scene.hpp"

namespace mbbr {

inline constexpr size_t kDefaultLabelDim = 300;

struct LabelEmbeddingTable {
  size_t dim = kDefaultLabelDim;
  std::vector<std::vector<double>> vectors;  // indexed by category_id

  size_t num_categories() const { return vectors.size(); }
  const std::vector<double>& at(int category_id) const;
};

// Seeded fallback: one unit-L2-normalized random vector per category.
LabelEmbeddingTable make_label_embeddings(size_t num_categories,
                                          uint64_t seed,
                                          size_t dim = kDefaultLabelDim);

// JSONL of {"category_id": int, "vector": [...]}. Must cover every id in
// [0, num_categories) exactly once; all vectors share one dimension.
LabelEmbeddingTable load_label_embeddings(const std::string& path,
                                          size_t num_categories);
void save_label_embeddings(const std::string& path,
                           const LabelEmbeddingTable& table);

}  // namespace mbbr
