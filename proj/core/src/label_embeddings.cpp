#include "mbbr/label_embeddings.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mbbr/errors.hpp"
#include "mbbr/rng.hpp"

namespace mbbr {

using nlohmann::json;

const std::vector<double>& LabelEmbeddingTable::at(int category_id) const {
  if (category_id < 0 || static_cast<size_t>(category_id) >= vectors.size())
    throw DataError("label embeddings: no vector for category " +
                    std::to_string(category_id));
  return vectors[static_cast<size_t>(category_id)];
}

LabelEmbeddingTable make_label_embeddings(size_t num_categories, uint64_t seed,
                                          size_t dim) {
  if (dim == 0) throw ConfigError("label embeddings: dim must be positive");
  LabelEmbeddingTable table;
  table.dim = dim;
  table.vectors.resize(num_categories);
  SplitRng root = SplitRng(seed).fork("labels");
  for (size_t c = 0; c < num_categories; ++c) {
    SplitRng rng = root.fork("label-" + std::to_string(c));
    auto& v = table.vectors[c];
    v.resize(dim);
    double norm_sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm_sq += x * x;
    }
    double norm = std::sqrt(norm_sq);
    for (double& x : v) x /= norm;
  }
  return table;
}

LabelEmbeddingTable load_label_embeddings(const std::string& path,
                                          size_t num_categories) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open label embedding file " + path);
  LabelEmbeddingTable table;
  table.vectors.resize(num_categories);
  std::vector<bool> seen(num_categories, false);
  std::string line;
  size_t lineno = 0;
  size_t dim = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      int id = j.at("category_id").get<int>();
      auto vec = j.at("vector").get<std::vector<double>>();
      if (id < 0 || static_cast<size_t>(id) >= num_categories)
        throw DataError("category_id " + std::to_string(id) + " outside [0, " +
                        std::to_string(num_categories) + ")");
      if (seen[static_cast<size_t>(id)])
        throw DataError("duplicate category_id " + std::to_string(id));
      if (vec.empty()) throw DataError("empty vector");
      if (dim == 0) dim = vec.size();
      if (vec.size() != dim)
        throw DataError("vector dimension " + std::to_string(vec.size()) +
                        " differs from " + std::to_string(dim));
      for (double v : vec)
        if (!std::isfinite(v)) throw DataError("non-finite vector component");
      seen[static_cast<size_t>(id)] = true;
      table.vectors[static_cast<size_t>(id)] = std::move(vec);
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (size_t c = 0; c < num_categories; ++c)
    if (!seen[c])
      throw DataError(path + ": missing embedding for category " + std::to_string(c));
  table.dim = dim;
  return table;
}

void save_label_embeddings(const std::string& path,
                           const LabelEmbeddingTable& table) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for write");
  for (size_t c = 0; c < table.vectors.size(); ++c) {
    json j;
    j["category_id"] = c;
    j["vector"] = table.vectors[c];
    os << j.dump() << "\n";
  }
  if (!os) throw DataError("write failed for " + path);
}

}  // namespace mbbr
