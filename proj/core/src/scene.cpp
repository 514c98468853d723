#include "mbbr/scene.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mbbr/errors.hpp"

namespace mbbr {

using nlohmann::json;

void validate_scene(const Scene& s) {
  if (s.scene_id.empty()) throw DataError("scene with empty scene_id");
  if (!(s.width > 0) || !(s.height > 0))
    throw DataError("scene " + s.scene_id + ": non-positive dimensions");
  for (size_t i = 0; i < s.entities.size(); ++i) {
    const Entity& e = s.entities[i];
    if (e.category_id < 0)
      throw DataError("scene " + s.scene_id + ": entity " + std::to_string(i) +
                      " has negative category_id");
    try {
      validate_box(e.box, s.width, s.height);
    } catch (const DataError& err) {
      throw DataError("scene " + s.scene_id + ": entity " + std::to_string(i) +
                      ": " + err.what());
    }
    if (e.feature.size() != kFeatureDim)
      throw DataError("scene " + s.scene_id + ": entity " + std::to_string(i) +
                      " feature dimension " + std::to_string(e.feature.size()) +
                      ", expected " + std::to_string(kFeatureDim));
    for (double v : e.feature)
      if (!std::isfinite(v))
        throw DataError("scene " + s.scene_id + ": entity " + std::to_string(i) +
                        " has a non-finite feature value");
  }
  for (size_t i = 0; i < s.relationships.size(); ++i) {
    const RelationshipTriplet& r = s.relationships[i];
    if (r.subject >= s.entities.size() || r.object >= s.entities.size())
      throw DataError("scene " + s.scene_id + ": relationship " + std::to_string(i) +
                      " references entity index out of range (subject " +
                      std::to_string(r.subject) + ", object " +
                      std::to_string(r.object) + ", " +
                      std::to_string(s.entities.size()) + " entities)");
    if (r.subject == r.object)
      throw DataError("scene " + s.scene_id + ": relationship " + std::to_string(i) +
                      " has subject == object");
    if (r.predicate_id < 0)
      throw DataError("scene " + s.scene_id + ": relationship " + std::to_string(i) +
                      " has negative predicate_id");
  }
}

namespace {

Scene scene_from_json(const json& j) {
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.width = j.at("width").get<double>();
  s.height = j.at("height").get<double>();
  for (const auto& je : j.at("entities")) {
    Entity e;
    e.category_id = je.at("category_id").get<int>();
    const auto& box = je.at("box");
    if (!box.is_array() || box.size() != 4)
      throw DataError("box must be a 4-element array [x_lt,y_lt,x_rb,y_rb]");
    e.box = Box{box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                box[3].get<double>()};
    e.feature = je.at("feature").get<std::vector<double>>();
    s.entities.push_back(std::move(e));
  }
  for (const auto& jr : j.at("relationships")) {
    RelationshipTriplet r;
    auto subj = jr.at("subject").get<int64_t>();
    auto obj = jr.at("object").get<int64_t>();
    if (subj < 0 || obj < 0) throw DataError("negative entity index in relationship");
    r.subject = static_cast<size_t>(subj);
    r.object = static_cast<size_t>(obj);
    r.predicate_id = jr.at("predicate_id").get<int>();
    s.relationships.push_back(r);
  }
  validate_scene(s);
  return s;
}

json scene_to_json(const Scene& s) {
  json j;
  j["scene_id"] = s.scene_id;
  j["width"] = s.width;
  j["height"] = s.height;
  j["entities"] = json::array();
  for (const Entity& e : s.entities) {
    json je;
    je["category_id"] = e.category_id;
    je["box"] = {e.box.x_lt, e.box.y_lt, e.box.x_rb, e.box.y_rb};
    je["feature"] = e.feature;
    j["entities"].push_back(std::move(je));
  }
  j["relationships"] = json::array();
  for (const RelationshipTriplet& r : s.relationships) {
    json jr;
    jr["subject"] = r.subject;
    jr["object"] = r.object;
    jr["predicate_id"] = r.predicate_id;
    j["relationships"].push_back(std::move(jr));
  }
  return j;
}

}  // namespace

Dataset load_scenes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open scene file " + path);
  Dataset out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      out.push_back(scene_from_json(j));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_scenes(const std::string& path, const Dataset& scenes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for write");
  for (const Scene& s : scenes) {
    validate_scene(s);
    os << scene_to_json(s).dump() << "\n";
  }
  if (!os) throw DataError("write failed for " + path);
}

std::vector<PretrainExample> strip_for_pretraining(const Dataset& scenes) {
  std::vector<PretrainExample> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes)
    out.push_back(PretrainExample{s.scene_id, s.width, s.height, s.entities});
  return out;
}

size_t count_categories(const Dataset& scenes) {
  int max_id = -1;
  for (const Scene& s : scenes)
    for (const Entity& e : s.entities) max_id = std::max(max_id, e.category_id);
  return static_cast<size_t>(max_id + 1);
}

size_t count_predicates(const Dataset& scenes) {
  int max_id = -1;
  for (const Scene& s : scenes)
    for (const RelationshipTriplet& r : s.relationships)
      max_id = std::max(max_id, r.predicate_id);
  return static_cast<size_t>(max_id + 1);
}

}  // namespace mbbr
