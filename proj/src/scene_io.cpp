#include "gravity/scene_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace gravity::io {

using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << j.dump(2) << '\n';
}

Vec3 vec3_from(const json& a) {
  if (!a.is_array() || a.size() != 3)
    throw std::invalid_argument("scene JSON: expected a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

}  // namespace

DensityScene load_scene(const std::string& path) {
  const json j = read_json(path);
  const Vec3 origin = vec3_from(j.at("origin"));
  const Vec3 lengths = vec3_from(j.at("lengths"));
  const auto& c = j.at("cells");
  if (!c.is_array() || c.size() != 3)
    throw std::invalid_argument("scene JSON: cells must be a 3-element array");
  StructuredGrid grid(origin, lengths,
                      {c[0].get<int>(), c[1].get<int>(), c[2].get<int>()});
  std::vector<double> density = j.at("density").get<std::vector<double>>();
  if (density.size() != static_cast<std::size_t>(grid.cell_count()))
    throw std::invalid_argument("scene JSON: density length " +
                                std::to_string(density.size()) +
                                " does not match cell count " +
                                std::to_string(grid.cell_count()));
  for (double d : density)
    if (!std::isfinite(d))
      throw std::invalid_argument("scene JSON: density values must be finite");
  return DensityScene{std::move(grid), std::move(density)};
}

void save_scene(const DensityScene& scene, const std::string& path) {
  const auto& g = scene.grid;
  json j;
  j["origin"] = {g.origin().x, g.origin().y, g.origin().z};
  j["lengths"] = {g.lengths().x, g.lengths().y, g.lengths().z};
  j["cells"] = {g.cells()[0], g.cells()[1], g.cells()[2]};
  j["density"] = scene.density;
  write_json(j, path);
}

EvaluationSet load_evaluation_set(const std::string& path) {
  const json j = read_json(path);
  EvaluationSet set;
  for (const auto& p : j.at("points")) set.points.push_back(vec3_from(p));
  if (set.points.empty())
    throw std::invalid_argument("evaluation set JSON: points must be nonempty");
  for (const Vec3& p : set.points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw std::invalid_argument("evaluation set JSON: coordinates must be finite");
  return set;
}

void save_evaluation_set(const EvaluationSet& evals, const std::string& path) {
  json pts = json::array();
  for (const Vec3& p : evals.points) pts.push_back({p.x, p.y, p.z});
  json j;
  j["points"] = std::move(pts);
  write_json(j, path);
}

}  // namespace gravity::io
