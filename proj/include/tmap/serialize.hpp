#pragma once

#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "tmap/surrogate.hpp"
#include "tmap/transport.hpp"

namespace tmap {

//! Self-describing map file (JSON). Doubles round-trip bit-exactly through
//! the shortest-representation serializer, so write -> read -> identical
//! evaluations holds.
inline nlohmann::json map_to_json(const TriangularMap& map) {
  nlohmann::json j;
  j["format"] = "tmap-map";
  j["version"] = 1;
  j["dim"] = map.dim();
  j["direction"] =
      map.direction() == MapDirection::pullback ? "pullback" : "pushforward";
  j["shift"] = std::vector<double>(map.shift().data(),
                                   map.shift().data() + map.dim());
  j["scale"] = std::vector<double>(map.scale().data(),
                                   map.scale().data() + map.dim());
  const auto& fam = map.components().front().family();
  j["family"] = {{"kind", "probabilists-hermite"},
                 {"max_order", fam.max_order},
                 {"tail_bound", fam.tail_bound}};
  j["quad_order"] = map.components().front().quad_order();
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : map.components()) {
    nlohmann::json jc;
    nlohmann::json idx = nlohmann::json::array();
    for (const auto& a : c.index_set().members()) idx.push_back(a);
    jc["index_set"] = idx;
    jc["coeffs"] = std::vector<double>(c.coeffs().data(),
                                       c.coeffs().data() + c.coeffs().size());
    comps.push_back(jc);
  }
  j["components"] = comps;
  return j;
}

inline TriangularMap map_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tmap-map")
    throw std::runtime_error("not a tmap map file");
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported map file version");
  const int dim = j.at("dim").get<int>();
  const auto dir = j.at("direction").get<std::string>() == "pullback"
                       ? MapDirection::pullback
                       : MapDirection::pushforward;
  BasisFamily fam(j.at("family").at("max_order").get<int>(),
                  j.at("family").at("tail_bound").get<double>());
  const int quad = j.at("quad_order").get<int>();
  std::vector<MapComponent> comps;
  int k = 1;
  for (const auto& jc : j.at("components")) {
    std::vector<MultiIndex> idx;
    for (const auto& a : jc.at("index_set")) idx.push_back(a.get<MultiIndex>());
    MultiIndexSet aset(k, idx);
    auto cv = jc.at("coeffs").get<std::vector<double>>();
    VectorXd w = Eigen::Map<VectorXd>(cv.data(), cv.size());
    comps.emplace_back(std::move(aset), std::move(w), fam, quad);
    ++k;
  }
  auto sv = j.at("shift").get<std::vector<double>>();
  auto cv = j.at("scale").get<std::vector<double>>();
  return TriangularMap(std::move(comps),
                       Eigen::Map<VectorXd>(sv.data(), sv.size()),
                       Eigen::Map<VectorXd>(cv.data(), cv.size()), dir);
}

inline void save_map(const TriangularMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << map_to_json(map).dump(2) << "\n";
}

inline TriangularMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return map_from_json(j);
}

inline void save_surrogate(const SurrogateLikelihood& sur,
                           const std::string& path) {
  nlohmann::json j = map_to_json(sur.joint_map());
  j["format"] = "tmap-surrogate";
  j["n_theta"] = sur.n_theta();
  j["n_y"] = sur.n_y();
  j["step"] = sur.step();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

inline SurrogateLikelihood load_surrogate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "tmap-surrogate")
    throw std::runtime_error("not a tmap surrogate file");
  j["format"] = "tmap-map";
  return SurrogateLikelihood(map_from_json(j), j.at("n_theta").get<int>(),
                             j.at("n_y").get<int>(), j.at("step").get<int>());
}

} // namespace tmap
