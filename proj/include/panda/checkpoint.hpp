#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "panda/model.hpp"

namespace panda {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  return {{"backbone", std::string(to_string(s.backbone))},
          {"layers", s.layers},
          {"p", s.p},
          {"p_high", s.p_high},
          {"k", s.k},
          {"centrality", std::string(to_string(s.centrality))},
          {"dropout", s.dropout},
          {"num_classes", s.num_classes},
          {"input_width", s.input_width}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.backbone = parse_backbone(j.at("backbone").get<std::string>());
    s.layers = j.at("layers").get<std::size_t>();
    s.p = j.at("p").get<std::size_t>();
    s.p_high = j.at("p_high").get<std::size_t>();
    s.k = j.at("k").get<std::size_t>();
    s.centrality = parse_centrality(j.at("centrality").get<std::string>());
    s.dropout = j.at("dropout").get<double>();
    s.num_classes = j.at("num_classes").get<int>();
    s.input_width = j.at("input_width").get<std::size_t>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model spec: ") + e.what());
  } catch (const UsageError& e) {
    throw SchemaError(std::string("model spec: ") + e.what());
  }
}

/// {"version", "spec", "params": [{"name", "rows", "cols", "data" (row-major)}]}
inline nlohmann::json checkpoint_to_json(const Model& m) {
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const Matrix& v = m.params.value(i);
    std::vector<double> data(v.data(), v.data() + v.size());
    params.push_back({{"name", m.params.name(i)}, {"rows", v.rows()}, {"cols", v.cols()}, {"data", data}});
  }
  return {{"version", kCheckpointVersion}, {"spec", spec_to_json(m.spec)}, {"params", params}};
}

/// Parameter names and shapes must match those a fresh model of the stored
/// spec would have.
inline Model checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) throw SchemaError("unsupported checkpoint version");
    Model m = Model::init(spec_from_json(j.at("spec")), 0);
    const auto& params = j.at("params");
    if (!params.is_array() || params.size() != m.params.size()) throw SchemaError("checkpoint parameter count mismatch");
    for (const auto& p : params) {
      const auto name = p.at("name").get<std::string>();
      if (!m.params.contains(name)) throw SchemaError("unexpected parameter '" + name + "'");
      Matrix& dst = m.params.at(name);
      const auto data = p.at("data").get<std::vector<double>>();
      if (p.at("rows").get<Eigen::Index>() != dst.rows() || p.at("cols").get<Eigen::Index>() != dst.cols() ||
          static_cast<Eigen::Index>(data.size()) != dst.size()) {
        throw SchemaError("shape mismatch for parameter '" + name + "'");
      }
      std::copy(data.begin(), data.end(), dst.data());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << checkpoint_to_json(m).dump() << '\n';
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace panda
