#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panda/graph.hpp"

namespace panda {

// JSON-lines dataset format, one graph per line:
//
//   {"num_nodes": 3, "edges": [[0,1],[1,2]], "node_feat": [[1,0],[0,1],[1,0]], "label": 1}
//
// Edges may be listed in either or both directions; self-loops are dropped.

namespace detail {

inline GraphSample parse_sample(const nlohmann::json& obj, std::size_t line) {
  if (!obj.is_object()) throw ParseError(line, "expected a JSON object");
  for (const char* key : {"num_nodes", "edges", "node_feat", "label"}) {
    if (!obj.contains(key)) throw ParseError(line, std::string("missing key '") + key + "'");
  }
  const auto& jn = obj["num_nodes"];
  if (!jn.is_number_integer() || jn.get<long long>() < 0) {
    throw ParseError(line, "num_nodes must be a non-negative integer");
  }
  const auto n = static_cast<std::size_t>(jn.get<long long>());

  const auto& jedges = obj["edges"];
  if (!jedges.is_array()) throw ParseError(line, "edges must be an array");
  std::vector<Edge> edges;
  edges.reserve(jedges.size());
  for (const auto& e : jedges) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw ParseError(line, "each edge must be a pair of integers");
    }
    const auto u = e[0].get<long long>();
    const auto v = e[1].get<long long>();
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
      throw BoundsError("line " + std::to_string(line) + ": edge [" + std::to_string(u) + "," +
                        std::to_string(v) + "] out of range for num_nodes " + std::to_string(n));
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }

  const auto& jfeat = obj["node_feat"];
  if (!jfeat.is_array()) throw ParseError(line, "node_feat must be an array of rows");
  if (jfeat.size() != n) {
    throw SchemaError("line " + std::to_string(line) + ": node_feat has " + std::to_string(jfeat.size()) +
                      " rows, expected " + std::to_string(n));
  }
  const std::size_t width = n == 0 ? 0 : jfeat[0].size();
  FeatureMatrix feat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = jfeat[r];
    if (!row.is_array()) throw ParseError(line, "node_feat rows must be arrays");
    if (row.size() != width) {
      throw SchemaError("line " + std::to_string(line) + ": ragged node_feat rows");
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (!row[c].is_number()) throw ParseError(line, "node_feat entries must be numbers");
      const double x = row[c].get<double>();
      if (!std::isfinite(x)) throw SchemaError("line " + std::to_string(line) + ": non-finite feature");
      feat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
    }
  }

  const auto& jlabel = obj["label"];
  if (!jlabel.is_number_integer() || jlabel.get<long long>() < 0) {
    throw ParseError(line, "label must be a non-negative integer");
  }
  return GraphSample{Graph::from_edges(n, edges), std::move(feat), static_cast<int>(jlabel.get<long long>())};
}

}  // namespace detail

/// Parses a JSONL dataset from a stream. Blank lines are skipped.
inline std::vector<GraphSample> read_dataset(std::istream& in) {
  std::vector<GraphSample> out;
  std::string text;
  std::size_t line = 0;
  std::optional<Eigen::Index> width;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, e.what());
    }
    auto sample = detail::parse_sample(obj, line);
    if (sample.graph.num_nodes() > 0) {
      if (!width) {
        width = sample.features.cols();
      } else if (*width != sample.features.cols()) {
        throw SchemaError("line " + std::to_string(line) + ": feature width " +
                          std::to_string(sample.features.cols()) + " differs from dataset width " +
                          std::to_string(*width));
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

inline std::vector<GraphSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return read_dataset(in);
}

inline std::string sample_to_json_line(const GraphSample& s) {
  nlohmann::ordered_json obj;
  obj["num_nodes"] = s.graph.num_nodes();
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [u, v] : s.graph.edge_list()) edges.push_back({u, v});
  obj["edges"] = std::move(edges);
  auto feat = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < s.features.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < s.features.cols(); ++c) row.push_back(s.features(r, c));
    feat.push_back(std::move(row));
  }
  obj["node_feat"] = std::move(feat);
  obj["label"] = s.label;
  return obj.dump();
}

inline void write_dataset(std::ostream& out, const std::vector<GraphSample>& samples) {
  for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<GraphSample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path.string());
  write_dataset(out, samples);
}

inline int num_classes(const std::vector<GraphSample>& samples) {
  int k = 0;
  for (const auto& s : samples) k = std::max(k, s.label + 1);
  return k;
}

inline std::size_t feature_width(const std::vector<GraphSample>& samples) {
  for (const auto& s : samples) {
    if (s.graph.num_nodes() > 0) return static_cast<std::size_t>(s.features.cols());
  }
  return 0;
}

/// Split manifest: three lines (train, val, test) of space-separated indices.
inline void write_split_manifest(std::ostream& out, const DatasetSplit& split) {
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) out << (i ? " " : "") << (*part)[i];
    out << '\n';
  }
}

inline DatasetSplit read_split_manifest(std::istream& in) {
  DatasetSplit split;
  std::string text;
  for (auto* part : {&split.train, &split.val, &split.test}) {
    if (!std::getline(in, text)) throw ParseError(0, "split manifest needs three lines");
    std::istringstream ss(text);
    std::size_t idx;
    while (ss >> idx) part->push_back(idx);
  }
  return split;
}

/// Path of the manifest written next to a dataset: `<dataset>.split-<seed>.txt`.
inline std::filesystem::path manifest_path(const std::filesystem::path& dataset, std::uint64_t seed) {
  return dataset.string() + ".split-" + std::to_string(seed) + ".txt";
}

}  // namespace panda
