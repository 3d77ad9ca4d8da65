// Copyright 2026 The urep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Private JSON conversions for artifact files.

#ifndef UREP_SRC_JSON_UTIL_HPP_
#define UREP_SRC_JSON_UTIL_HPP_

#include <string>

#include "json.hpp"
#include "urep/common.hpp"
#include "urep/nn.hpp"

namespace urep::detail {

using json = nlohmann::ordered_json;

inline json to_json(const BatchId& b) {
  return json{{"model", b.model},
              {"generation", b.generation},
              {"created_at", b.created_at},
              {"fingerprint", b.fingerprint}};
}

inline BatchId batch_from(const json& j) {
  BatchId b;
  b.model = j.at("model").get<std::string>();
  b.generation = j.at("generation").get<std::uint64_t>();
  if (j.contains("created_at")) b.created_at = j.at("created_at").get<double>();
  if (j.contains("fingerprint")) b.fingerprint = j.at("fingerprint").get<std::string>();
  return b;
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from(const json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[Eigen::Index(i)] = a[i].get<double>();
  return v;
}

/// Row-major nested arrays.
inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

inline Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  Matrix m(rows, cols);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw IoError("matrix row count mismatch");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data[std::size_t(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw IoError("matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[std::size_t(c)].get<double>();
  }
  return m;
}

inline json mlp_json(const nn::Mlp& m) {
  json layers = json::array();
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    layers.push_back(json{{"activation", int(m.activations()[i])},
                          {"weight", to_json(m.layers()[i].weight)},
                          {"bias", to_json(m.layers()[i].bias)}});
  }
  return json{{"dropout", m.dropout()}, {"layers", layers}};
}

inline nn::Mlp mlp_from(const json& j) {
  std::vector<nn::Dense> layers;
  std::vector<nn::Activation> acts;
  for (const auto& l : j.at("layers")) {
    layers.push_back({matrix_from(l.at("weight")), vector_from(l.at("bias"))});
    acts.push_back(static_cast<nn::Activation>(l.at("activation").get<int>()));
  }
  return nn::Mlp(std::move(layers), std::move(acts), j.at("dropout").get<double>());
}

inline json to_json(const std::vector<BatchId>& v) {
  json a = json::array();
  for (const auto& b : v) a.push_back(to_json(b));
  return a;
}

inline std::vector<BatchId> batches_from(const json& a) {
  std::vector<BatchId> v;
  for (const auto& b : a) v.push_back(batch_from(b));
  return v;
}

inline void check_format(const json& j, const char* format, int max_version) {
  if (!j.contains("format") || j.at("format").get<std::string>() != format) {
    throw IoError(std::string("not a ") + format + " artifact");
  }
  if (j.at("version").get<int>() > max_version) {
    throw IoError(std::string("unsupported ") + format + " version");
  }
}

}  // namespace urep::detail

#endif  // UREP_SRC_JSON_UTIL_HPP_
