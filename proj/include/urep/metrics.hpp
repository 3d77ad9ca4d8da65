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

// Ranking and classification metrics, exact nearest neighbours, and the
// non-negative matrix factorization baseline.

#ifndef UREP_METRICS_HPP_
#define UREP_METRICS_HPP_

#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include <Eigen/SparseCore>

#include "urep/common.hpp"

namespace urep::metrics {

/// Mann-Whitney form: probability a random positive outscores a random
/// negative, ties counted half. Throws ConfigError unless both classes occur.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of examples where (score >= threshold) equals the label.
double accuracy(std::span<const double> scores, std::span<const int> labels,
                double threshold = 0.5);

/// Binary-relevance nDCG over the first k retrieved ids; 0 when `relevant` is empty.
double ndcg_at_k(std::span<const std::uint32_t> retrieved,
                 const std::unordered_set<std::uint32_t>& relevant, std::size_t k);

struct Neighbors {
  std::vector<std::uint32_t> ids;
  bool truncated = false;  // fewer than k candidates existed
};

/// Exact cosine nearest neighbours over one batch of vectors.
class NeighborIndex {
 public:
  NeighborIndex(std::vector<std::uint32_t> ids, const Matrix& vectors, BatchId batch);

  /// k nearest to `id`'s own vector, excluding `id`; ties by ascending id.
  Neighbors query(std::uint32_t id, std::size_t k) const;
  /// k nearest to an arbitrary vector from `batch`, excluding `exclude`.
  Neighbors query(const Vector& v, const BatchId& batch, std::size_t k,
                  std::optional<std::uint32_t> exclude = std::nullopt) const;

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::uint32_t>& ids() const { return ids_; }
  const BatchId& batch() const { return batch_; }
  bool contains(std::uint32_t id) const;

 private:
  std::vector<std::uint32_t> ids_;
  Matrix unit_;  // rows scaled to unit length (zero rows stay zero)
  BatchId batch_;
  std::vector<std::size_t> row_of_;  // id -> row, npos when absent
};

struct NmfResult {
  Matrix w;  // rows x rank
  Matrix h;  // rank x cols
  std::vector<double> objective;  // squared Frobenius error after each update
};

/// Lee-Seung multiplicative updates for min ||V - WH||_F^2, W,H >= 0.
NmfResult train_nmf(const Eigen::SparseMatrix<double>& v, std::size_t rank,
                    std::size_t iterations, std::uint64_t seed);
NmfResult train_nmf(const Matrix& v, std::size_t rank, std::size_t iterations,
                    std::uint64_t seed);

}  // namespace urep::metrics

#endif  // UREP_METRICS_HPP_
