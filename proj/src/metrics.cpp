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

#include "urep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

namespace urep::metrics {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum of positives, with tied groups sharing their mean
  // rank; kept doubled so every term is an integer.
  double rank_sum2 = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      pos_in_group += labels[order[j]] == 1;
      ++j;
    }
    // ranks i+1..j, mean (i+1+j)/2
    rank_sum2 += double(pos_in_group) * double(i + 1 + j);
    n_pos += pos_in_group;
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("AUC needs both classes");
  const double u2 = rank_sum2 - double(n_pos) * double(n_pos + 1);
  return (u2 / 2.0) / (double(n_pos) * double(n_neg));
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (scores.empty()) throw ConfigError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += int(scores[i] >= threshold) == labels[i];
  }
  return double(correct) / double(scores.size());
}

double ndcg_at_k(std::span<const std::uint32_t> retrieved,
                 const std::unordered_set<std::uint32_t>& relevant, std::size_t k) {
  if (k < 1) throw ConfigError("nDCG needs k >= 1");
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, retrieved.size()); ++i) {
    if (relevant.count(retrieved[i])) dcg += 1.0 / std::log2(double(i) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) ideal += 1.0 / std::log2(double(i) + 2.0);
  return dcg / ideal;
}

// Neighbours ----------------------------------------------------------------------

namespace {
constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
}

NeighborIndex::NeighborIndex(std::vector<std::uint32_t> ids, const Matrix& vectors, BatchId batch)
    : ids_(std::move(ids)), unit_(vectors), batch_(std::move(batch)) {
  if (Eigen::Index(ids_.size()) != vectors.rows()) throw ShapeError("id count != vector rows");
  for (Eigen::Index r = 0; r < unit_.rows(); ++r) {
    const double n = unit_.row(r).norm();
    if (n > 0) unit_.row(r) /= n;
  }
  std::uint32_t max_id = 0;
  for (auto id : ids_) max_id = std::max(max_id, id);
  row_of_.assign(ids_.empty() ? 0 : std::size_t(max_id) + 1, kAbsent);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (row_of_[ids_[i]] != kAbsent) throw ConfigError("duplicate id in neighbour index");
    row_of_[ids_[i]] = i;
  }
}

bool NeighborIndex::contains(std::uint32_t id) const {
  return id < row_of_.size() && row_of_[id] != kAbsent;
}

Neighbors NeighborIndex::query(std::uint32_t id, std::size_t k) const {
  if (!contains(id)) throw NotFoundError("id " + std::to_string(id) + " not in index");
  return query(Vector(unit_.row(Eigen::Index(row_of_[id])).transpose()), batch_, k, id);
}

Neighbors NeighborIndex::query(const Vector& v, const BatchId& batch, std::size_t k,
                               std::optional<std::uint32_t> exclude) const {
  assert_same_batch(batch_, batch);
  if (v.size() != unit_.cols()) throw ShapeError("query width != index width");
  const double n = v.norm();
  const Vector sims = n > 0 ? Vector(unit_ * (v / n)) : Vector(Vector::Zero(unit_.rows()));
  std::vector<std::size_t> cand;
  cand.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!exclude || ids_[i] != *exclude) cand.push_back(i);
  }
  Neighbors out;
  if (k > cand.size()) {
    out.truncated = true;
    k = cand.size();
  }
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = sims[Eigen::Index(a)], sb = sims[Eigen::Index(b)];
    if (sa != sb) return sa > sb;
    return ids_[a] < ids_[b];
  };
  std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(k), cand.end(), better);
  for (std::size_t i = 0; i < k; ++i) out.ids.push_back(ids_[cand[i]]);
  return out;
}

// NMF ---------------------------------------------------------------------------

namespace {

constexpr double kTiny = 1e-12;

template <typename M>
NmfResult nmf_impl(const M& v, double v_sq, std::size_t rank, std::size_t iterations,
                   std::uint64_t seed) {
  if (rank < 1) throw ConfigError("NMF rank must be >= 1");
  if (v_sq <= 0.0) throw TrainingError("NMF input is all zero");
  std::mt19937_64 rng(seed);
  const double mean = std::sqrt(v_sq / double(v.rows() * v.cols()) / double(rank));
  std::uniform_real_distribution<double> u(0.5 * mean, 1.5 * mean);
  NmfResult r;
  r.w = Matrix(v.rows(), Eigen::Index(rank)).unaryExpr([&](double) { return u(rng); });
  r.h = Matrix(Eigen::Index(rank), v.cols()).unaryExpr([&](double) { return u(rng); });
  auto objective = [&]() {
    const Matrix vht = v * r.h.transpose();  // rows x rank
    const double cross = (r.w.array() * vht.array()).sum();
    const double quad = ((r.w.transpose() * r.w).array() * (r.h * r.h.transpose()).array()).sum();
    return std::max(0.0, v_sq - 2.0 * cross + quad);
  };
  for (std::size_t it = 0; it < iterations; ++it) {
    const Matrix wtv = (v.transpose() * r.w).transpose();  // rank x cols
    const Matrix wtwh = (r.w.transpose() * r.w) * r.h;
    r.h.array() *= wtv.array() / (wtwh.array() + kTiny);
    const Matrix vht = v * r.h.transpose();
    const Matrix whht = r.w * (r.h * r.h.transpose());
    r.w.array() *= vht.array() / (whht.array() + kTiny);
    r.objective.push_back(objective());
  }
  return r;
}

}  // namespace

NmfResult train_nmf(const Eigen::SparseMatrix<double>& v, std::size_t rank,
                    std::size_t iterations, std::uint64_t seed) {
  double v_sq = 0.0;
  for (int k = 0; k < v.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(v, k); it; ++it) {
      if (it.value() < 0) throw ConfigError("NMF input must be nonnegative");
      v_sq += it.value() * it.value();
    }
  }
  return nmf_impl(v, v_sq, rank, iterations, seed);
}

NmfResult train_nmf(const Matrix& v, std::size_t rank, std::size_t iterations,
                    std::uint64_t seed) {
  if ((v.array() < 0).any()) throw ConfigError("NMF input must be nonnegative");
  return nmf_impl(v, v.squaredNorm(), rank, iterations, seed);
}

}  // namespace urep::metrics
