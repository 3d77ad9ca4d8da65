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

// Models that consume frozen user representations: a (user, target) pair
// classifier and a two-tower retrieval model with exact top-k lookup.

#ifndef UREP_DOWNSTREAM_HPP_
#define UREP_DOWNSTREAM_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "urep/common.hpp"
#include "urep/nn.hpp"
#include "urep/synth.hpp"
#include "urep/userrep.hpp"

namespace urep::downstream {

/// Rows of representations that all come from one batch.
struct RepMatrix {
  std::vector<UserId> ids;
  Matrix z;
  BatchId batch;
};

/// Stacks representations, asserting they share one model batch.
RepMatrix stack_representations(std::span<const userrep::UserRepresentation> reps);

struct ClassifierConfig {
  std::size_t hidden = 32;
  std::size_t epochs = 15;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
};

/// Labelled (user vector, target vector) pairs. `user_batches` and
/// `target_batches` name the spaces the two halves were taken from.
struct PairData {
  Matrix users;
  Matrix targets;
  std::vector<int> labels;
  std::vector<BatchId> user_batches;
  std::vector<BatchId> target_batches;
};

class PairClassifier {
 public:
  PairClassifier() = default;
  PairClassifier(Vector mean, Vector scale, nn::Mlp net, std::size_t user_dim,
                 std::vector<BatchId> user_pins, std::vector<BatchId> target_pins);

  /// Probability in (0,1); pins are checked against the given batches.
  double predict(const Vector& user, const Vector& target, const std::vector<BatchId>& user_batches,
                 const std::vector<BatchId>& target_batches) const;
  Vector predict(const Matrix& users, const Matrix& targets,
                 const std::vector<BatchId>& user_batches,
                 const std::vector<BatchId>& target_batches) const;

  std::size_t user_dim() const { return user_dim_; }
  std::size_t input_dim() const { return net_.input_dim(); }
  const nn::Mlp& net() const { return net_; }
  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }
  const std::vector<BatchId>& user_pins() const { return user_pins_; }
  const std::vector<BatchId>& target_pins() const { return target_pins_; }

 private:
  Vector mean_;
  Vector scale_;
  nn::Mlp net_;
  std::size_t user_dim_ = 0;
  std::vector<BatchId> user_pins_;
  std::vector<BatchId> target_pins_;
};

/// Binary cross-entropy with Adam over shuffled mini-batches. Inputs are
/// standardized with training-set column statistics.
PairClassifier train_pair_classifier(const PairData& data, const ClassifierConfig& config);

double sigmoid(double x);

// Two-tower retrieval ---------------------------------------------------------------

struct TwoTowerConfig {
  std::size_t hidden = 64;
  std::size_t output_dim = 32;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct Interaction {
  std::size_t user_row = 0;  // row in the user matrix
  std::size_t item_row = 0;  // row in the item matrix
  int label = 0;
};

class TwoTower {
 public:
  TwoTower() = default;
  TwoTower(nn::Mlp user_tower, nn::Mlp item_tower, std::vector<BatchId> user_pins,
           std::vector<BatchId> item_pins);

  Matrix user_vectors(const Matrix& users, const std::vector<BatchId>& batches) const;
  Matrix item_vectors(const Matrix& items, const std::vector<BatchId>& batches) const;
  double score(const Vector& user, const Vector& item, const std::vector<BatchId>& user_batches,
               const std::vector<BatchId>& item_batches) const;

  const nn::Mlp& user_tower() const { return user_tower_; }
  const nn::Mlp& item_tower() const { return item_tower_; }
  const std::vector<BatchId>& user_pins() const { return user_pins_; }
  const std::vector<BatchId>& item_pins() const { return item_pins_; }

 private:
  nn::Mlp user_tower_;
  nn::Mlp item_tower_;
  std::vector<BatchId> user_pins_;
  std::vector<BatchId> item_pins_;
};

/// Logistic loss on dot-product scores.
TwoTower train_two_tower(const Matrix& users, const std::vector<BatchId>& user_batches,
                         const Matrix& items, const std::vector<BatchId>& item_batches,
                         std::span<const Interaction> interactions, const TwoTowerConfig& config);

/// Cached item-tower outputs for one set of item batches.
struct ItemIndex {
  std::vector<TrackId> ids;
  Matrix vectors;                  // one row per item
  std::vector<BatchId> batches;    // item-space batches the vectors came from
};

ItemIndex build_item_index(const TwoTower& model, std::vector<TrackId> ids, const Matrix& items,
                           const std::vector<BatchId>& item_batches);

struct Retrieval {
  std::vector<TrackId> ids;
  std::vector<double> scores;
  bool truncated = false;  // k exceeded the catalog
};

/// Exact top-k of `query` (already a tower output) against the index; ties
/// ordered by ascending id.
Retrieval retrieve(const Vector& query, const ItemIndex& index, std::size_t k);
Retrieval retrieve(const TwoTower& model, const Vector& user,
                   const std::vector<BatchId>& user_batches, const ItemIndex& index,
                   std::size_t k);

// Synthetic artist-follow task ---------------------------------------------------------

struct Follow {
  UserId user = 0;
  ArtistId artist = 0;
  int label = 0;
};

/// A user follows artists of their own archetype. `per_user` positives and
/// negatives are drawn per user; each label is flipped with probability `noise`.
std::vector<Follow> artist_follow_labels(const synth::World& world, std::span<const UserId> users,
                                         std::size_t per_user, double noise, std::uint64_t seed);

// Artifacts -----------------------------------------------------------------------------

void save_classifier(const PairClassifier& c, const std::filesystem::path& file);
PairClassifier load_classifier(const std::filesystem::path& file);
void save_two_tower(const TwoTower& t, const std::filesystem::path& file);
TwoTower load_two_tower(const std::filesystem::path& file);

}  // namespace urep::downstream

#endif  // UREP_DOWNSTREAM_HPP_
