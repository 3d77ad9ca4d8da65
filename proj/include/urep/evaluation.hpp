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

// Evaluation sets, baselines and cluster heuristics.

#ifndef UREP_EVALUATION_HPP_
#define UREP_EVALUATION_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>

#include "urep/common.hpp"
#include "urep/metrics.hpp"
#include "urep/modality.hpp"
#include "urep/synth.hpp"

namespace urep::eval {

struct EvalExample {
  UserId user_id = 0;
  TrackId track_id = 0;
  int label = 0;
  SimTime window_start = 0.0;  // exclusive
  SimTime window_end = 0.0;    // inclusive
};

struct UserWindow {
  UserId user = 0;
  SimTime start = 0.0;
  SimTime end = 0.0;
};

struct EvalSet {
  std::vector<EvalExample> examples;
  std::vector<UserId> excluded;  // users without a listen in their window
};

/// One positive per distinct track listened in (start, end]; one negative per
/// positive drawn uniformly from tracks not listened in the window.
EvalSet build_eval_set(const std::vector<synth::UserEvents>& by_user,
                       std::span<const UserWindow> windows, std::uint32_t n_tracks,
                       std::uint64_t seed);

// Baselines -----------------------------------------------------------------------

/// [audio | collab] mean over listens at or before `as_of`. Tracks without a
/// collaborative vector are skipped in the collaborative half. Empty history
/// gives nullopt.
std::optional<Vector> average_embedding(std::span<const synth::Listen> listens,
                                        const modality::TrackSpace& space, SimTime as_of);

/// Mean collaborative artist embedding over a completed onboarding record;
/// the same vector the onboarding artist feature block holds.
std::optional<Vector> onboarding_artist_average(const std::optional<synth::OnboardingRecord>& record,
                                                const modality::TrackSpace& space);

/// Tag for pseudo-representations living in the track space of `space`.
BatchId track_space_batch(const modality::TrackSpace& space, const std::string& name);

/// Per-country listen counts. Score is 1 - rank/n for listened tracks (rank 0
/// is the most played, ties by id) and 0 for tracks never played.
class PopularityModel {
 public:
  static PopularityModel build(const synth::World& world,
                               const std::vector<synth::UserEvents>& by_user, SimTime as_of);

  double score(std::uint32_t country, TrackId track) const;
  std::vector<TrackId> ranking(std::uint32_t country) const;
  bool has_country(std::uint32_t country) const;

 private:
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> counts_;
  std::vector<std::size_t> global_counts_;
  std::unordered_map<std::uint32_t, std::vector<double>> scores_;
  std::vector<double> global_scores_;
};

/// users x tracks play counts over listens at or before `as_of`.
Eigen::SparseMatrix<double> play_count_matrix(const std::vector<synth::UserEvents>& by_user,
                                              std::span<const UserId> users,
                                              std::uint32_t n_tracks, SimTime as_of);

// Cluster heuristics ----------------------------------------------------------------

/// user -> cluster key. Users without a key are absent.
using ClusterMap = std::unordered_map<UserId, std::uint64_t>;

ClusterMap archetype_clusters(const synth::World& world, std::span<const UserId> users);
/// Most played artist up to `as_of` (ties: smallest id).
ClusterMap favorite_artist_clusters(const synth::World& world,
                                    const std::vector<synth::UserEvents>& by_user,
                                    std::span<const UserId> users, SimTime as_of);
/// Country of the most played artist.
ClusterMap artist_country_clusters(const synth::World& world,
                                   const std::vector<synth::UserEvents>& by_user,
                                   std::span<const UserId> users, SimTime as_of);
/// Identical artist set chosen in a completed onboarding before `as_of`.
ClusterMap onboarding_clusters(const std::vector<synth::UserEvents>& by_user,
                               std::span<const UserId> users, SimTime as_of);

struct ClusterScore {
  double mean_ndcg = 0.0;
  std::size_t queries = 0;
};

/// Mean nDCG@k of cluster co-members among each sampled user's nearest
/// neighbours. Only labelled users take part; singleton clusters are skipped.
ClusterScore cluster_eval(std::span<const UserId> ids, const Matrix& vectors, const BatchId& batch,
                          const ClusterMap& clusters, std::size_t sample, std::size_t k,
                          std::uint64_t seed);

/// cluster_eval on i.i.d. Gaussian vectors, averaged over `trials`.
double random_base_rate(std::span<const UserId> ids, const ClusterMap& clusters, std::size_t dim,
                        std::size_t sample, std::size_t k, std::size_t trials,
                        std::uint64_t seed);

}  // namespace urep::eval

#endif  // UREP_EVALUATION_HPP_
