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

#include "urep/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace urep::eval {

using Rng = std::mt19937_64;

EvalSet build_eval_set(const std::vector<synth::UserEvents>& by_user,
                       std::span<const UserWindow> windows, std::uint32_t n_tracks,
                       std::uint64_t seed) {
  EvalSet out;
  for (const auto& w : windows) {
    if (w.user >= by_user.size()) throw NotFoundError("unknown user " + std::to_string(w.user));
    if (w.end < w.start) throw ConfigError("evaluation window ends before it starts");
    std::set<TrackId> listened;
    for (const auto& l : by_user[w.user].listens) {
      if (l.timestamp > w.start && l.timestamp <= w.end) listened.insert(l.track);
    }
    if (listened.empty()) {
      out.excluded.push_back(w.user);
      continue;
    }
    if (listened.size() >= n_tracks) throw ConfigError("no negative candidates left");
    Rng rng(derive_seed(seed, "eval-negatives-" + std::to_string(w.user)));
    std::uniform_int_distribution<TrackId> pick(0, n_tracks - 1);
    for (TrackId t : listened) out.examples.push_back({w.user, t, 1, w.start, w.end});
    for (std::size_t i = 0; i < listened.size(); ++i) {
      TrackId t;
      do {
        t = pick(rng);
      } while (listened.count(t));
      out.examples.push_back({w.user, t, 0, w.start, w.end});
    }
  }
  return out;
}

// Baselines -----------------------------------------------------------------------

std::optional<Vector> average_embedding(std::span<const synth::Listen> listens,
                                        const modality::TrackSpace& space, SimTime as_of) {
  Vector audio = Vector::Zero(space.d_audio());
  Vector collab = Vector::Zero(space.d_collab());
  std::size_t n = 0, n_collab = 0;
  for (const auto& l : listens) {
    if (l.timestamp > as_of) continue;
    audio += space.audio.row(l.track).transpose();
    ++n;
    if (space.collab_known[l.track]) {
      collab += space.collab.row(l.track).transpose();
      ++n_collab;
    }
  }
  if (n == 0) return std::nullopt;
  Vector out(audio.size() + collab.size());
  out << audio / double(n), (n_collab ? Vector(collab / double(n_collab)) : collab);
  return out;
}

std::optional<Vector> onboarding_artist_average(const std::optional<synth::OnboardingRecord>& record,
                                                const modality::TrackSpace& space) {
  if (!record || !record->completed || record->selected_artists.empty()) return std::nullopt;
  Vector out = Vector::Zero(space.d_collab());
  for (ArtistId a : record->selected_artists) {
    if (a >= space.artist_collab.rows()) throw NotFoundError("unknown artist " + std::to_string(a));
    out += space.artist_collab.row(a).transpose();
  }
  return Vector(out / double(record->selected_artists.size()));
}

BatchId track_space_batch(const modality::TrackSpace& space, const std::string& name) {
  BatchId b;
  b.model = name;
  b.generation = space.collab_batch.generation;
  b.fingerprint = space.audio_batch.str() + "+" + space.collab_batch.str();
  return b;
}

PopularityModel PopularityModel::build(const synth::World& world,
                                       const std::vector<synth::UserEvents>& by_user,
                                       SimTime as_of) {
  PopularityModel m;
  const std::size_t n = world.tracks.size();
  m.global_counts_.assign(n, 0);
  for (const auto& u : world.users) {
    if (u.id >= by_user.size()) continue;
    auto& counts = m.counts_[u.country];
    if (counts.empty()) counts.assign(n, 0);
    for (const auto& l : by_user[u.id].listens) {
      if (l.timestamp > as_of) continue;
      ++counts[l.track];
      ++m.global_counts_[l.track];
    }
  }
  auto scores_from = [n](const std::vector<std::size_t>& counts) {
    std::vector<TrackId> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](TrackId a, TrackId b) { return counts[a] > counts[b]; });
    std::vector<double> s(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      if (counts[order[r]] > 0) s[order[r]] = 1.0 - double(r) / double(n);
    }
    return s;
  };
  for (const auto& [c, counts] : m.counts_) m.scores_[c] = scores_from(counts);
  m.global_scores_ = scores_from(m.global_counts_);
  return m;
}

bool PopularityModel::has_country(std::uint32_t country) const {
  const auto it = counts_.find(country);
  return it != counts_.end() &&
         std::any_of(it->second.begin(), it->second.end(), [](std::size_t c) { return c > 0; });
}

double PopularityModel::score(std::uint32_t country, TrackId track) const {
  if (track >= global_scores_.size()) throw NotFoundError("unknown track " + std::to_string(track));
  if (!has_country(country)) return global_scores_[track];
  return scores_.at(country)[track];
}

std::vector<TrackId> PopularityModel::ranking(std::uint32_t country) const {
  const auto& counts = has_country(country) ? counts_.at(country) : global_counts_;
  std::vector<TrackId> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](TrackId a, TrackId b) { return counts[a] > counts[b]; });
  return order;
}

Eigen::SparseMatrix<double> play_count_matrix(const std::vector<synth::UserEvents>& by_user,
                                              std::span<const UserId> users,
                                              std::uint32_t n_tracks, SimTime as_of) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t r = 0; r < users.size(); ++r) {
    for (const auto& l : by_user.at(users[r]).listens) {
      if (l.timestamp <= as_of) triplets.emplace_back(int(r), int(l.track), 1.0);
    }
  }
  Eigen::SparseMatrix<double> m(Eigen::Index(users.size()), n_tracks);
  m.setFromTriplets(triplets.begin(), triplets.end());  // duplicates are summed
  return m;
}

// Clusters ------------------------------------------------------------------------

ClusterMap archetype_clusters(const synth::World& world, std::span<const UserId> users) {
  ClusterMap m;
  for (UserId u : users) m[u] = world.users.at(u).archetype_id;
  return m;
}

namespace {

std::optional<ArtistId> modal_artist(const synth::World& world, const synth::UserEvents& ev,
                                     SimTime as_of) {
  std::map<ArtistId, std::size_t> counts;
  for (const auto& l : ev.listens) {
    if (l.timestamp <= as_of) ++counts[world.tracks.at(l.track).artist_id];
  }
  std::optional<ArtistId> best;
  std::size_t best_n = 0;
  for (const auto& [a, n] : counts) {
    if (n > best_n) {
      best = a;
      best_n = n;
    }
  }
  return best;
}

}  // namespace

ClusterMap favorite_artist_clusters(const synth::World& world,
                                    const std::vector<synth::UserEvents>& by_user,
                                    std::span<const UserId> users, SimTime as_of) {
  ClusterMap m;
  for (UserId u : users) {
    if (auto a = modal_artist(world, by_user.at(u), as_of)) m[u] = *a;
  }
  return m;
}

ClusterMap artist_country_clusters(const synth::World& world,
                                   const std::vector<synth::UserEvents>& by_user,
                                   std::span<const UserId> users, SimTime as_of) {
  ClusterMap m;
  for (UserId u : users) {
    if (auto a = modal_artist(world, by_user.at(u), as_of)) m[u] = world.artists.at(*a).country;
  }
  return m;
}

ClusterMap onboarding_clusters(const std::vector<synth::UserEvents>& by_user,
                               std::span<const UserId> users, SimTime as_of) {
  ClusterMap m;
  for (UserId u : users) {
    const auto& ev = by_user.at(u);
    if (!ev.onboarding || !ev.onboarding->completed || !ev.onboarding_time ||
        *ev.onboarding_time > as_of || ev.onboarding->selected_artists.empty()) {
      continue;
    }
    auto artists = ev.onboarding->selected_artists;
    std::sort(artists.begin(), artists.end());
    std::string key;
    for (auto a : artists) key += std::to_string(a) + ",";
    m[u] = fnv1a(key);
  }
  return m;
}

ClusterScore cluster_eval(std::span<const UserId> ids, const Matrix& vectors, const BatchId& batch,
                          const ClusterMap& clusters, std::size_t sample, std::size_t k,
                          std::uint64_t seed) {
  if (Eigen::Index(ids.size()) != vectors.rows()) throw ShapeError("id count != vector rows");
  std::vector<UserId> labelled;
  std::vector<Eigen::Index> rows;
  std::unordered_map<std::uint64_t, std::vector<UserId>> members;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = clusters.find(ids[i]);
    if (it == clusters.end()) continue;
    labelled.push_back(ids[i]);
    rows.push_back(Eigen::Index(i));
    members[it->second].push_back(ids[i]);
  }
  Matrix sub(Eigen::Index(rows.size()), vectors.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) sub.row(Eigen::Index(i)) = vectors.row(rows[i]);
  const metrics::NeighborIndex index(labelled, sub, batch);

  std::vector<UserId> eligible;
  for (UserId u : labelled) {
    if (members[clusters.at(u)].size() >= 2) eligible.push_back(u);
  }
  Rng rng(derive_seed(seed, "cluster-sample"));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  if (eligible.size() > sample) eligible.resize(sample);

  ClusterScore out;
  double total = 0.0;
  for (UserId u : eligible) {
    std::unordered_set<std::uint32_t> relevant;
    for (UserId v : members[clusters.at(u)]) {
      if (v != u) relevant.insert(v);
    }
    const auto nn = index.query(u, k);
    total += metrics::ndcg_at_k(nn.ids, relevant, k);
  }
  out.queries = eligible.size();
  out.mean_ndcg = eligible.empty() ? 0.0 : total / double(eligible.size());
  return out;
}

double random_base_rate(std::span<const UserId> ids, const ClusterMap& clusters, std::size_t dim,
                        std::size_t sample, std::size_t k, std::size_t trials,
                        std::uint64_t seed) {
  if (trials == 0) throw ConfigError("need at least one trial");
  BatchId batch{"random", 1, 0.0, ""};
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, "random-reps-" + std::to_string(t)));
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix v = Matrix(Eigen::Index(ids.size()), Eigen::Index(dim)).unaryExpr([&](double) { return g(rng); });
    total += cluster_eval(ids, v, batch, clusters, sample, k, derive_seed(seed, std::to_string(t))).mean_ndcg;
  }
  return total / double(trials);
}

}  // namespace urep::eval
