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

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "urep/features.hpp"

namespace urep::eval {
namespace {

std::vector<synth::UserEvents> users_with(std::vector<std::vector<synth::Listen>> listens) {
  std::vector<synth::UserEvents> out(listens.size());
  for (std::size_t u = 0; u < listens.size(); ++u) {
    out[u].registration = 0.0;
    out[u].listens = std::move(listens[u]);
  }
  return out;
}

modality::TrackSpace random_space(std::size_t n_tracks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  modality::TrackSpace s;
  s.audio = Matrix(Eigen::Index(n_tracks), 3).unaryExpr([&](double) { return g(rng); });
  s.collab = Matrix(Eigen::Index(n_tracks), 2).unaryExpr([&](double) { return g(rng); });
  s.collab_known.assign(n_tracks, true);
  s.audio_batch = {"audio", 1, 0, ""};
  s.collab_batch = {"collab", 1, 0, ""};
  return s;
}

TEST(EvalSetTest, BalancedAndCollisionFree) {
  const auto by_user = users_with({{{1.0, 3}, {2.0, 4}, {3.0, 5}}, {{50.0, 1}}, {{1.5, 2}, {1.6, 2}}});
  const std::vector<UserWindow> w{{0, 0.0, 10.0}, {1, 0.0, 10.0}, {2, 0.0, 10.0}};
  const auto set = build_eval_set(by_user, w, 8, 5);
  std::map<UserId, std::pair<int, int>> counts;
  for (const auto& e : set.examples) {
    (e.label ? counts[e.user_id].first : counts[e.user_id].second) += 1;
    if (e.label == 0) {
      for (const auto& l : by_user[e.user_id].listens) {
        if (l.timestamp > e.window_start && l.timestamp <= e.window_end) EXPECT_NE(l.track, e.track_id);
      }
    }
  }
  EXPECT_EQ(counts[0], std::make_pair(3, 3));
  EXPECT_EQ(counts[2], std::make_pair(1, 1));  // repeat listens count once
  ASSERT_EQ(set.excluded.size(), 1u);
  EXPECT_EQ(set.excluded[0], 1u);
}

TEST(EvalSetTest, DeterministicPerSeed) {
  std::vector<synth::Listen> l;
  for (int i = 0; i < 40; ++i) l.push_back({double(i), TrackId(i * 3 % 97)});
  const auto by_user = users_with({l});
  const std::vector<UserWindow> w{{0, 5.0, 30.0}};
  const auto a = build_eval_set(by_user, w, 100, 9);
  const auto b = build_eval_set(by_user, w, 100, 9);
  ASSERT_EQ(a.examples.size(), b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i) EXPECT_EQ(a.examples[i].track_id, b.examples[i].track_id);
}

TEST(EvalSetTest, UnknownUserRejected) {
  const std::vector<UserWindow> w{{4, 0.0, 1.0}};
  EXPECT_THROW(build_eval_set(users_with({{}}), w, 10, 1), NotFoundError);
}

TEST(AverageEmbeddingTest, SingleAndMidpoint) {
  const auto s = random_space(5, 1);
  EXPECT_FALSE(average_embedding({}, s, 10.0));
  const std::vector<synth::Listen> one{{1.0, 2}};
  EXPECT_EQ(*average_embedding(one, s, 10.0), s.track_vector(2));
  const std::vector<synth::Listen> two{{1.0, 2}, {2.0, 4}, {20.0, 0}};
  EXPECT_LT((*average_embedding(two, s, 10.0) - (s.track_vector(2) + s.track_vector(4)) / 2).norm(), 1e-15);
}

TEST(AverageEmbeddingTest, MatchesUnboundedHorizonAggregation) {
  const auto s = random_space(30, 2);
  features::FeatureLayout layout;
  layout.horizons = {1e12};
  layout.d_audio = 3;
  layout.d_collab = 2;
  std::mt19937_64 rng(3);
  for (int u = 0; u < 20; ++u) {
    std::vector<synth::Listen> l;
    for (int i = 0; i < 1 + u; ++i) l.push_back({double(i), TrackId(rng() % 30)});
    const auto h = features::aggregate_history(l, s, 100.0, layout);
    const auto avg = *average_embedding(l, s, 100.0);
    EXPECT_LT((avg.head(3) - h.audio[0]).norm(), 1e-12);
    EXPECT_LT((avg.tail(2) - h.collab[0]).norm(), 1e-12);
  }
}

TEST(OnboardingAverageTest, MeanOfSelectedArtists) {
  auto s = random_space(4, 4);
  s.artist_collab = Matrix(2, 2);
  s.artist_collab << 1, 0, 0, 3;
  synth::OnboardingRecord r;
  r.completed = true;
  r.selected_artists = {0, 1};
  Vector expect(2);
  expect << 0.5, 1.5;
  EXPECT_EQ(*onboarding_artist_average(r, s), expect);
  r.completed = false;
  EXPECT_FALSE(onboarding_artist_average(r, s));
  EXPECT_FALSE(onboarding_artist_average(std::nullopt, s));
}

TEST(PopularityTest, HandCountsRankedAndZeroIsMinimum) {
  synth::World w;
  w.tracks.resize(4);
  w.users.resize(1);
  w.users[0].country = 2;
  std::vector<synth::Listen> l;
  for (int i = 0; i < 5; ++i) l.push_back({1.0, 0});
  for (int i = 0; i < 2; ++i) l.push_back({1.0, 1});
  l.push_back({1.0, 2});
  const auto pop = PopularityModel::build(w, users_with({l}), 10.0);
  EXPECT_EQ(pop.ranking(2), (std::vector<TrackId>{0, 1, 2, 3}));
  EXPECT_GT(pop.score(2, 0), pop.score(2, 1));
  EXPECT_GT(pop.score(2, 1), pop.score(2, 2));
  EXPECT_EQ(pop.score(2, 3), 0.0);
  // Unseen country falls back to global counts, identical here.
  EXPECT_FALSE(pop.has_country(7));
  EXPECT_EQ(pop.score(7, 0), pop.score(2, 0));
}

TEST(ClusterEvalTest, OneHotArchetypesArePerfect) {
  const std::size_t n = 4 * 60;
  std::vector<UserId> ids(n);
  ClusterMap clusters;
  Matrix v = Matrix::Zero(Eigen::Index(n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = UserId(i);
    clusters[UserId(i)] = i % 4;
    v(Eigen::Index(i), Eigen::Index(i % 4)) = 1.0;
  }
  const auto s = cluster_eval(ids, v, BatchId{"x", 1, 0, ""}, clusters, 100, 50, 1);
  EXPECT_EQ(s.queries, 100u);
  EXPECT_DOUBLE_EQ(s.mean_ndcg, 1.0);
}

TEST(ClusterEvalTest, RandomVectorsNearBaseRate) {
  const std::size_t n = 1000;
  std::vector<UserId> ids(n);
  ClusterMap clusters;
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = UserId(i);
    clusters[UserId(i)] = i % 4;
  }
  const double base = 249.0 / 999.0;
  EXPECT_NEAR(random_base_rate(ids, clusters, 16, 200, 50, 3, 7), base, 0.05);
}

TEST(ClusterEvalTest, SingletonClustersExcluded) {
  std::vector<UserId> ids{0, 1, 2};
  ClusterMap clusters{{0, 1}, {1, 1}, {2, 9}};
  const auto s = cluster_eval(ids, Matrix::Identity(3, 3), BatchId{"x", 1, 0, ""}, clusters, 10, 2, 1);
  EXPECT_EQ(s.queries, 2u);
}

TEST(ClusterHeuristicsTest, ModalArtistAndOnboardingSets) {
  synth::World w;
  w.tracks.resize(3);
  w.tracks[0].artist_id = 0;
  w.tracks[1].artist_id = 1;
  w.tracks[2].artist_id = 1;
  w.artists.resize(2);
  w.artists[0].country = 5;
  w.artists[1].country = 6;
  auto by_user = users_with({{{1.0, 0}, {2.0, 1}, {3.0, 2}}, {{1.0, 0}, {2.0, 0}, {30.0, 1}}});
  synth::OnboardingRecord r;
  r.completed = true;
  r.selected_artists = {1, 0};
  by_user[0].onboarding = r;
  by_user[0].onboarding_time = 0.1;
  r.selected_artists = {0, 1};
  by_user[1].onboarding = r;
  by_user[1].onboarding_time = 0.1;
  const std::vector<UserId> users{0, 1};
  const auto fav = favorite_artist_clusters(w, by_user, users, 10.0);
  EXPECT_EQ(fav.at(0), 1u);
  EXPECT_EQ(fav.at(1), 0u);
  EXPECT_EQ(artist_country_clusters(w, by_user, users, 10.0).at(0), 6u);
  const auto ob = onboarding_clusters(by_user, users, 10.0);
  EXPECT_EQ(ob.at(0), ob.at(1));
}

TEST(PlayCountTest, SumsRepeatedListens) {
  const auto by_user = users_with({{{1.0, 2}, {2.0, 2}, {50.0, 1}}});
  const std::vector<UserId> users{0};
  const Matrix m = Matrix(play_count_matrix(by_user, users, 3, 10.0));
  EXPECT_EQ(m(0, 2), 2.0);
  EXPECT_EQ(m(0, 1), 0.0);
}

}  // namespace
}  // namespace urep::eval
