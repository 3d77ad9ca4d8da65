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

#include "urep/synth.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

namespace urep::synth {
namespace {

WorldConfig small_config() {
  WorldConfig c;
  c.n_users = 10;
  c.n_tracks = 20;
  c.n_playlists = 4;
  c.n_archetypes = 2;
  c.n_artists = 4;
  c.n_languages = 2;
  c.n_countries = 2;
  c.n_devices = 1;
  c.acoustic_dim = 8;
  c.playlist_size = 5;
  c.n_favorites = 1;
  c.featured_artists = 2;
  c.onboarding_picks = 1;
  c.horizon = 200 * kDay;
  return c;
}

TEST(GenerateWorldTest, SmallWorldDeterministic) {
  const auto a = generate_world(small_config(), 7);
  const auto b = generate_world(small_config(), 7);
  EXPECT_EQ(serialize_world(a), serialize_world(b));
  ASSERT_EQ(a.users.size(), 10u);
  for (const auto& u : a.users) EXPECT_LT(u.archetype_id, 2u);
  EXPECT_NE(serialize_world(a), serialize_world(generate_world(small_config(), 8)));
}

TEST(GenerateWorldTest, SingleArchetype) {
  auto c = small_config();
  c.n_archetypes = 1;
  const auto w = generate_world(c, 1);
  for (const auto& u : w.users) EXPECT_EQ(u.archetype_id, 0u);
}

TEST(GenerateWorldTest, InvalidConfigRejected) {
  auto c = small_config();
  c.n_users = 0;
  EXPECT_THROW(generate_world(c, 1), ConfigError);
  c = small_config();
  c.n_archetypes = 30;
  EXPECT_THROW(generate_world(c, 1), ConfigError);
  c = small_config();
  c.acoustic_dim = 1;
  EXPECT_THROW(generate_world(c, 1), ConfigError);
}

TEST(GenerateWorldTest, OnboardingRecordsConsistent) {
  auto c = small_config();
  c.n_users = 200;
  c.cold_start_fraction = 0.5;
  const auto w = generate_world(c, 3);
  std::size_t cold = 0;
  for (const auto& u : w.users) {
    cold += u.cold_start;
    if (u.onboarding && u.onboarding->completed) {
      EXPECT_FALSE(u.onboarding->selected_artists.empty() && u.onboarding->selected_languages.empty());
      for (ArtistId a : u.onboarding->selected_artists) EXPECT_EQ(w.artists[a].archetype_id, u.archetype_id);
    }
  }
  EXPECT_EQ(cold, 100u);
}

TEST(EventLogTest, ZeroActivityMeansNoListens) {
  auto c = small_config();
  c.mean_daily_listens = 0.0;
  const auto w = generate_world(c, 2);
  const auto log = generate_event_log(w, c.horizon, 2);
  for (const auto& e : log.events) EXPECT_NE(e.kind, EventKind::kListen);
}

TEST(EventLogTest, FullPreferenceStaysInArchetype) {
  auto c = small_config();
  c.listen_p_in = 1.0;
  const auto w = generate_world(c, 4);
  const auto log = generate_event_log(w, c.horizon, 4);
  std::size_t listens = 0;
  for (const auto& e : log.events) {
    if (e.kind != EventKind::kListen) continue;
    ++listens;
    EXPECT_EQ(w.tracks[e.track].archetype_id, w.users[e.user].archetype_id);
  }
  EXPECT_GT(listens, 0u);
}

TEST(EventLogTest, OrderedAndListensFollowRegistration) {
  const auto w = generate_world(small_config(), 5);
  const auto log = generate_event_log(w, small_config().horizon, 5);
  for (std::size_t i = 1; i < log.size(); ++i) {
    EXPECT_LE(log.events[i - 1].timestamp, log.events[i].timestamp);
  }
  const auto by_user = index_by_user(log, w.users.size());
  for (std::size_t u = 0; u < by_user.size(); ++u) {
    ASSERT_TRUE(by_user[u].registration);
    for (const auto& l : by_user[u].listens) EXPECT_GE(l.timestamp, *by_user[u].registration);
    if (by_user[u].onboarding_time) {
      EXPECT_LE(*by_user[u].onboarding_time - *by_user[u].registration,
                small_config().onboarding_window_hours + 1e-9);
    }
  }
}

TEST(EventLogTest, SerializationRoundTrip) {
  const auto w = generate_world(small_config(), 6);
  const auto log = generate_event_log(w, small_config().horizon, 6);
  EXPECT_EQ(serialize_log(parse_log(serialize_log(log))), serialize_log(log));
  EXPECT_EQ(serialize_world(parse_world(serialize_world(w))), serialize_world(w));
  EXPECT_EQ(serialize_log(log), serialize_log(generate_event_log(w, small_config().horizon, 6)));
  for (const auto& e : log.events) EXPECT_EQ(parse_event(serialize_event(e)), e);
}

TEST(SplitLogTest, HandBuiltTenEvents) {
  EventLog log;
  for (int i = 0; i < 10; ++i) log.events.push_back({EventKind::kListen, 0, double(i), TrackId(i), {}});
  const auto [history, future] = split_log(log, 3.0);
  ASSERT_EQ(history.size(), 4u);
  ASSERT_EQ(future.size(), 6u);
  EXPECT_EQ(history.events.back().track, 3u);
  EXPECT_EQ(future.events.front().track, 4u);
  EXPECT_EQ(split_log(log, -1.0).first.size(), 0u);
  EXPECT_EQ(split_log(log, 100.0).second.size(), 0u);
}

TEST(SplitLogTest, PartitionForAnyCutoff) {
  const auto w = generate_world(small_config(), 9);
  const auto log = generate_event_log(w, small_config().horizon, 9);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> t(-10.0, small_config().horizon + 10.0);
  for (int i = 0; i < 50; ++i) {
    const double cut = t(rng);
    const auto [h, f] = split_log(log, cut);
    EXPECT_EQ(h.size() + f.size(), log.size());
    for (const auto& e : h.events) EXPECT_LE(e.timestamp, cut);
    for (const auto& e : f.events) EXPECT_GT(e.timestamp, cut);
  }
}

// Default-sized world: planted structure checks.
class DefaultWorldTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { world_ = new World(generate_world(WorldConfig{}, 11)); }
  static void TearDownTestSuite() {
    delete world_;
    world_ = nullptr;
  }
  static World* world_;
};
World* DefaultWorldTest::world_ = nullptr;

TEST_F(DefaultWorldTest, WithinArchetypePairsCoOccurFiveTimesMore) {
  const auto& w = *world_;
  double same = 0, cross = 0;
  for (const auto& p : w.playlists) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = i + 1; j < p.size(); ++j) {
        (w.tracks[p[i]].archetype_id == w.tracks[p[j]].archetype_id ? same : cross) += 1;
      }
    }
  }
  double same_pairs = 0;
  for (const auto& ts : w.tracks_by_archetype) same_pairs += double(ts.size()) * double(ts.size() - 1) / 2;
  const double n = double(w.tracks.size());
  const double cross_pairs = n * (n - 1) / 2 - same_pairs;
  EXPECT_GE((same / same_pairs) / (cross / cross_pairs), 5.0);
}

TEST_F(DefaultWorldTest, AcousticSeparability) {
  const auto& w = *world_;
  std::mt19937_64 rng(3);
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto& a = w.tracks[rng() % w.tracks.size()];
    const auto& b = w.tracks[rng() % w.tracks.size()];
    if (a.id == b.id) continue;
    const double d = (a.acoustic_features - b.acoustic_features).norm();
    if (a.archetype_id == b.archetype_id) {
      intra += d;
      ++n_intra;
    } else {
      inter += d;
      ++n_inter;
    }
  }
  EXPECT_LT(intra / double(n_intra), inter / double(n_inter));
}

TEST_F(DefaultWorldTest, PreferredArtistSetsOverlapLittle) {
  const auto& w = *world_;
  for (std::size_t a = 0; a < w.archetypes.size(); ++a) {
    const std::set<ArtistId> sa(w.archetypes[a].preferred_artists.begin(), w.archetypes[a].preferred_artists.end());
    for (std::size_t b = a + 1; b < w.archetypes.size(); ++b) {
      std::size_t shared = 0;
      for (ArtistId x : w.archetypes[b].preferred_artists) shared += sa.count(x);
      EXPECT_LT(double(shared), 0.5 * double(sa.size()));
    }
  }
}

TEST_F(DefaultWorldTest, InArchetypeListenFraction) {
  const auto& w = *world_;
  const auto log = generate_event_log(w, w.config.horizon, 12);
  double in = 0, total = 0;
  for (const auto& e : log.events) {
    if (e.kind != EventKind::kListen) continue;
    total += 1;
    in += w.tracks[e.track].archetype_id == w.users[e.user].archetype_id;
  }
  EXPECT_NEAR(in / total, 0.85, 0.03);
}

}  // namespace
}  // namespace urep::synth
