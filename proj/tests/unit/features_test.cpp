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

#include "urep/features.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace urep::features {
namespace {

FeatureLayout toy_layout() {
  FeatureLayout l;
  l.d_audio = 4;
  l.d_collab = 4;
  l.n_countries = 3;
  l.n_devices = 1;
  l.n_languages = 5;
  return l;
}

// Three tracks; tracks 0 and 1 belong to artist 0, track 2 to artist 1.
modality::TrackSpace toy_space() {
  modality::TrackSpace s;
  s.audio.resize(3, 4);
  s.audio << 1, 0, 0, 0,  //
      0, 1, 0, 0,         //
      0, 0, 1, 0;
  s.collab.resize(3, 4);
  s.collab << 2, 0, 0, 0,  //
      0, 2, 0, 0,          //
      0, 0, 0, 2;
  s.collab_known = {true, true, true};
  s.track_artist = {0, 0, 1};
  s.artist_collab.resize(2, 4);
  s.artist_collab.row(0) = (s.collab.row(0) + s.collab.row(1)) / 2;
  s.artist_collab.row(1) = s.collab.row(2);
  s.artist_audio.resize(2, 4);
  s.artist_audio.row(0) = (s.audio.row(0) + s.audio.row(1)) / 2;
  s.artist_audio.row(1) = s.audio.row(2);
  s.audio_batch = {"audio", 1, 0, ""};
  s.collab_batch = {"collab", 1, 0, ""};
  return s;
}

std::size_t block_index(const FeatureLayout& l, BlockKind kind, int horizon = -1) {
  const auto blocks = l.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].kind == kind && blocks[i].horizon == horizon) return i;
  }
  ADD_FAILURE() << "block not found";
  return 0;
}

Vector block_of(const UserFeatureVector& f, const FeatureLayout& l, BlockKind kind, int horizon = -1) {
  const auto b = l.blocks()[block_index(l, kind, horizon)];
  return f.x.segment(Eigen::Index(b.offset), Eigen::Index(b.width));
}

TEST(LayoutTest, ToyLayoutWidth) {
  const auto l = toy_layout();
  EXPECT_EQ(l.total_dim(), 42u);
  std::size_t sum = 0;
  for (const auto& b : l.blocks()) {
    EXPECT_EQ(b.offset, sum);
    sum += b.width;
  }
  EXPECT_EQ(sum, 42u);
}

TEST(LayoutTest, JsonRoundTripKeepsFingerprint) {
  auto l = toy_layout();
  l.mask.onboarding = true;
  const auto back = FeatureLayout::from_json(l.to_json());
  EXPECT_EQ(back.fingerprint(), l.fingerprint());
  EXPECT_TRUE(back.mask.onboarding);
  EXPECT_NE(toy_layout().fingerprint(), l.fingerprint());
}

TEST(MaskTest, ParseNames) {
  const auto m = FeatureMask::parse("onboarding,static");
  EXPECT_TRUE(m.onboarding);
  EXPECT_TRUE(m.static_features);
  EXPECT_FALSE(m.modality);
  EXPECT_FALSE(FeatureMask::parse("").any());
  EXPECT_THROW(FeatureMask::parse("audio"), ConfigError);
}

TEST(AggregateTest, NoListensAllImputed) {
  const auto h = aggregate_history({}, toy_space(), 100.0, toy_layout());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(h.audio_imputed[i]);
    EXPECT_TRUE(h.collab_imputed[i]);
    EXPECT_EQ(h.audio[i].norm(), 0.0);
  }
}

TEST(AggregateTest, SingleListenFillsEveryHorizon) {
  const std::vector<synth::Listen> l{{99.0, 2}};
  const auto h = aggregate_history(l, toy_space(), 100.0, toy_layout());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(h.audio[i], toy_space().audio.row(2).transpose());
    EXPECT_FALSE(h.collab_imputed[i]);
  }
}

TEST(AggregateTest, HorizonMeansByHand) {
  // Track 2 is 20 days old: outside the week, inside the month.
  const SimTime now = 60 * kDay;
  const std::vector<synth::Listen> l{{now - 20 * kDay, 2}, {now - 2 * kDay, 0}, {now - kDay, 1}};
  const auto h = aggregate_history(l, toy_space(), now, toy_layout());
  Vector week(4), month(4);
  week << 0.5, 0.5, 0, 0;
  month << 1.0 / 3, 1.0 / 3, 1.0 / 3, 0;
  EXPECT_LT((h.audio[0] - week).norm(), 1e-15);
  EXPECT_LT((h.audio[1] - month).norm(), 1e-15);
  EXPECT_LT((h.audio[2] - month).norm(), 1e-15);
  EXPECT_EQ(h.play_counts[0], 2u);
  EXPECT_EQ(h.play_counts[1], 3u);
}

TEST(AggregateTest, FutureListensIgnored) {
  const std::vector<synth::Listen> l{{10.0, 0}, {200.0, 1}};
  const auto h = aggregate_history(l, toy_space(), 100.0, toy_layout());
  EXPECT_EQ(h.audio[0], toy_space().audio.row(0).transpose());
}

TEST(DemographicsTest, OneHotAndLogActivity) {
  FeatureLayout l = toy_layout();
  l.n_countries = 10;
  UserProfile p;
  p.country = 3;
  const std::vector<std::size_t> counts{0, 99, 1000};
  const Vector c = encode_demographics(p, counts, l);
  EXPECT_EQ(c.head(11).sum(), 1.0);
  EXPECT_EQ(c[3], 1.0);
  const auto base = l.country_width() + l.device_width();
  EXPECT_EQ(c[Eigen::Index(base)], 0.0);
  EXPECT_NEAR(c[Eigen::Index(base + 1)], 0.6665, 1e-4);
  EXPECT_NEAR(c[Eigen::Index(base + 1)], std::log(100.0) / std::log(1001.0), 1e-15);
  EXPECT_NEAR(c[Eigen::Index(base + 2)], 1.0, 1e-15);
}

TEST(DemographicsTest, UnknownCountryGoesToOther) {
  UserProfile p;
  p.country = 77;
  const std::vector<std::size_t> counts{0, 0, 0};
  const Vector c = encode_demographics(p, counts, toy_layout());
  EXPECT_EQ(c[3], 1.0);  // OTHER slot after the three known countries
}

TEST(OnboardingTest, AbsentRecordImputed) {
  const auto b = encode_onboarding(std::nullopt, toy_space(), toy_layout());
  EXPECT_TRUE(b.artist_imputed);
  EXPECT_TRUE(b.languages_imputed);
  EXPECT_EQ(b.artist.norm() + b.languages.norm(), 0.0);
}

TEST(OnboardingTest, MultiHotLanguagesAndArtistMean) {
  synth::OnboardingRecord r;
  r.completed = true;
  r.selected_languages = {1, 3};
  r.selected_artists = {0};
  const auto b = encode_onboarding(r, toy_space(), toy_layout());
  Vector expect_lang(5), expect_artist(4);
  expect_lang << 0, 1, 0, 1, 0;
  expect_artist << 1, 1, 0, 0;  // mean of collab rows of tracks 0 and 1
  EXPECT_EQ(b.languages, expect_lang);
  EXPECT_EQ(b.artist, expect_artist);
  EXPECT_FALSE(b.artist_imputed);
}

TEST(OnboardingTest, IncompleteRecordImputed) {
  synth::OnboardingRecord r;
  r.completed = false;
  r.selected_artists = {0};
  EXPECT_TRUE(encode_onboarding(r, toy_space(), toy_layout()).artist_imputed);
}

class AssembleTest : public ::testing::Test {
 protected:
  UserSnapshot snapshot() {
    UserSnapshot s;
    s.profile = {4, 1, 0, 0.0};
    record_.completed = true;
    record_.selected_artists = {1};
    record_.selected_languages = {2};
    s.onboarding = record_;
    s.onboarding_time = 0.1;
    s.listens = listens_;
    return s;
  }
  synth::OnboardingRecord record_;
  std::vector<synth::Listen> listens_;
};

TEST_F(AssembleTest, NewUserOnlyDemographicsAndOnboarding) {
  const auto l = toy_layout();
  const auto f = assemble(snapshot(), toy_space(), 1.0, l);
  ASSERT_EQ(std::size_t(f.x.size()), l.total_dim());
  for (const auto& b : l.blocks()) {
    const double norm = f.x.segment(Eigen::Index(b.offset), Eigen::Index(b.width)).norm();
    const bool expect_nonzero = b.kind == BlockKind::kCountry || b.kind == BlockKind::kDevice ||
                                b.kind == BlockKind::kOnboardArtist ||
                                b.kind == BlockKind::kOnboardLanguage;
    EXPECT_EQ(norm > 0, expect_nonzero) << b.name;
  }
  EXPECT_TRUE(f.imputed[block_index(l, BlockKind::kAudio, 0)]);
  EXPECT_EQ(f.upstream_batches.size(), 2u);
}

TEST_F(AssembleTest, OnboardingDroppedAfterWindow) {
  const auto l = toy_layout();
  const auto f = assemble(snapshot(), toy_space(), l.onboard_window + kDay, l);
  EXPECT_EQ(block_of(f, l, BlockKind::kOnboardArtist).norm(), 0.0);
  EXPECT_EQ(block_of(f, l, BlockKind::kOnboardLanguage).norm(), 0.0);
  EXPECT_TRUE(f.imputed[block_index(l, BlockKind::kOnboardArtist)]);
}

TEST_F(AssembleTest, MaskZeroesBlocksAndDemographicsStable) {
  listens_ = {{0.5, 0}, {2.0, 2}};
  auto l = toy_layout();
  const auto early = assemble(snapshot(), toy_space(), 3.0, l);
  const auto late = assemble(snapshot(), toy_space(), 3.0 + 40 * kDay, l);
  EXPECT_EQ(block_of(early, l, BlockKind::kCountry), block_of(late, l, BlockKind::kCountry));
  EXPECT_EQ(block_of(early, l, BlockKind::kDevice), block_of(late, l, BlockKind::kDevice));
  EXPECT_GT(block_of(early, l, BlockKind::kAudio, 0).norm(), 0.0);
  EXPECT_EQ(block_of(late, l, BlockKind::kAudio, 0).norm(), 0.0);

  l.mask = FeatureMask::parse("modality,static,onboarding");
  const auto masked = assemble(snapshot(), toy_space(), 3.0, l);
  for (BlockKind k : {BlockKind::kCountry, BlockKind::kDevice, BlockKind::kOnboardArtist}) {
    EXPECT_EQ(block_of(masked, l, k).norm(), 0.0);
  }
  EXPECT_EQ(block_of(masked, l, BlockKind::kCollab, 2).norm(), 0.0);
}

TEST_F(AssembleTest, EncoderLayoutMismatch) {
  auto l = toy_layout();
  l.d_audio = 5;
  EXPECT_THROW(assemble(snapshot(), toy_space(), 1.0, l), LayoutError);
}

TEST_F(AssembleTest, SaveLoadRoundTrip) {
  const auto l = toy_layout();
  std::vector<UserFeatureVector> fs{assemble(snapshot(), toy_space(), 1.0, l)};
  const auto dir = std::filesystem::temp_directory_path() / "urep_features_test";
  save_features(fs, l, dir);
  const auto [back, layout] = load_features(dir);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(layout.fingerprint(), l.fingerprint());
  EXPECT_LT((back[0].x - fs[0].x).norm(), 1e-12);
  EXPECT_EQ(back[0].imputed, fs[0].imputed);
  EXPECT_EQ(stack(back).rows(), 1);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace urep::features
