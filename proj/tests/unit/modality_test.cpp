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

#include "urep/modality.hpp"

#include <gtest/gtest.h>

#include <random>

namespace urep::modality {
namespace {

const BatchId kAudio{"audio", 1, 0.0, ""};
const BatchId kCollab{"collab", 1, 0.0, ""};

synth::WorldConfig small_config() {
  synth::WorldConfig c;
  c.n_users = 10;
  c.n_tracks = 60;
  c.n_playlists = 10;
  c.n_archetypes = 3;
  c.n_artists = 6;
  c.n_languages = 2;
  c.n_countries = 2;
  c.n_devices = 1;
  c.acoustic_dim = 12;
  c.playlist_size = 6;
  return c;
}

std::vector<synth::Playlist> four_track(int repeats) {
  std::vector<synth::Playlist> p;
  for (int i = 0; i < repeats; ++i) p.push_back({0, 1});
  p.push_back({2, 3});
  return p;
}

TEST(AudioEncoderTest, IdenticalFeaturesIdenticalEmbeddings) {
  const auto w = synth::generate_world(small_config(), 1);
  const auto enc = train_audio_encoder(w, 4, 1, kAudio);
  auto copy = w.tracks[0];
  copy.id = 999;
  EXPECT_EQ(enc.embed(w.tracks[0]).vector, enc.embed(copy).vector);
  EXPECT_EQ(enc.embed(w.tracks[0]).vector.size(), 4);
  EXPECT_EQ(enc.embed(w.tracks[0]).batch_id, kAudio);
}

TEST(AudioEncoderTest, FullDimensionIsIsometry) {
  const auto w = synth::generate_world(small_config(), 2);
  const auto enc = train_audio_encoder(w, 12, 1, kAudio);
  for (std::size_t i = 0; i + 1 < w.tracks.size(); i += 7) {
    const auto& a = w.tracks[i];
    const auto& b = w.tracks[i + 1];
    EXPECT_NEAR((enc.embed(a).vector - enc.embed(b).vector).norm(),
                (a.acoustic_features - b.acoustic_features).norm(), 1e-6);
  }
}

TEST(AudioEncoderTest, TooFewTracks) {
  auto w = synth::generate_world(small_config(), 3);
  w.tracks.resize(1);
  EXPECT_THROW(train_audio_encoder(w, 4, 1, kAudio), TrainingError);
}

TEST(CollabEncoderTest, CoOccurringTracksCloser) {
  const auto enc = train_collab_encoder(four_track(2), 4, 2, 1, kCollab);
  const auto a = enc.embed(TrackId(0)).vector;
  EXPECT_GT(cosine_similarity(a, enc.embed(TrackId(1)).vector),
            cosine_similarity(a, enc.embed(TrackId(2)).vector));
}

TEST(CollabEncoderTest, UnknownTrackFallsBackToZero) {
  const auto enc = train_collab_encoder(four_track(2), 5, 2, 1, kCollab);
  const auto e = enc.embed(TrackId(4));
  EXPECT_TRUE(e.fallback);
  EXPECT_EQ(e.vector.norm(), 0.0);
  const auto out_of_range = enc.embed(TrackId(50));
  EXPECT_TRUE(out_of_range.fallback);
  EXPECT_FALSE(enc.embed(TrackId(0)).fallback);
}

TEST(CollabEncoderTest, NearestNeighborsInvariantToRepetition) {
  auto nearest = [](const CollabEncoder& enc, TrackId t) {
    TrackId best = t;
    double best_s = -2;
    for (TrackId o = 0; o < 4; ++o) {
      if (o == t) continue;
      const double s = cosine_similarity(enc.embed(t).vector, enc.embed(o).vector);
      if (s > best_s) {
        best_s = s;
        best = o;
      }
    }
    return best;
  };
  const auto two = train_collab_encoder(four_track(2), 4, 2, 1, kCollab);
  const auto ten = train_collab_encoder(four_track(10), 4, 2, 1, kCollab);
  for (TrackId t = 0; t < 4; ++t) EXPECT_EQ(nearest(two, t), nearest(ten, t));
}

TEST(CollabEncoderTest, EmptyPlaylistsRejected) {
  EXPECT_THROW(train_collab_encoder({}, 4, 2, 1, kCollab), TrainingError);
}

TEST(CollabEncoderTest, DeterministicPerSeed) {
  const auto w = synth::generate_world(small_config(), 4);
  const auto a = train_collab_encoder(w.playlists, 60, 4, 9, kCollab);
  const auto b = train_collab_encoder(w.playlists, 60, 4, 9, kCollab);
  EXPECT_EQ(a.factors(), b.factors());
}

TEST(PpmiTest, SymmetricAndNonnegative) {
  const Matrix m = ppmi_matrix(four_track(3), 4);
  EXPECT_LT((m - m.transpose()).norm(), 1e-12);
  EXPECT_GE(m.minCoeff(), 0.0);
  EXPECT_GT(m(0, 1), 0.0);
}

TEST(EncoderArtifactTest, SaveLoadRoundTrip) {
  const auto w = synth::generate_world(small_config(), 5);
  const auto audio = train_audio_encoder(w, 4, 1, BatchId{"audio", 2, 3.0, "fp"});
  const auto collab = train_collab_encoder(w.playlists, 60, 4, 1, kCollab);
  const auto dir = std::filesystem::temp_directory_path() / "urep_modality_test";
  save_encoder(audio, dir / "audio.json");
  save_encoder(collab, dir / "collab.json");
  const auto a2 = load_encoder(dir / "audio.json");
  const auto c2 = load_encoder(dir / "collab.json");
  EXPECT_EQ(a2->space(), Space::kAudio);
  EXPECT_EQ(a2->batch_id().generation, 2u);
  EXPECT_LT((a2->embed(w.tracks[3]).vector - audio.embed(w.tracks[3]).vector).norm(), 1e-12);
  EXPECT_LT((c2->embed(w.tracks[3]).vector - collab.embed(w.tracks[3]).vector).norm(), 1e-12);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_encoder(dir / "audio.json"), IoError);
}

TEST(TrackSpaceTest, ConcatenatesBothSpaces) {
  const auto w = synth::generate_world(small_config(), 6);
  const auto audio = train_audio_encoder(w, 4, 1, kAudio);
  const auto collab = train_collab_encoder(w.playlists, 60, 3, 1, kCollab);
  const auto space = TrackSpace::build(w, audio, collab);
  const Vector v = space.track_vector(5);
  ASSERT_EQ(v.size(), 7);
  EXPECT_EQ(v.head(4), audio.embed(w.tracks[5]).vector);
  EXPECT_EQ(space.batches().size(), 2u);
}

// Default-sized world.
class DefaultSpacesTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { world_ = new synth::World(synth::generate_world(synth::WorldConfig{}, 21)); }
  static void TearDownTestSuite() {
    delete world_;
    world_ = nullptr;
  }
  static synth::World* world_;
};
synth::World* DefaultSpacesTest::world_ = nullptr;

TEST_F(DefaultSpacesTest, AudioIntraArchetypeCosineExceedsInter) {
  const auto& w = *world_;
  const auto enc = train_audio_encoder(w, 80, 1, kAudio);
  std::mt19937_64 rng(5);
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto& a = w.tracks[rng() % w.tracks.size()];
    const auto& b = w.tracks[rng() % w.tracks.size()];
    if (a.id == b.id) continue;
    const double c = cosine_similarity(enc.embed(a).vector, enc.embed(b).vector);
    if (a.archetype_id == b.archetype_id) {
      intra += c;
      ++ni;
    } else {
      inter += c;
      ++nx;
    }
  }
  EXPECT_GE(intra / double(ni) - inter / double(nx), 0.2);
}

TEST_F(DefaultSpacesTest, CoOccurringBeatsRandomInMostTriples) {
  const auto& w = *world_;
  const auto enc = train_collab_encoder(w.playlists, std::uint32_t(w.tracks.size()), 80, 1, kCollab);
  std::mt19937_64 rng(6);
  int wins = 0, trials = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto& p = w.playlists[rng() % w.playlists.size()];
    const TrackId a = p[rng() % p.size()];
    const TrackId b = p[rng() % p.size()];
    const TrackId r = TrackId(rng() % w.tracks.size());
    if (a == b || r == a) continue;
    const Vector va = enc.embed(a).vector;
    wins += cosine_similarity(va, enc.embed(b).vector) > cosine_similarity(va, enc.embed(r).vector);
    ++trials;
  }
  EXPECT_GE(double(wins) / trials, 0.8);
}

}  // namespace
}  // namespace urep::modality
