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

// Track-level modality encoders.
//
// Two spaces are produced: an audio space (a PCA projection of acoustic
// features) and a collaborative space (positive PMI over playlist
// co-occurrence, factorized to its leading spectrum). Each trained encoder is
// immutable and carries the BatchId it was assigned at training completion.

#ifndef UREP_MODALITY_HPP_
#define UREP_MODALITY_HPP_

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "urep/common.hpp"
#include "urep/synth.hpp"

namespace urep::modality {

enum class Space : std::uint8_t { kAudio = 0, kCollaborative = 1 };
const char* space_name(Space s);

struct TrackEmbedding {
  TrackId track_id = 0;
  Vector vector;
  Space space = Space::kAudio;
  BatchId batch_id;
  bool fallback = false;  // unknown track: zero vector
};

class ModalityEncoder {
 public:
  virtual ~ModalityEncoder() = default;
  virtual Space space() const = 0;
  virtual std::uint32_t dim() const = 0;
  virtual const BatchId& batch_id() const = 0;
  virtual TrackEmbedding embed(const synth::Track& track) const = 0;
};

class AudioEncoder final : public ModalityEncoder {
 public:
  AudioEncoder(Vector mean, Matrix projection, BatchId batch);

  Space space() const override { return Space::kAudio; }
  std::uint32_t dim() const override { return static_cast<std::uint32_t>(projection_.cols()); }
  const BatchId& batch_id() const override { return batch_; }
  TrackEmbedding embed(const synth::Track& track) const override;
  Vector project(const Vector& acoustic) const;

  const Vector& mean() const { return mean_; }
  /// raw_dim x dim, orthonormal columns (zero-padded when dim > raw_dim).
  const Matrix& projection() const { return projection_; }

 private:
  Vector mean_;
  Matrix projection_;
  BatchId batch_;
};

class CollabEncoder final : public ModalityEncoder {
 public:
  CollabEncoder(Matrix factors, std::vector<bool> known, BatchId batch);

  Space space() const override { return Space::kCollaborative; }
  std::uint32_t dim() const override { return static_cast<std::uint32_t>(factors_.cols()); }
  const BatchId& batch_id() const override { return batch_; }
  TrackEmbedding embed(const synth::Track& track) const override;
  TrackEmbedding embed(TrackId id) const;

  const Matrix& factors() const { return factors_; }
  const std::vector<bool>& known() const { return known_; }

 private:
  Matrix factors_;            // n_tracks x dim
  std::vector<bool> known_;   // appeared in at least one playlist
  BatchId batch_;
};

/// PCA of the track acoustic matrix. Components are ordered by explained
/// variance; each column's largest-magnitude entry is made positive.
AudioEncoder train_audio_encoder(const synth::World& world, std::uint32_t dim,
                                 std::uint64_t seed, BatchId batch);

struct CollabOptions {
  double smoothing = 0.5;        // added to observed pair counts
  double context_power = 0.75;   // context distribution smoothing
  std::uint32_t oversample = 20;
  std::uint32_t power_iterations = 6;
  bool unit_mean_norm = true;    // rescale so known tracks average norm 1
};

/// Positive PMI over symmetric playlist co-occurrence counts, factorized by a
/// truncated spectral decomposition (randomized subspace iteration).
CollabEncoder train_collab_encoder(std::span<const synth::Playlist> playlists,
                                   std::uint32_t n_tracks, std::uint32_t dim,
                                   std::uint64_t seed, BatchId batch,
                                   const CollabOptions& options = {});

/// Dense positive-PMI matrix over all tracks; test and inspection helper.
Matrix ppmi_matrix(std::span<const synth::Playlist> playlists, std::uint32_t n_tracks,
                   const CollabOptions& options = {});

/// Lookup tables for feature assembly over one catalog and one pair of encoder
/// batches. Artist vectors are means of their tracks' known embeddings.
struct TrackSpace {
  Matrix audio;                 // n_tracks x d_a
  Matrix collab;                // n_tracks x d_v
  std::vector<bool> collab_known;
  Matrix artist_collab;         // n_artists x d_v
  Matrix artist_audio;          // n_artists x d_a
  std::vector<ArtistId> track_artist;
  BatchId audio_batch;
  BatchId collab_batch;

  static TrackSpace build(const synth::World& world, const AudioEncoder& audio,
                          const CollabEncoder& collab);
  std::uint32_t d_audio() const { return static_cast<std::uint32_t>(audio.cols()); }
  std::uint32_t d_collab() const { return static_cast<std::uint32_t>(collab.cols()); }
  std::size_t n_tracks() const { return static_cast<std::size_t>(audio.rows()); }
  std::vector<BatchId> batches() const { return {audio_batch, collab_batch}; }
  /// Concatenated [audio | collab] embedding of a track.
  Vector track_vector(TrackId t) const;
};

// Artifacts: versioned JSON containers.
void save_encoder(const ModalityEncoder& encoder, const std::filesystem::path& file);
std::unique_ptr<ModalityEncoder> load_encoder(const std::filesystem::path& file);
std::string batch_to_json(const BatchId& b);
BatchId batch_from_json(const std::string& text);

}  // namespace urep::modality

#endif  // UREP_MODALITY_HPP_
