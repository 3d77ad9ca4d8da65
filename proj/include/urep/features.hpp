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

// Autoencoder input assembly.
//
// Layout order is fixed:
//   [country | device | activity(h1..hH) | audio(h1..hH) | collab(h1..hH) |
//    onboarding artist | onboarding languages]
// Every block that is zero because data is missing (or masked for an
// ablation) is flagged in `imputed`.

#ifndef UREP_FEATURES_HPP_
#define UREP_FEATURES_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urep/common.hpp"
#include "urep/modality.hpp"
#include "urep/synth.hpp"

namespace urep::features {

/// Blocks removed (zeroed and flagged) for ablation runs.
struct FeatureMask {
  bool onboarding = false;
  bool modality = false;
  bool static_features = false;

  bool any() const { return onboarding || modality || static_features; }
  /// Parses a comma list of {onboarding, modality, static}; empty is no mask.
  static FeatureMask parse(const std::string& names);
  std::string str() const;
};

enum class BlockKind : std::uint8_t {
  kCountry,
  kDevice,
  kActivity,
  kAudio,
  kCollab,
  kOnboardArtist,
  kOnboardLanguage,
};

struct BlockSpan {
  BlockKind kind;
  int horizon;  // index into horizons for per-horizon blocks, else -1
  std::size_t offset;
  std::size_t width;
  std::string name;
};

struct FeatureLayout {
  std::vector<SimTime> horizons{kWeek, kMonth, 6.0 * kMonth};
  std::uint32_t d_audio = 80;
  std::uint32_t d_collab = 80;
  std::uint32_t n_countries = 10;  // vocabulary; one extra OTHER slot
  std::uint32_t n_devices = 4;     // vocabulary; one extra OTHER slot
  std::uint32_t n_languages = 6;
  double play_count_scale = 1000.0;
  SimTime onboard_window = 90.0 * kDay;
  FeatureMask mask;

  void validate() const;
  std::size_t total_dim() const;
  std::size_t country_width() const { return n_countries + 1; }
  std::size_t device_width() const { return n_devices + 1; }
  std::size_t activity_width() const { return horizons.size(); }
  std::vector<BlockSpan> blocks() const;
  std::string fingerprint() const;
  std::string to_json() const;
  static FeatureLayout from_json(const std::string& text);
};

FeatureLayout layout_for(const synth::WorldConfig& world, std::uint32_t d_audio,
                         std::uint32_t d_collab);

struct UserProfile {
  UserId id = 0;
  std::uint32_t country = 0;
  std::uint32_t device = 0;
  SimTime registration_time = 0.0;
};

/// Everything feature assembly needs about one user. Listens after `as_of`
/// are ignored, so a snapshot may reference a longer history.
struct UserSnapshot {
  UserProfile profile;
  std::optional<synth::OnboardingRecord> onboarding;
  std::optional<SimTime> onboarding_time;
  std::span<const synth::Listen> listens;
};

UserSnapshot snapshot_of(const synth::User& user, const synth::UserEvents& events);

struct UserFeatureVector {
  UserId user_id = 0;
  Vector x;
  std::vector<bool> imputed;  // one flag per layout block
  SimTime as_of = 0.0;
  std::vector<BatchId> upstream_batches;  // audio, collaborative
};

struct HistoryBlocks {
  std::vector<Vector> audio;   // per horizon
  std::vector<Vector> collab;  // per horizon
  std::vector<bool> audio_imputed;
  std::vector<bool> collab_imputed;
  std::vector<std::size_t> play_counts;  // listens per horizon
};

/// Per-horizon arithmetic means over listens in (as_of - h, as_of]. Tracks
/// without a collaborative embedding are left out of the collaborative mean.
HistoryBlocks aggregate_history(std::span<const synth::Listen> listens,
                                const modality::TrackSpace& space, SimTime as_of,
                                const FeatureLayout& layout);

/// Country one-hot, device one-hot, then log(1+n)/log(1+scale) per horizon.
Vector encode_demographics(const UserProfile& profile, std::span<const std::size_t> play_counts,
                           const FeatureLayout& layout);

struct OnboardingBlocks {
  Vector artist;
  Vector languages;
  bool artist_imputed = true;
  bool languages_imputed = true;
};

/// Absent or incomplete records give zero, imputed blocks.
OnboardingBlocks encode_onboarding(const std::optional<synth::OnboardingRecord>& record,
                                   const modality::TrackSpace& space,
                                   const FeatureLayout& layout);

UserFeatureVector assemble(const UserSnapshot& snapshot, const modality::TrackSpace& space,
                           SimTime as_of, const FeatureLayout& layout);

/// Stacks feature vectors row-wise.
Matrix stack(std::span<const UserFeatureVector> features);

void save_features(std::span<const UserFeatureVector> features, const FeatureLayout& layout,
                   const std::filesystem::path& dir);
std::pair<std::vector<UserFeatureVector>, FeatureLayout> load_features(
    const std::filesystem::path& dir);

}  // namespace urep::features

#endif  // UREP_FEATURES_HPP_
