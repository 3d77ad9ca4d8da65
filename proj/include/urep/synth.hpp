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

// Synthetic listening world with planted taste archetypes.
//
// Every user belongs to one archetype. Archetypes own a set of artists,
// tracks (acoustically near the archetype centroid), home countries, a home
// device and preferred languages. Users listen mostly inside their archetype,
// favour a small rotating set of artists, and new users may complete an
// onboarding flow picking featured artists of their archetype. This gives
// every evaluation a known ground truth.

#ifndef UREP_SYNTH_HPP_
#define UREP_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "urep/common.hpp"

namespace urep::synth {

struct WorldConfig {
  std::uint32_t n_users = 2000;
  std::uint32_t n_tracks = 5000;
  std::uint32_t n_playlists = 300;
  std::uint32_t n_archetypes = 8;
  std::uint32_t n_artists = 240;
  std::uint32_t n_languages = 6;
  std::uint32_t n_countries = 10;
  std::uint32_t n_devices = 4;
  std::uint32_t acoustic_dim = 96;

  double min_centroid_angle_deg = 60.0;
  double artist_spread = 0.45;    // norm of an artist's acoustic offset
  double language_spread = 0.3;   // norm of a language's vocal signature
  double track_noise = 0.25;      // expected norm of per-track noise

  std::uint32_t playlist_size = 50;
  double playlist_p_in = 0.95;
  double playlist_focus_share = 0.5;  // slots drawn from the focus artists

  double listen_p_in = 0.85;
  double favorite_share = 0.55;     // in-archetype listens from favourites
  double language_share = 0.4;      // other in-archetype listens in own language
  std::uint32_t n_favorites = 3;
  double favorite_turnover_days = 21.0;
  double mean_daily_listens = 1.0;
  double activity_sigma = 0.5;      // log-normal spread of activity levels
  double first_session_listens = 7.5;  // per unit of daily activity
  double first_session_hours = 4.0;

  double home_country_bias = 0.6;
  double home_device_bias = 0.8;
  double local_artist_bias = 0.6;
  double home_language_bias = 0.7;

  double cold_start_fraction = 0.1;
  double onboarding_completion = 0.6;
  double onboarding_window_hours = 0.25;
  std::uint32_t featured_artists = 4;   // per archetype, shown at onboarding
  std::uint32_t onboarding_picks = 2;

  SimTime horizon = 270.0 * kDay;        // 9 simulated months
  SimTime eval_window = 7.0 * kDay;

  /// History/evaluation boundary: the last `eval_window` of the horizon.
  SimTime cutoff() const { return horizon - eval_window; }
  void validate() const;
};

struct Archetype {
  std::uint32_t id = 0;
  Vector centroid;
  std::vector<ArtistId> preferred_artists;
  std::vector<std::uint32_t> preferred_languages;
  std::vector<std::uint32_t> home_countries;
  std::uint32_t home_device = 0;
};

struct Artist {
  ArtistId id = 0;
  std::uint32_t archetype_id = 0;
  std::uint32_t country = 0;
  std::uint32_t language = 0;
};

struct Track {
  TrackId id = 0;
  ArtistId artist_id = 0;
  std::uint32_t archetype_id = 0;
  Vector acoustic_features;
};

struct OnboardingRecord {
  std::vector<ArtistId> selected_artists;
  std::vector<std::uint32_t> selected_languages;
  bool completed = false;
};

struct User {
  UserId id = 0;
  std::uint32_t archetype_id = 0;
  std::uint32_t country = 0;
  std::uint32_t device = 0;
  SimTime registration_time = 0.0;
  bool cold_start = false;
  double activity = 0.0;  // expected listens per simulated day
  std::optional<OnboardingRecord> onboarding;
  std::vector<ArtistId> initial_favorites;
  std::vector<std::uint32_t> languages;
};

using Playlist = std::vector<TrackId>;

struct World {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::vector<Archetype> archetypes;
  std::vector<Artist> artists;
  std::vector<Track> tracks;
  std::vector<User> users;
  std::vector<Playlist> playlists;

  // Derived indices, rebuilt by `reindex`.
  std::vector<std::vector<TrackId>> tracks_by_artist;
  std::vector<std::vector<TrackId>> tracks_by_archetype;

  void reindex();
  /// Featured artists shown to users of archetype `a` during onboarding.
  std::vector<ArtistId> featured_artists(std::uint32_t a) const;
};

// Event log ------------------------------------------------------------------

enum class EventKind : std::uint8_t { kRegistration = 0, kOnboarding = 1, kListen = 2 };

struct Event {
  EventKind kind = EventKind::kListen;
  UserId user = 0;
  SimTime timestamp = 0.0;
  TrackId track = 0;                       // kListen only
  std::optional<OnboardingRecord> record;  // kOnboarding only

  bool operator==(const Event& o) const;
};

/// Total order used for the global log: time, then user, then kind, then track.
bool event_before(const Event& a, const Event& b);

struct EventLog {
  std::vector<Event> events;
  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

World generate_world(const WorldConfig& config, std::uint64_t seed);
EventLog generate_event_log(const World& world, SimTime horizon,
                            std::uint64_t seed);

/// history holds events with timestamp <= cutoff, future the rest.
std::pair<EventLog, EventLog> split_log(const EventLog& log, SimTime cutoff);

// Per-user view over a log -----------------------------------------------------

struct Listen {
  SimTime timestamp = 0.0;
  TrackId track = 0;
};

struct UserEvents {
  std::optional<SimTime> registration;
  std::optional<SimTime> onboarding_time;
  std::optional<OnboardingRecord> onboarding;
  std::vector<Listen> listens;  // nondecreasing timestamps
};

/// Groups a log by user. Users without events get an empty entry.
std::vector<UserEvents> index_by_user(const EventLog& log, std::size_t n_users);

// Serialization (line-delimited JSON; schema in docs/formats.md) -------------

std::string serialize_world(const World& world);
World parse_world(const std::string& text);
std::string serialize_log(const EventLog& log);
EventLog parse_log(const std::string& text);
std::string serialize_event(const Event& e);
Event parse_event(const std::string& line);

void save_world(const World& world, const std::filesystem::path& dir);
World load_world(const std::filesystem::path& dir);
void save_log(const EventLog& log, const std::filesystem::path& file);
EventLog load_log(const std::filesystem::path& file);

WorldConfig parse_world_config(const std::string& json_text);
std::string serialize_world_config(const WorldConfig& config);

}  // namespace urep::synth

#endif  // UREP_SYNTH_HPP_
