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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace urep::synth {

using json = nlohmann::ordered_json;

namespace {

using Rng = std::mt19937_64;

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

Vector random_direction(std::uint32_t dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = n(rng);
  const double norm = v.norm();
  return norm > 0 ? Vector(v / norm) : random_direction(dim, rng);
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1]");
  }
}

}  // namespace

void WorldConfig::validate() const {
  if (n_users == 0 || n_tracks == 0 || n_playlists == 0 || n_archetypes == 0 ||
      n_artists == 0 || n_languages == 0 || n_countries == 0 ||
      n_devices == 0) {
    throw ConfigError("world sizes must all be >= 1");
  }
  if (acoustic_dim < 2) throw ConfigError("acoustic_dim must be >= 2");
  if (n_archetypes > n_tracks) {
    throw ConfigError("more archetypes than tracks");
  }
  if (n_archetypes > n_artists) {
    throw ConfigError("more archetypes than artists");
  }
  if (playlist_size < 2) throw ConfigError("playlist_size must be >= 2");
  if (n_favorites == 0 || onboarding_picks == 0 || featured_artists == 0) {
    throw ConfigError("favorite/onboarding counts must be >= 1");
  }
  check_prob(playlist_p_in, "playlist_p_in");
  check_prob(playlist_focus_share, "playlist_focus_share");
  check_prob(listen_p_in, "listen_p_in");
  check_prob(favorite_share, "favorite_share");
  check_prob(language_share, "language_share");
  check_prob(home_country_bias, "home_country_bias");
  check_prob(home_device_bias, "home_device_bias");
  check_prob(local_artist_bias, "local_artist_bias");
  check_prob(home_language_bias, "home_language_bias");
  check_prob(cold_start_fraction, "cold_start_fraction");
  check_prob(onboarding_completion, "onboarding_completion");
  if (mean_daily_listens < 0 || first_session_listens < 0 ||
      activity_sigma < 0 || favorite_turnover_days <= 0) {
    throw ConfigError("activity parameters must be nonnegative");
  }
  if (eval_window <= first_session_hours) {
    throw ConfigError("eval_window must exceed the first-session length");
  }
  if (horizon <= eval_window) throw ConfigError("horizon must exceed eval_window");
  if (onboarding_window_hours < 0 ||
      onboarding_window_hours >= first_session_hours) {
    throw ConfigError("onboarding window must be shorter than the first session");
  }
}

void World::reindex() {
  tracks_by_artist.assign(artists.size(), {});
  tracks_by_archetype.assign(archetypes.size(), {});
  for (const auto& t : tracks) {
    tracks_by_artist.at(t.artist_id).push_back(t.id);
    tracks_by_archetype.at(t.archetype_id).push_back(t.id);
  }
}

std::vector<ArtistId> World::featured_artists(std::uint32_t a) const {
  const auto& pref = archetypes.at(a).preferred_artists;
  const auto n = std::min<std::size_t>(pref.size(), config.featured_artists);
  return {pref.begin(), pref.begin() + static_cast<std::ptrdiff_t>(n)};
}

World generate_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  World w;
  w.config = config;
  w.seed = seed;
  const auto D = config.acoustic_dim;

  // Archetypes: centroids on the unit sphere with a minimum angle.
  {
    Rng rng(derive_seed(seed, "archetypes"));
    const double min_cos =
        std::cos(config.min_centroid_angle_deg * std::numbers::pi / 180.0);
    for (std::uint32_t a = 0; a < config.n_archetypes; ++a) {
      Archetype arch;
      arch.id = a;
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) {
          throw ConfigError("cannot place archetype centroids at the requested angle");
        }
        Vector c = random_direction(D, rng);
        bool ok = std::all_of(w.archetypes.begin(), w.archetypes.end(),
                              [&](const Archetype& o) { return c.dot(o.centroid) <= min_cos; });
        if (ok) {
          arch.centroid = std::move(c);
          break;
        }
      }
      std::vector<std::uint32_t> countries(config.n_countries);
      std::iota(countries.begin(), countries.end(), 0u);
      std::shuffle(countries.begin(), countries.end(), rng);
      countries.resize(std::min<std::size_t>(2, countries.size()));
      arch.home_countries = countries;
      arch.home_device =
          std::uniform_int_distribution<std::uint32_t>(0, config.n_devices - 1)(rng);
      arch.preferred_languages.push_back(a % config.n_languages);
      if (config.n_languages > 1) {
        std::uint32_t second = a % config.n_languages;
        while (second == a % config.n_languages) {
          second = std::uniform_int_distribution<std::uint32_t>(
              0, config.n_languages - 1)(rng);
        }
        arch.preferred_languages.push_back(second);
      }
      w.archetypes.push_back(std::move(arch));
    }
  }

  // Artists, round-robin over archetypes so every archetype owns some.
  std::vector<Vector> artist_offset;
  std::vector<Vector> language_signature;
  {
    Rng rng(derive_seed(seed, "artists"));
    for (std::uint32_t l = 0; l < config.n_languages; ++l) {
      language_signature.push_back(random_direction(D, rng) * config.language_spread);
    }
    for (ArtistId id = 0; id < config.n_artists; ++id) {
      Artist artist;
      artist.id = id;
      artist.archetype_id = id % config.n_archetypes;
      const auto& arch = w.archetypes[artist.archetype_id];
      artist.country =
          uniform01(rng) < config.home_country_bias
              ? pick(arch.home_countries, rng)
              : std::uniform_int_distribution<std::uint32_t>(0, config.n_countries - 1)(rng);
      artist.language =
          uniform01(rng) < config.home_language_bias
              ? pick(arch.preferred_languages, rng)
              : std::uniform_int_distribution<std::uint32_t>(0, config.n_languages - 1)(rng);
      artist_offset.push_back(random_direction(D, rng) * config.artist_spread);
      w.archetypes[artist.archetype_id].preferred_artists.push_back(id);
      w.artists.push_back(artist);
    }
  }

  // Tracks: archetype round-robin, artists spread evenly inside an archetype.
  {
    Rng rng(derive_seed(seed, "tracks"));
    std::normal_distribution<double> noise(0.0, config.track_noise / std::sqrt(double(D)));
    std::vector<std::uint32_t> seen(config.n_archetypes, 0);
    for (TrackId id = 0; id < config.n_tracks; ++id) {
      Track t;
      t.id = id;
      t.archetype_id = id % config.n_archetypes;
      const auto& pref = w.archetypes[t.archetype_id].preferred_artists;
      t.artist_id = pref[seen[t.archetype_id]++ % pref.size()];
      const auto& artist = w.artists[t.artist_id];
      t.acoustic_features = w.archetypes[t.archetype_id].centroid +
                            artist_offset[t.artist_id] +
                            language_signature[artist.language];
      for (std::uint32_t i = 0; i < D; ++i) t.acoustic_features[i] += noise(rng);
      w.tracks.push_back(std::move(t));
    }
  }
  w.reindex();

  // Users.
  {
    Rng rng(derive_seed(seed, "users"));
    const auto n_cold = static_cast<std::uint32_t>(
        std::llround(config.cold_start_fraction * config.n_users));
    const SimTime cutoff = config.cutoff();
    const SimTime cold_span = config.horizon - config.first_session_hours - cutoff;
    const double sigma = config.activity_sigma;
    std::lognormal_distribution<double> activity(
        std::log(std::max(config.mean_daily_listens, 1e-12)) - 0.5 * sigma * sigma, sigma);
    for (UserId id = 0; id < config.n_users; ++id) {
      User u;
      u.id = id;
      u.archetype_id =
          std::uniform_int_distribution<std::uint32_t>(0, config.n_archetypes - 1)(rng);
      const auto& arch = w.archetypes[u.archetype_id];
      u.country =
          uniform01(rng) < config.home_country_bias
              ? pick(arch.home_countries, rng)
              : std::uniform_int_distribution<std::uint32_t>(0, config.n_countries - 1)(rng);
      u.device =
          uniform01(rng) < config.home_device_bias
              ? arch.home_device
              : std::uniform_int_distribution<std::uint32_t>(0, config.n_devices - 1)(rng);
      u.cold_start = id >= config.n_users - n_cold;
      u.registration_time = u.cold_start ? cutoff + (1.0 - uniform01(rng)) * cold_span
                                         : uniform01(rng) * cutoff;
      u.activity = config.mean_daily_listens > 0 ? activity(rng) : 0.0;

      const std::uint32_t primary =
          uniform01(rng) < config.home_language_bias
              ? pick(arch.preferred_languages, rng)
              : std::uniform_int_distribution<std::uint32_t>(0, config.n_languages - 1)(rng);
      u.languages.push_back(primary);
      if (config.n_languages > 1 && uniform01(rng) < 0.3) {
        std::uint32_t extra = primary;
        while (extra == primary) {
          extra = std::uniform_int_distribution<std::uint32_t>(0, config.n_languages - 1)(rng);
        }
        u.languages.push_back(extra);
      }
      std::sort(u.languages.begin(), u.languages.end());

      std::vector<ArtistId> local;
      for (ArtistId a : arch.preferred_artists) {
        if (w.artists[a].country == u.country) local.push_back(a);
      }
      const auto fav_target =
          std::min<std::size_t>(config.n_favorites, arch.preferred_artists.size());
      for (int attempt = 0; u.initial_favorites.size() < fav_target && attempt < 1000;
           ++attempt) {
        ArtistId a = (!local.empty() && uniform01(rng) < config.local_artist_bias)
                         ? pick(local, rng)
                         : pick(arch.preferred_artists, rng);
        if (std::find(u.initial_favorites.begin(), u.initial_favorites.end(), a) ==
            u.initial_favorites.end()) {
          u.initial_favorites.push_back(a);
        }
      }

      const double r = uniform01(rng);
      if (r < config.onboarding_completion) {
        OnboardingRecord rec;
        auto featured = w.featured_artists(u.archetype_id);
        std::shuffle(featured.begin(), featured.end(), rng);
        featured.resize(std::min<std::size_t>(featured.size(), config.onboarding_picks));
        std::sort(featured.begin(), featured.end());
        rec.selected_artists = featured;
        rec.selected_languages = u.languages;
        rec.completed = true;
        // Users pick artists they like: the picks seed their favourites.
        for (std::size_t i = 0; i < featured.size() && i < u.initial_favorites.size(); ++i) {
          if (std::find(u.initial_favorites.begin(), u.initial_favorites.end(),
                        featured[i]) == u.initial_favorites.end()) {
            u.initial_favorites[i] = featured[i];
          }
        }
        u.onboarding = std::move(rec);
      } else if (r < config.onboarding_completion +
                         0.5 * (1.0 - config.onboarding_completion)) {
        // Abandoned part-way: a language at most, never completed.
        OnboardingRecord rec;
        if (uniform01(rng) < 0.5) rec.selected_languages.push_back(primary);
        rec.completed = false;
        u.onboarding = std::move(rec);
      }
      w.users.push_back(std::move(u));
    }
  }

  // Playlists: archetype-themed with a few focus artists.
  {
    Rng rng(derive_seed(seed, "playlists"));
    for (std::uint32_t p = 0; p < config.n_playlists; ++p) {
      const auto a =
          std::uniform_int_distribution<std::uint32_t>(0, config.n_archetypes - 1)(rng);
      const auto& arch = w.archetypes[a];
      std::vector<ArtistId> focus;
      for (int i = 0; i < 3; ++i) focus.push_back(pick(arch.preferred_artists, rng));
      Playlist pl;
      for (int attempt = 0;
           pl.size() < config.playlist_size && attempt < int(config.playlist_size) * 20;
           ++attempt) {
        TrackId t;
        if (config.n_archetypes == 1 || uniform01(rng) < config.playlist_p_in) {
          if (uniform01(rng) < config.playlist_focus_share) {
            const auto& at = w.tracks_by_artist[pick(focus, rng)];
            if (at.empty()) continue;
            t = pick(at, rng);
          } else {
            t = pick(w.tracks_by_archetype[a], rng);
          }
        } else {
          do {
            t = std::uniform_int_distribution<TrackId>(0, config.n_tracks - 1)(rng);
          } while (w.tracks[t].archetype_id == a);
        }
        if (std::find(pl.begin(), pl.end(), t) == pl.end()) pl.push_back(t);
      }
      if (pl.size() < 2) {
        // Tiny catalogs: fall back to any two distinct tracks.
        pl = {0, std::min<TrackId>(1, config.n_tracks - 1)};
      }
      w.playlists.push_back(std::move(pl));
    }
  }
  return w;
}

// Event log --------------------------------------------------------------------

bool Event::operator==(const Event& o) const {
  if (kind != o.kind || user != o.user || timestamp != o.timestamp) return false;
  if (kind == EventKind::kListen) return track == o.track;
  if (kind == EventKind::kOnboarding) {
    if (record.has_value() != o.record.has_value()) return false;
    if (!record) return true;
    return record->selected_artists == o.record->selected_artists &&
           record->selected_languages == o.record->selected_languages &&
           record->completed == o.record->completed;
  }
  return true;
}

bool event_before(const Event& a, const Event& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  if (a.user != b.user) return a.user < b.user;
  if (a.kind != b.kind) return a.kind < b.kind;
  return a.track < b.track;
}

EventLog generate_event_log(const World& world, SimTime horizon, std::uint64_t seed) {
  if (world.users.empty() || world.tracks.empty()) {
    throw ConfigError("cannot generate events for an empty world");
  }
  const auto& cfg = world.config;
  if (horizon < 6.0 * kMonth + cfg.eval_window) {
    throw ConfigError("horizon must cover the longest aggregation window plus the evaluation window");
  }

  // archetype -> language -> tracks
  std::vector<std::vector<std::vector<TrackId>>> by_lang(
      world.archetypes.size(), std::vector<std::vector<TrackId>>(cfg.n_languages));
  for (const auto& t : world.tracks) {
    by_lang[t.archetype_id][world.artists[t.artist_id].language].push_back(t.id);
  }

  EventLog log;
  for (const auto& u : world.users) {
    Rng rng(derive_seed(seed, "listen-user-" + std::to_string(u.id)));
    if (u.registration_time > horizon) continue;
    log.events.push_back({EventKind::kRegistration, u.id, u.registration_time, 0, std::nullopt});
    if (u.onboarding) {
      const SimTime t = u.registration_time + uniform01(rng) * cfg.onboarding_window_hours;
      if (t <= horizon) log.events.push_back({EventKind::kOnboarding, u.id, t, 0, u.onboarding});
    }

    std::vector<SimTime> times;
    if (u.activity > 0.0) {
      std::poisson_distribution<int> session(cfg.first_session_listens * u.activity);
      const int n_first = session(rng);
      const SimTime start = u.registration_time + cfg.onboarding_window_hours;
      const SimTime span = cfg.first_session_hours - cfg.onboarding_window_hours;
      for (int i = 0; i < n_first; ++i) times.push_back(start + uniform01(rng) * span);
      std::exponential_distribution<double> gap(u.activity / kDay);
      for (SimTime t = u.registration_time + gap(rng); t <= horizon; t += gap(rng)) {
        times.push_back(t);
      }
    }
    std::sort(times.begin(), times.end());

    const auto& arch_tracks = world.tracks_by_archetype[u.archetype_id];
    std::vector<TrackId> lang_tracks;
    for (auto l : u.languages) {
      const auto& v = by_lang[u.archetype_id][l];
      lang_tracks.insert(lang_tracks.end(), v.begin(), v.end());
    }
    const auto& arch_artists = world.archetypes[u.archetype_id].preferred_artists;
    auto favorites = u.initial_favorites;
    std::exponential_distribution<double> turnover(1.0 / (cfg.favorite_turnover_days * kDay));
    SimTime next_turnover = u.registration_time + turnover(rng);

    for (SimTime t : times) {
      if (t > horizon) break;
      while (next_turnover <= t) {
        if (!favorites.empty() && arch_artists.size() > favorites.size()) {
          ArtistId repl = pick(arch_artists, rng);
          while (std::find(favorites.begin(), favorites.end(), repl) != favorites.end()) {
            repl = pick(arch_artists, rng);
          }
          std::uniform_int_distribution<std::size_t> slot(0, favorites.size() - 1);
          favorites[slot(rng)] = repl;
        }
        next_turnover += turnover(rng);
      }
      TrackId track;
      if (world.archetypes.size() == 1 || uniform01(rng) < cfg.listen_p_in) {
        const double v = uniform01(rng);
        if (v < cfg.favorite_share && !favorites.empty() &&
            !world.tracks_by_artist[favorites.front()].empty()) {
          const auto& ft = world.tracks_by_artist[pick(favorites, rng)];
          track = ft.empty() ? pick(arch_tracks, rng) : pick(ft, rng);
        } else if (!lang_tracks.empty() && uniform01(rng) < cfg.language_share) {
          track = pick(lang_tracks, rng);
        } else {
          track = pick(arch_tracks, rng);
        }
      } else {
        do {
          track = std::uniform_int_distribution<TrackId>(0, TrackId(world.tracks.size() - 1))(rng);
        } while (world.tracks[track].archetype_id == u.archetype_id);
      }
      log.events.push_back({EventKind::kListen, u.id, t, track, std::nullopt});
    }
  }
  std::sort(log.events.begin(), log.events.end(), event_before);
  return log;
}

std::pair<EventLog, EventLog> split_log(const EventLog& log, SimTime cutoff) {
  EventLog history, future;
  for (const auto& e : log.events) {
    (e.timestamp <= cutoff ? history : future).events.push_back(e);
  }
  return {std::move(history), std::move(future)};
}

std::vector<UserEvents> index_by_user(const EventLog& log, std::size_t n_users) {
  std::vector<UserEvents> out(n_users);
  for (const auto& e : log.events) {
    if (e.user >= n_users) throw NotFoundError("event for unknown user " + std::to_string(e.user));
    auto& ue = out[e.user];
    switch (e.kind) {
      case EventKind::kRegistration:
        ue.registration = e.timestamp;
        break;
      case EventKind::kOnboarding:
        ue.onboarding_time = e.timestamp;
        ue.onboarding = e.record;
        break;
      case EventKind::kListen:
        ue.listens.push_back({e.timestamp, e.track});
        break;
    }
  }
  return out;
}

// Serialization ----------------------------------------------------------------

namespace {

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector json_vec(const json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[Eigen::Index(i)] = a[i].get<double>();
  return v;
}

json record_json(const OnboardingRecord& r) {
  return json{{"artists", r.selected_artists},
              {"languages", r.selected_languages},
              {"completed", r.completed}};
}

OnboardingRecord json_record(const json& j) {
  OnboardingRecord r;
  r.selected_artists = j.at("artists").get<std::vector<ArtistId>>();
  r.selected_languages = j.at("languages").get<std::vector<std::uint32_t>>();
  r.completed = j.at("completed").get<bool>();
  return r;
}

const char* kind_name(EventKind k) {
  switch (k) {
    case EventKind::kRegistration: return "registration";
    case EventKind::kOnboarding: return "onboarding";
    case EventKind::kListen: return "listen";
  }
  return "?";
}

json config_json(const WorldConfig& c) {
  return json{{"n_users", c.n_users},
              {"n_tracks", c.n_tracks},
              {"n_playlists", c.n_playlists},
              {"n_archetypes", c.n_archetypes},
              {"n_artists", c.n_artists},
              {"n_languages", c.n_languages},
              {"n_countries", c.n_countries},
              {"n_devices", c.n_devices},
              {"acoustic_dim", c.acoustic_dim},
              {"min_centroid_angle_deg", c.min_centroid_angle_deg},
              {"artist_spread", c.artist_spread},
              {"language_spread", c.language_spread},
              {"track_noise", c.track_noise},
              {"playlist_size", c.playlist_size},
              {"playlist_p_in", c.playlist_p_in},
              {"playlist_focus_share", c.playlist_focus_share},
              {"listen_p_in", c.listen_p_in},
              {"favorite_share", c.favorite_share},
              {"language_share", c.language_share},
              {"n_favorites", c.n_favorites},
              {"favorite_turnover_days", c.favorite_turnover_days},
              {"mean_daily_listens", c.mean_daily_listens},
              {"activity_sigma", c.activity_sigma},
              {"first_session_listens", c.first_session_listens},
              {"first_session_hours", c.first_session_hours},
              {"home_country_bias", c.home_country_bias},
              {"home_device_bias", c.home_device_bias},
              {"local_artist_bias", c.local_artist_bias},
              {"home_language_bias", c.home_language_bias},
              {"cold_start_fraction", c.cold_start_fraction},
              {"onboarding_completion", c.onboarding_completion},
              {"onboarding_window_hours", c.onboarding_window_hours},
              {"featured_artists", c.featured_artists},
              {"onboarding_picks", c.onboarding_picks},
              {"horizon", c.horizon},
              {"eval_window", c.eval_window}};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

WorldConfig json_config(const json& j) {
  WorldConfig c;
  read_opt(j, "n_users", c.n_users);
  read_opt(j, "n_tracks", c.n_tracks);
  read_opt(j, "n_playlists", c.n_playlists);
  read_opt(j, "n_archetypes", c.n_archetypes);
  read_opt(j, "n_artists", c.n_artists);
  read_opt(j, "n_languages", c.n_languages);
  read_opt(j, "n_countries", c.n_countries);
  read_opt(j, "n_devices", c.n_devices);
  read_opt(j, "acoustic_dim", c.acoustic_dim);
  read_opt(j, "min_centroid_angle_deg", c.min_centroid_angle_deg);
  read_opt(j, "artist_spread", c.artist_spread);
  read_opt(j, "language_spread", c.language_spread);
  read_opt(j, "track_noise", c.track_noise);
  read_opt(j, "playlist_size", c.playlist_size);
  read_opt(j, "playlist_p_in", c.playlist_p_in);
  read_opt(j, "playlist_focus_share", c.playlist_focus_share);
  read_opt(j, "listen_p_in", c.listen_p_in);
  read_opt(j, "favorite_share", c.favorite_share);
  read_opt(j, "language_share", c.language_share);
  read_opt(j, "n_favorites", c.n_favorites);
  read_opt(j, "favorite_turnover_days", c.favorite_turnover_days);
  read_opt(j, "mean_daily_listens", c.mean_daily_listens);
  read_opt(j, "activity_sigma", c.activity_sigma);
  read_opt(j, "first_session_listens", c.first_session_listens);
  read_opt(j, "first_session_hours", c.first_session_hours);
  read_opt(j, "home_country_bias", c.home_country_bias);
  read_opt(j, "home_device_bias", c.home_device_bias);
  read_opt(j, "local_artist_bias", c.local_artist_bias);
  read_opt(j, "home_language_bias", c.home_language_bias);
  read_opt(j, "cold_start_fraction", c.cold_start_fraction);
  read_opt(j, "onboarding_completion", c.onboarding_completion);
  read_opt(j, "onboarding_window_hours", c.onboarding_window_hours);
  read_opt(j, "featured_artists", c.featured_artists);
  read_opt(j, "onboarding_picks", c.onboarding_picks);
  read_opt(j, "horizon", c.horizon);
  read_opt(j, "eval_window", c.eval_window);
  return c;
}

json event_json(const Event& e) {
  json j{{"kind", kind_name(e.kind)}, {"user", e.user}, {"t", e.timestamp}};
  if (e.kind == EventKind::kListen) j["track"] = e.track;
  if (e.kind == EventKind::kOnboarding && e.record) j["record"] = record_json(*e.record);
  return j;
}

Event json_event(const json& j) {
  Event e;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "registration") {
    e.kind = EventKind::kRegistration;
  } else if (kind == "onboarding") {
    e.kind = EventKind::kOnboarding;
  } else if (kind == "listen") {
    e.kind = EventKind::kListen;
  } else {
    throw IoError("unknown event kind '" + kind + "'");
  }
  e.user = j.at("user").get<UserId>();
  e.timestamp = j.at("t").get<double>();
  if (e.kind == EventKind::kListen) e.track = j.at("track").get<TrackId>();
  if (e.kind == EventKind::kOnboarding && j.contains("record")) {
    e.record = json_record(j.at("record"));
  }
  return e;
}

template <typename F>
void for_each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    f(json::parse(line));
  }
}

}  // namespace

std::string serialize_world_config(const WorldConfig& config) {
  return config_json(config).dump(2);
}

WorldConfig parse_world_config(const std::string& json_text) {
  try {
    const auto j = json::parse(json_text);
    return json_config(j.contains("world") ? j.at("world") : j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad world config: ") + e.what());
  }
}

std::string serialize_world(const World& w) {
  std::string out;
  auto emit = [&out](const json& j) {
    out += j.dump();
    out += '\n';
  };
  emit(json{{"type", "world"}, {"seed", w.seed}, {"config", config_json(w.config)}});
  for (const auto& a : w.archetypes) {
    emit(json{{"type", "archetype"},
              {"id", a.id},
              {"centroid", vec_json(a.centroid)},
              {"preferred_artists", a.preferred_artists},
              {"preferred_languages", a.preferred_languages},
              {"home_countries", a.home_countries},
              {"home_device", a.home_device}});
  }
  for (const auto& a : w.artists) {
    emit(json{{"type", "artist"},
              {"id", a.id},
              {"archetype", a.archetype_id},
              {"country", a.country},
              {"language", a.language}});
  }
  for (const auto& t : w.tracks) {
    emit(json{{"type", "track"},
              {"id", t.id},
              {"artist", t.artist_id},
              {"archetype", t.archetype_id},
              {"acoustic", vec_json(t.acoustic_features)}});
  }
  for (const auto& u : w.users) {
    json j{{"type", "user"},
           {"id", u.id},
           {"archetype", u.archetype_id},
           {"country", u.country},
           {"device", u.device},
           {"registration", u.registration_time},
           {"cold_start", u.cold_start},
           {"activity", u.activity},
           {"favorites", u.initial_favorites},
           {"languages", u.languages}};
    j["onboarding"] = u.onboarding ? record_json(*u.onboarding) : json(nullptr);
    emit(j);
  }
  for (std::size_t p = 0; p < w.playlists.size(); ++p) {
    emit(json{{"type", "playlist"}, {"id", p}, {"tracks", w.playlists[p]}});
  }
  return out;
}

World parse_world(const std::string& text) {
  World w;
  try {
    for_each_line(text, [&w](const json& j) {
      const auto type = j.at("type").get<std::string>();
      if (type == "world") {
        w.seed = j.at("seed").get<std::uint64_t>();
        w.config = json_config(j.at("config"));
      } else if (type == "archetype") {
        Archetype a;
        a.id = j.at("id").get<std::uint32_t>();
        a.centroid = json_vec(j.at("centroid"));
        a.preferred_artists = j.at("preferred_artists").get<std::vector<ArtistId>>();
        a.preferred_languages = j.at("preferred_languages").get<std::vector<std::uint32_t>>();
        a.home_countries = j.at("home_countries").get<std::vector<std::uint32_t>>();
        a.home_device = j.at("home_device").get<std::uint32_t>();
        w.archetypes.push_back(std::move(a));
      } else if (type == "artist") {
        w.artists.push_back({j.at("id").get<ArtistId>(), j.at("archetype").get<std::uint32_t>(),
                             j.at("country").get<std::uint32_t>(),
                             j.at("language").get<std::uint32_t>()});
      } else if (type == "track") {
        w.tracks.push_back({j.at("id").get<TrackId>(), j.at("artist").get<ArtistId>(),
                            j.at("archetype").get<std::uint32_t>(), json_vec(j.at("acoustic"))});
      } else if (type == "user") {
        User u;
        u.id = j.at("id").get<UserId>();
        u.archetype_id = j.at("archetype").get<std::uint32_t>();
        u.country = j.at("country").get<std::uint32_t>();
        u.device = j.at("device").get<std::uint32_t>();
        u.registration_time = j.at("registration").get<double>();
        u.cold_start = j.at("cold_start").get<bool>();
        u.activity = j.at("activity").get<double>();
        u.initial_favorites = j.at("favorites").get<std::vector<ArtistId>>();
        u.languages = j.at("languages").get<std::vector<std::uint32_t>>();
        if (!j.at("onboarding").is_null()) u.onboarding = json_record(j.at("onboarding"));
        w.users.push_back(std::move(u));
      } else if (type == "playlist") {
        w.playlists.push_back(j.at("tracks").get<Playlist>());
      } else {
        throw IoError("unknown world record type '" + type + "'");
      }
    });
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed world file: ") + e.what());
  }
  w.reindex();
  return w;
}

std::string serialize_event(const Event& e) { return event_json(e).dump(); }

Event parse_event(const std::string& line) {
  try {
    return json_event(json::parse(line));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed event: ") + e.what());
  }
}

std::string serialize_log(const EventLog& log) {
  std::string out;
  for (const auto& e : log.events) {
    out += event_json(e).dump();
    out += '\n';
  }
  return out;
}

EventLog parse_log(const std::string& text) {
  EventLog log;
  try {
    for_each_line(text, [&log](const json& j) { log.events.push_back(json_event(j)); });
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed event log: ") + e.what());
  }
  return log;
}

void save_world(const World& world, const std::filesystem::path& dir) {
  write_text_file(dir / "world.jsonl", serialize_world(world));
}

World load_world(const std::filesystem::path& dir) {
  const auto file = dir / "world.jsonl";
  if (!std::filesystem::exists(file)) throw IoError("no world at " + dir.string());
  return parse_world(read_text_file(file));
}

void save_log(const EventLog& log, const std::filesystem::path& file) {
  write_text_file(file, serialize_log(log));
}

EventLog load_log(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw IoError("no event log at " + file.string());
  return parse_log(read_text_file(file));
}

}  // namespace urep::synth
