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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json_util.hpp"

namespace urep::features {

using detail::json;

FeatureMask FeatureMask::parse(const std::string& names) {
  FeatureMask m;
  std::stringstream ss(names);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    if (item == "onboarding") {
      m.onboarding = true;
    } else if (item == "modality") {
      m.modality = true;
    } else if (item == "static") {
      m.static_features = true;
    } else {
      throw ConfigError("unknown feature block '" + item + "'");
    }
  }
  return m;
}

std::string FeatureMask::str() const {
  std::string s;
  auto add = [&s](const char* n) {
    if (!s.empty()) s += ",";
    s += n;
  };
  if (onboarding) add("onboarding");
  if (modality) add("modality");
  if (static_features) add("static");
  return s;
}

void FeatureLayout::validate() const {
  if (horizons.empty()) throw LayoutError("layout needs at least one horizon");
  if (!std::is_sorted(horizons.begin(), horizons.end()) || horizons.front() <= 0) {
    throw LayoutError("horizons must be positive and ascending");
  }
  if (d_audio < 1 || d_collab < 1 || n_languages < 1) throw LayoutError("block widths must be >= 1");
  if (play_count_scale <= 0) throw LayoutError("play_count_scale must be positive");
}

std::size_t FeatureLayout::total_dim() const {
  return horizons.size() * (d_audio + d_collab) + country_width() + device_width() +
         activity_width() + d_collab + n_languages;
}

std::vector<BlockSpan> FeatureLayout::blocks() const {
  std::vector<BlockSpan> out;
  std::size_t off = 0;
  auto add = [&](BlockKind k, int h, std::size_t w, std::string name) {
    out.push_back({k, h, off, w, std::move(name)});
    off += w;
  };
  add(BlockKind::kCountry, -1, country_width(), "country");
  add(BlockKind::kDevice, -1, device_width(), "device");
  add(BlockKind::kActivity, -1, activity_width(), "activity");
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    add(BlockKind::kAudio, int(h), d_audio, "audio_h" + std::to_string(h));
  }
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    add(BlockKind::kCollab, int(h), d_collab, "collab_h" + std::to_string(h));
  }
  add(BlockKind::kOnboardArtist, -1, d_collab, "onboard_artist");
  add(BlockKind::kOnboardLanguage, -1, n_languages, "onboard_language");
  return out;
}

std::string FeatureLayout::to_json() const {
  return json{{"horizons", horizons},
              {"d_audio", d_audio},
              {"d_collab", d_collab},
              {"n_countries", n_countries},
              {"n_devices", n_devices},
              {"n_languages", n_languages},
              {"play_count_scale", play_count_scale},
              {"onboard_window", onboard_window},
              {"mask", mask.str()}}
      .dump();
}

FeatureLayout FeatureLayout::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    FeatureLayout l;
    l.horizons = j.at("horizons").get<std::vector<double>>();
    l.d_audio = j.at("d_audio").get<std::uint32_t>();
    l.d_collab = j.at("d_collab").get<std::uint32_t>();
    l.n_countries = j.at("n_countries").get<std::uint32_t>();
    l.n_devices = j.at("n_devices").get<std::uint32_t>();
    l.n_languages = j.at("n_languages").get<std::uint32_t>();
    l.play_count_scale = j.at("play_count_scale").get<double>();
    l.onboard_window = j.at("onboard_window").get<double>();
    l.mask = FeatureMask::parse(j.at("mask").get<std::string>());
    l.validate();
    return l;
  } catch (const json::exception& e) {
    throw LayoutError(std::string("malformed layout: ") + e.what());
  }
}

std::string FeatureLayout::fingerprint() const { return hex64(fnv1a(to_json())); }

FeatureLayout layout_for(const synth::WorldConfig& world, std::uint32_t d_audio,
                         std::uint32_t d_collab) {
  FeatureLayout l;
  l.d_audio = d_audio;
  l.d_collab = d_collab;
  l.n_countries = world.n_countries;
  l.n_devices = world.n_devices;
  l.n_languages = world.n_languages;
  return l;
}

UserSnapshot snapshot_of(const synth::User& user, const synth::UserEvents& events) {
  UserSnapshot s;
  s.profile = {user.id, user.country, user.device, user.registration_time};
  s.onboarding = events.onboarding;
  s.onboarding_time = events.onboarding_time;
  s.listens = events.listens;
  return s;
}

HistoryBlocks aggregate_history(std::span<const synth::Listen> listens,
                                const modality::TrackSpace& space, SimTime as_of,
                                const FeatureLayout& layout) {
  const std::size_t H = layout.horizons.size();
  HistoryBlocks out;
  out.audio.assign(H, Vector::Zero(space.d_audio()));
  out.collab.assign(H, Vector::Zero(space.d_collab()));
  out.play_counts.assign(H, 0);
  std::vector<std::size_t> collab_n(H, 0);
  for (const auto& l : listens) {
    if (l.timestamp > as_of) continue;
    if (l.track >= space.n_tracks()) throw NotFoundError("unknown track " + std::to_string(l.track));
    const SimTime age = as_of - l.timestamp;
    for (std::size_t h = 0; h < H; ++h) {
      if (age >= layout.horizons[h]) continue;
      out.audio[h] += space.audio.row(l.track).transpose();
      ++out.play_counts[h];
      if (space.collab_known[l.track]) {
        out.collab[h] += space.collab.row(l.track).transpose();
        ++collab_n[h];
      }
    }
  }
  out.audio_imputed.resize(H);
  out.collab_imputed.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    out.audio_imputed[h] = out.play_counts[h] == 0;
    out.collab_imputed[h] = collab_n[h] == 0;
    if (out.play_counts[h] > 0) out.audio[h] /= double(out.play_counts[h]);
    if (collab_n[h] > 0) out.collab[h] /= double(collab_n[h]);
  }
  return out;
}

Vector encode_demographics(const UserProfile& profile, std::span<const std::size_t> play_counts,
                           const FeatureLayout& layout) {
  if (play_counts.size() != layout.activity_width()) {
    throw LayoutError("activity width mismatch");
  }
  Vector c = Vector::Zero(Eigen::Index(layout.country_width() + layout.device_width() +
                                       layout.activity_width()));
  const std::size_t country = std::min<std::size_t>(profile.country, layout.n_countries);
  const std::size_t device = std::min<std::size_t>(profile.device, layout.n_devices);
  c[Eigen::Index(country)] = 1.0;
  c[Eigen::Index(layout.country_width() + device)] = 1.0;
  const double norm = std::log1p(layout.play_count_scale);
  const std::size_t base = layout.country_width() + layout.device_width();
  for (std::size_t h = 0; h < play_counts.size(); ++h) {
    c[Eigen::Index(base + h)] = std::log1p(double(play_counts[h])) / norm;
  }
  return c;
}

OnboardingBlocks encode_onboarding(const std::optional<synth::OnboardingRecord>& record,
                                   const modality::TrackSpace& space,
                                   const FeatureLayout& layout) {
  OnboardingBlocks b;
  b.artist = Vector::Zero(layout.d_collab);
  b.languages = Vector::Zero(layout.n_languages);
  if (!record || !record->completed) return b;
  if (!record->selected_artists.empty()) {
    for (ArtistId a : record->selected_artists) {
      if (Eigen::Index(a) >= space.artist_collab.rows()) {
        throw NotFoundError("unknown onboarding artist " + std::to_string(a));
      }
      b.artist += space.artist_collab.row(a).transpose();
    }
    b.artist /= double(record->selected_artists.size());
    b.artist_imputed = false;
  }
  for (auto l : record->selected_languages) {
    if (l >= layout.n_languages) throw NotFoundError("unknown language " + std::to_string(l));
    b.languages[l] = 1.0;
    b.languages_imputed = false;
  }
  return b;
}

UserFeatureVector assemble(const UserSnapshot& snapshot, const modality::TrackSpace& space,
                           SimTime as_of, const FeatureLayout& layout) {
  if (space.d_audio() != layout.d_audio || space.d_collab() != layout.d_collab) {
    throw LayoutError("encoder dims (" + std::to_string(space.d_audio()) + ", " +
                      std::to_string(space.d_collab()) + ") do not match layout (" +
                      std::to_string(layout.d_audio) + ", " + std::to_string(layout.d_collab) +
                      ")");
  }
  const auto blocks = layout.blocks();
  UserFeatureVector f;
  f.user_id = snapshot.profile.id;
  f.as_of = as_of;
  f.upstream_batches = space.batches();
  f.x = Vector::Zero(Eigen::Index(layout.total_dim()));
  f.imputed.assign(blocks.size(), false);

  const auto hist = aggregate_history(snapshot.listens, space, as_of, layout);
  const Vector demo = encode_demographics(snapshot.profile, hist.play_counts, layout);

  const bool onboarding_active =
      snapshot.onboarding_time && *snapshot.onboarding_time <= as_of &&
      as_of - snapshot.profile.registration_time <= layout.onboard_window;
  const auto onboard = encode_onboarding(
      onboarding_active ? snapshot.onboarding : std::nullopt, space, layout);

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    auto seg = f.x.segment(Eigen::Index(b.offset), Eigen::Index(b.width));
    bool masked = false;
    switch (b.kind) {
      case BlockKind::kCountry:
        seg = demo.segment(0, Eigen::Index(b.width));
        masked = layout.mask.static_features;
        break;
      case BlockKind::kDevice:
        seg = demo.segment(Eigen::Index(layout.country_width()), Eigen::Index(b.width));
        masked = layout.mask.static_features;
        break;
      case BlockKind::kActivity:
        seg = demo.tail(Eigen::Index(b.width));
        break;
      case BlockKind::kAudio:
        seg = hist.audio[std::size_t(b.horizon)];
        f.imputed[i] = hist.audio_imputed[std::size_t(b.horizon)];
        masked = layout.mask.modality;
        break;
      case BlockKind::kCollab:
        seg = hist.collab[std::size_t(b.horizon)];
        f.imputed[i] = hist.collab_imputed[std::size_t(b.horizon)];
        masked = layout.mask.modality;
        break;
      case BlockKind::kOnboardArtist:
        seg = onboard.artist;
        f.imputed[i] = onboard.artist_imputed;
        masked = layout.mask.onboarding;
        break;
      case BlockKind::kOnboardLanguage:
        seg = onboard.languages;
        f.imputed[i] = onboard.languages_imputed;
        masked = layout.mask.onboarding;
        break;
    }
    if (masked) {
      seg.setZero();
      f.imputed[i] = true;
    }
  }
  return f;
}

Matrix stack(std::span<const UserFeatureVector> features) {
  if (features.empty()) return Matrix();
  Matrix X(Eigen::Index(features.size()), features.front().x.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].x.size() != X.cols()) throw ShapeError("feature rows disagree on width");
    X.row(Eigen::Index(i)) = features[i].x.transpose();
  }
  return X;
}

void save_features(std::span<const UserFeatureVector> features, const FeatureLayout& layout,
                   const std::filesystem::path& dir) {
  write_text_file(dir / "layout.json", layout.to_json());
  std::string out;
  for (const auto& f : features) {
    json up = json::array();
    for (const auto& b : f.upstream_batches) up.push_back(detail::to_json(b));
    std::vector<int> imputed(f.imputed.begin(), f.imputed.end());
    out += json{{"user", f.user_id},
                {"as_of", f.as_of},
                {"upstream", up},
                {"imputed", imputed},
                {"x", detail::to_json(f.x)}}
               .dump();
    out += '\n';
  }
  write_text_file(dir / "features.jsonl", out);
}

std::pair<std::vector<UserFeatureVector>, FeatureLayout> load_features(
    const std::filesystem::path& dir) {
  auto layout = FeatureLayout::from_json(read_text_file(dir / "layout.json"));
  std::vector<UserFeatureVector> out;
  std::istringstream in(read_text_file(dir / "features.jsonl"));
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      UserFeatureVector f;
      f.user_id = j.at("user").get<UserId>();
      f.as_of = j.at("as_of").get<double>();
      for (const auto& b : j.at("upstream")) f.upstream_batches.push_back(detail::batch_from(b));
      const auto imp = j.at("imputed").get<std::vector<int>>();
      f.imputed.assign(imp.begin(), imp.end());
      f.x = detail::vector_from(j.at("x"));
      if (std::size_t(f.x.size()) != layout.total_dim()) {
        throw LayoutError("feature row width does not match layout");
      }
      out.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed feature file: ") + e.what());
  }
  return {std::move(out), std::move(layout)};
}

}  // namespace urep::features
