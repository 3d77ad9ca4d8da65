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

#include "urep/experiment.hpp"

#include <chrono>
#include <random>
#include <unordered_map>

#include "json_util.hpp"
#include "urep/metrics.hpp"

namespace urep::experiment {

using detail::json;

// Config ------------------------------------------------------------------------

std::string ExperimentConfig::to_json() const {
  json j{{"world", json::parse(synth::serialize_world_config(world))},
         {"seed", seed},
         {"d_audio", d_audio},
         {"d_collab", d_collab},
         {"latent_dim", latent_dim},
         {"widths", widths},
         {"train", json::parse(userrep::train_config_json(train))},
         {"classifier",
          {{"hidden", classifier.hidden},
           {"epochs", classifier.epochs},
           {"batch_size", classifier.batch_size},
           {"learning_rate", classifier.learning_rate},
           {"weight_decay", classifier.weight_decay},
           {"seed", classifier.seed}}},
         {"nmf_rank", nmf_rank},
         {"nmf_iterations", nmf_iterations},
         {"cluster_sample", cluster_sample},
         {"ndcg_k", ndcg_k},
         {"random_trials", random_trials},
         {"augment_registration", augment_registration}};
  return j.dump();
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const auto j = json::parse(text);
    if (j.contains("world")) c.world = synth::parse_world_config(j.at("world").dump());
    auto opt = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("seed", c.seed);
    opt("d_audio", c.d_audio);
    opt("d_collab", c.d_collab);
    opt("latent_dim", c.latent_dim);
    opt("widths", c.widths);
    opt("nmf_rank", c.nmf_rank);
    opt("nmf_iterations", c.nmf_iterations);
    opt("cluster_sample", c.cluster_sample);
    opt("ndcg_k", c.ndcg_k);
    opt("random_trials", c.random_trials);
    opt("augment_registration", c.augment_registration);
    if (j.contains("train")) c.train = userrep::parse_train_config(j.at("train").dump());
    if (j.contains("classifier")) {
      const auto& k = j.at("classifier");
      if (k.contains("hidden")) c.classifier.hidden = k.at("hidden").get<std::size_t>();
      if (k.contains("epochs")) c.classifier.epochs = k.at("epochs").get<std::size_t>();
      if (k.contains("batch_size")) c.classifier.batch_size = k.at("batch_size").get<std::size_t>();
      if (k.contains("learning_rate")) c.classifier.learning_rate = k.at("learning_rate").get<double>();
      if (k.contains("weight_decay")) c.classifier.weight_decay = k.at("weight_decay").get<double>();
      if (k.contains("seed")) c.classifier.seed = k.at("seed").get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.world.validate();
  c.train.validate();
  return c;
}

std::string ExperimentConfig::fingerprint() const { return hex64(fnv1a(to_json())); }

ExperimentConfig tiny_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.world.n_users = 50;
  c.world.n_tracks = 300;
  c.world.n_playlists = 60;
  c.world.n_archetypes = 4;
  c.world.n_artists = 40;
  c.world.playlist_size = 20;
  c.world.featured_artists = 3;
  c.d_audio = 8;
  c.d_collab = 8;
  c.latent_dim = 8;
  c.widths = {32, 16};
  c.train.epochs = 10;
  c.train.batch_size = 16;
  c.classifier.epochs = 5;
  c.nmf_rank = 4;
  c.nmf_iterations = 50;
  c.cluster_sample = 50;
  c.ndcg_k = 10;
  c.random_trials = 1;
  return c;
}

// Context -----------------------------------------------------------------------

Context make_context(const ExperimentConfig& config, synth::World world, synth::EventLog log,
                     modality::AudioEncoder audio, modality::CollabEncoder collab) {
  auto by_user = synth::index_by_user(log, world.users.size());
  const SimTime cutoff = config.world.cutoff();
  auto space = modality::TrackSpace::build(world, audio, collab);
  std::vector<UserId> established, cold;
  for (const auto& u : world.users) {
    (u.registration_time <= cutoff ? established : cold).push_back(u.id);
  }
  return Context{config,         std::move(world), std::move(log),         std::move(by_user),
                 std::move(audio), std::move(collab), std::move(space), cutoff,
                 std::move(established), std::move(cold)};
}

synth::World generate_world(const ExperimentConfig& config) {
  config.world.validate();
  return synth::generate_world(config.world, derive_seed(config.seed, "world"));
}

synth::EventLog generate_log(const ExperimentConfig& config, const synth::World& world) {
  return synth::generate_event_log(world, config.world.horizon, derive_seed(config.seed, "log"));
}

namespace {

// Later generations train on a bootstrap resample of the corpus, standing in
// for the refreshed data a production retrain sees. Generation 1 uses it all.
template <typename T>
std::vector<T> refreshed(const std::vector<T>& corpus, std::uint64_t generation, std::uint64_t seed) {
  if (generation <= 1 || corpus.empty()) return corpus;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::vector<T> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) out.push_back(corpus[pick(rng)]);
  return out;
}

}  // namespace

modality::AudioEncoder train_audio(const ExperimentConfig& config, const synth::World& world,
                                   std::uint64_t generation) {
  const std::string label = generation == 1 ? "audio" : "audio-" + std::to_string(generation);
  const auto seed = derive_seed(config.seed, label);
  if (generation <= 1) {
    return modality::train_audio_encoder(world, config.d_audio, seed,
                                         BatchId{kAudioModel, generation, 0.0, ""});
  }
  synth::World sample;
  sample.config = world.config;
  sample.tracks = refreshed(world.tracks, generation, seed);
  return modality::train_audio_encoder(sample, config.d_audio, seed,
                                       BatchId{kAudioModel, generation, 0.0, ""});
}

modality::CollabEncoder train_collab(const ExperimentConfig& config, const synth::World& world,
                                     std::uint64_t generation) {
  const std::string label = generation == 1 ? "collab" : "collab-" + std::to_string(generation);
  const auto seed = derive_seed(config.seed, label);
  return modality::train_collab_encoder(refreshed(world.playlists, generation, seed),
                                        std::uint32_t(world.tracks.size()), config.d_collab, seed,
                                        BatchId{kCollabModel, generation, 0.0, ""});
}

Context build_context(const ExperimentConfig& config) {
  auto world = generate_world(config);
  auto log = generate_log(config, world);
  auto audio = train_audio(config, world, 1);
  auto collab = train_collab(config, world, 1);
  return make_context(config, std::move(world), std::move(log), std::move(audio), std::move(collab));
}

features::FeatureLayout context_layout(const Context& ctx, const features::FeatureMask& mask) {
  auto layout = features::layout_for(ctx.config.world, ctx.config.d_audio, ctx.config.d_collab);
  layout.mask = mask;
  return layout;
}

namespace {

SimTime registration_as_of(const Context& ctx, UserId u) {
  return ctx.world.users[u].registration_time + ctx.config.world.onboarding_window_hours;
}

features::UserFeatureVector features_at(const Context& ctx, UserId u, SimTime as_of,
                                        const features::FeatureLayout& layout) {
  const auto snap = features::snapshot_of(ctx.world.users[u], ctx.by_user[u]);
  return features::assemble(snap, ctx.space, as_of, layout);
}

}  // namespace

std::vector<features::UserFeatureVector> training_features(const Context& ctx,
                                                          const features::FeatureLayout& layout) {
  std::vector<features::UserFeatureVector> out;
  for (UserId u : ctx.established) out.push_back(features_at(ctx, u, ctx.cutoff, layout));
  if (ctx.config.augment_registration) {
    for (UserId u : ctx.established) {
      const SimTime t = registration_as_of(ctx, u);
      if (t <= ctx.cutoff) out.push_back(features_at(ctx, u, t, layout));
    }
  }
  return out;
}

TrainedUserRep train_userrep(const Context& ctx, const features::FeatureLayout& layout,
                             const Matrix& x, std::uint64_t generation) {
  const auto start = std::chrono::steady_clock::now();
  if (std::size_t(x.cols()) != layout.total_dim()) {
    throw ShapeError("feature width " + std::to_string(x.cols()) + " != layout width " +
                     std::to_string(layout.total_dim()));
  }
  TrainedUserRep out;
  out.layout = layout;
  const std::string suffix = generation == 1 ? "" : "-" + std::to_string(generation);
  auto init = userrep::init_model(layout.total_dim(), ctx.config.latent_dim, ctx.config.widths,
                                  derive_seed(ctx.config.seed, "userrep-init" + suffix),
                                  ctx.config.train.dropout);
  auto tc = ctx.config.train;
  tc.seed = derive_seed(ctx.config.seed, "userrep-train" + suffix);
  const auto blocks = layout.blocks();
  auto result = userrep::train(std::move(init), x, tc, blocks);
  out.model = std::move(result.model);
  out.loss_trace = std::move(result.loss_trace);
  BatchId b{kUserRepModel, generation, ctx.cutoff,
            hex64(fnv1a(ctx.config.to_json() + layout.fingerprint()))};
  out.model.assign_batch(b, ctx.space.batches(), layout);
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TrainedUserRep train_userrep(const Context& ctx, const features::FeatureMask& mask,
                             std::uint64_t generation) {
  const auto layout = context_layout(ctx, mask);
  const auto feats = training_features(ctx, layout);
  return train_userrep(ctx, layout, features::stack(feats), generation);
}

std::vector<userrep::UserRepresentation> represent(const Context& ctx, const TrainedUserRep& rep,
                                                   std::span<const UserId> users,
                                                   std::span<const SimTime> as_of,
                                                   userrep::RepSource source) {
  if (users.size() != as_of.size()) throw ShapeError("one as_of per user required");
  std::vector<userrep::UserRepresentation> out;
  out.reserve(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    out.push_back(userrep::encode(rep.model, features_at(ctx, users[i], as_of[i], rep.layout), source));
  }
  return out;
}

// Evaluation --------------------------------------------------------------------

namespace {

/// Pseudo or real user vectors keyed by user.
struct UserVectors {
  std::unordered_map<UserId, Eigen::Index> row;
  Matrix z;
  std::vector<BatchId> batches;

  bool has(UserId u) const { return row.count(u) > 0; }
};

UserVectors from_reps(const std::vector<userrep::UserRepresentation>& reps) {
  const auto m = downstream::stack_representations(reps);
  UserVectors v;
  v.z = m.z;
  v.batches = {m.batch};
  for (std::size_t i = 0; i < m.ids.size(); ++i) v.row[m.ids[i]] = Eigen::Index(i);
  return v;
}

UserVectors from_optional(const std::vector<UserId>& users,
                          const std::vector<std::optional<Vector>>& vecs, const BatchId& batch) {
  UserVectors v;
  std::size_t n = 0, dim = 0;
  for (const auto& x : vecs) {
    if (x) {
      ++n;
      dim = std::size_t(x->size());
    }
  }
  v.z.resize(Eigen::Index(n), Eigen::Index(dim));
  v.batches = {batch};
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!vecs[i]) continue;
    v.z.row(r) = vecs[i]->transpose();
    v.row[users[i]] = r++;
  }
  return v;
}

struct Scored {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<UserId> users;
};

downstream::PairData pair_data(const Context& ctx, const UserVectors& uv,
                               const std::vector<eval::EvalExample>& ex) {
  downstream::PairData d;
  std::size_t n = 0;
  for (const auto& e : ex) n += uv.has(e.user_id);
  d.users.resize(Eigen::Index(n), uv.z.cols());
  d.targets.resize(Eigen::Index(n), ctx.space.d_audio() + ctx.space.d_collab());
  Eigen::Index r = 0;
  for (const auto& e : ex) {
    if (!uv.has(e.user_id)) continue;
    d.users.row(r) = uv.z.row(uv.row.at(e.user_id));
    d.targets.row(r) = ctx.space.track_vector(e.track_id).transpose();
    d.labels.push_back(e.label);
    ++r;
  }
  d.user_batches = uv.batches;
  d.target_batches = ctx.space.batches();
  return d;
}

/// Trains a pair classifier on `train` and scores `test`.
Scored classify(const Context& ctx, const UserVectors& train_vecs,
                const std::vector<eval::EvalExample>& train, const UserVectors& test_vecs,
                const std::vector<eval::EvalExample>& test) {
  auto cc = ctx.config.classifier;
  cc.seed = derive_seed(ctx.config.seed, "classifier");
  const auto clf = downstream::train_pair_classifier(pair_data(ctx, train_vecs, train), cc);
  const auto td = pair_data(ctx, test_vecs, test);
  const Vector p = clf.predict(td.users, td.targets, td.user_batches, td.target_batches);
  Scored s;
  s.scores.assign(p.data(), p.data() + p.size());
  s.labels = td.labels;
  for (const auto& e : test) {
    if (test_vecs.has(e.user_id)) s.users.push_back(e.user_id);
  }
  return s;
}

template <typename Pred>
void put_metrics(MetricReport& r, const std::string& prefix, const Scored& s, Pred keep) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!keep(s.users[i])) continue;
    scores.push_back(s.scores[i]);
    labels.push_back(s.labels[i]);
  }
  r[prefix + ".n"] = double(scores.size());
  if (scores.empty()) return;
  r[prefix + ".auc"] = metrics::auc(scores, labels);
  r[prefix + ".accuracy"] = metrics::accuracy(scores, labels);
}

bool is_train_user(const Context& ctx, UserId u) {
  return derive_seed(ctx.config.seed, "split-" + std::to_string(u)) % 2 == 0;
}

void evaluate_established(const Context& ctx, const TrainedUserRep& rep, bool baselines,
                          MetricReport& r) {
  // Users with some history; everyone is scored over the week after the cutoff.
  std::vector<UserId> users;
  for (UserId u : ctx.established) {
    if (eval::average_embedding(ctx.by_user[u].listens, ctx.space, ctx.cutoff)) users.push_back(u);
  }
  std::vector<eval::UserWindow> windows;
  for (UserId u : users) windows.push_back({u, ctx.cutoff, ctx.cutoff + ctx.config.world.eval_window});
  const auto set = eval::build_eval_set(ctx.by_user, windows, std::uint32_t(ctx.world.tracks.size()),
                                        derive_seed(ctx.config.seed, "eval-established"));
  std::vector<eval::EvalExample> train, test;
  for (const auto& e : set.examples) (is_train_user(ctx, e.user_id) ? train : test).push_back(e);
  r["established.examples"] = double(set.examples.size());
  r["established.excluded_users"] = double(set.excluded.size());
  auto all = [](UserId) { return true; };

  const std::vector<SimTime> as_of(users.size(), ctx.cutoff);
  const auto reps = from_reps(represent(ctx, rep, users, as_of, userrep::RepSource::kBatchInference));
  put_metrics(r, "established.rep", classify(ctx, reps, train, reps, test), all);
  if (!baselines) return;

  std::vector<std::optional<Vector>> avg;
  for (UserId u : users) avg.push_back(eval::average_embedding(ctx.by_user[u].listens, ctx.space, ctx.cutoff));
  const auto avg_vecs = from_optional(users, avg, eval::track_space_batch(ctx.space, "average-embeddings"));
  put_metrics(r, "established.average", classify(ctx, avg_vecs, train, avg_vecs, test), all);

  const auto counts = eval::play_count_matrix(ctx.by_user, users, std::uint32_t(ctx.world.tracks.size()),
                                              ctx.cutoff);
  const auto nmf = metrics::train_nmf(counts, ctx.config.nmf_rank, ctx.config.nmf_iterations,
                                      derive_seed(ctx.config.seed, "nmf"));
  UserVectors nmf_vecs;
  nmf_vecs.z = nmf.w;
  nmf_vecs.batches = {BatchId{"nmf", 1, ctx.cutoff, ""}};
  for (std::size_t i = 0; i < users.size(); ++i) nmf_vecs.row[users[i]] = Eigen::Index(i);
  put_metrics(r, "established.nmf", classify(ctx, nmf_vecs, train, nmf_vecs, test), all);

  // The unreduced feature vector the representation is computed from.
  const auto raw_layout = context_layout(ctx, {});
  UserVectors raw;
  raw.z.resize(Eigen::Index(users.size()), Eigen::Index(raw_layout.total_dim()));
  raw.batches = {BatchId{"raw-features", 1, ctx.cutoff, raw_layout.fingerprint()}};
  for (std::size_t i = 0; i < users.size(); ++i) {
    raw.z.row(Eigen::Index(i)) = features_at(ctx, users[i], ctx.cutoff, raw_layout).x.transpose();
    raw.row[users[i]] = Eigen::Index(i);
  }
  put_metrics(r, "established.raw_features", classify(ctx, raw, train, raw, test), all);
}

void evaluate_coldstart(const Context& ctx, const TrainedUserRep& rep, bool baselines,
                        MetricReport& r) {
  const SimTime session = ctx.config.world.first_session_hours;
  auto window_of = [&](UserId u) {
    const SimTime reg = ctx.world.users[u].registration_time;
    return eval::UserWindow{u, registration_as_of(ctx, u), reg + session};
  };
  std::vector<UserId> train_users, test_users;
  for (UserId u : ctx.established) {
    if (ctx.world.users[u].registration_time + session <= ctx.cutoff) train_users.push_back(u);
  }
  for (UserId u : ctx.cold) {
    if (ctx.world.users[u].registration_time + session <= ctx.config.world.horizon) test_users.push_back(u);
  }
  std::vector<eval::UserWindow> train_w, test_w;
  for (UserId u : train_users) train_w.push_back(window_of(u));
  for (UserId u : test_users) test_w.push_back(window_of(u));
  const auto n_tracks = std::uint32_t(ctx.world.tracks.size());
  const auto train_set = eval::build_eval_set(ctx.by_user, train_w, n_tracks,
                                              derive_seed(ctx.config.seed, "eval-cold-train"));
  const auto test_set = eval::build_eval_set(ctx.by_user, test_w, n_tracks,
                                             derive_seed(ctx.config.seed, "eval-cold-test"));

  auto completed = [&](UserId u) {
    const auto& ev = ctx.by_user[u];
    return ev.onboarding && ev.onboarding->completed && ev.onboarding_time &&
           *ev.onboarding_time <= registration_as_of(ctx, u);
  };
  auto completer = [&](UserId u) { return completed(u); };
  auto non_completer = [&](UserId u) { return !completed(u); };
  r["coldstart.test_users"] = double(test_users.size());

  auto reps_at_registration = [&](const std::vector<UserId>& users, userrep::RepSource src) {
    std::vector<SimTime> t;
    for (UserId u : users) t.push_back(registration_as_of(ctx, u));
    return from_reps(represent(ctx, rep, users, t, src));
  };
  // Each subgroup gets its own classifier trained on the matching subgroup
  // of established users, so every method in a comparison sees the same
  // training examples.
  auto subset = [](const std::vector<eval::EvalExample>& ex, auto keep) {
    std::vector<eval::EvalExample> out;
    for (const auto& e : ex) {
      if (keep(e.user_id)) out.push_back(e);
    }
    return out;
  };
  const auto train_c = subset(train_set.examples, completer);
  const auto train_n = subset(train_set.examples, non_completer);
  const auto test_c = subset(test_set.examples, completer);
  const auto test_n = subset(test_set.examples, non_completer);
  const auto train_vecs = reps_at_registration(train_users, userrep::RepSource::kBatchInference);
  const auto test_vecs = reps_at_registration(test_users, userrep::RepSource::kColdStart);
  auto all = [](UserId) { return true; };
  if (!train_c.empty() && !test_c.empty()) {
    put_metrics(r, "coldstart.completed.rep", classify(ctx, train_vecs, train_c, test_vecs, test_c), all);
  }
  if (!train_n.empty() && !test_n.empty()) {
    put_metrics(r, "coldstart.not_completed.rep", classify(ctx, train_vecs, train_n, test_vecs, test_n),
                all);
  }
  if (!baselines) return;

  const auto pop = eval::PopularityModel::build(ctx.world, ctx.by_user, ctx.cutoff);
  Scored ps;
  for (const auto& e : test_set.examples) {
    ps.scores.push_back(pop.score(ctx.world.users[e.user_id].country, e.track_id));
    ps.labels.push_back(e.label);
    ps.users.push_back(e.user_id);
  }
  put_metrics(r, "coldstart.completed.popularity", ps, completer);
  put_metrics(r, "coldstart.not_completed.popularity", ps, non_completer);

  auto onboarding_vecs = [&](const std::vector<UserId>& users) {
    std::vector<std::optional<Vector>> v;
    for (UserId u : users) {
      v.push_back(completed(u) ? eval::onboarding_artist_average(ctx.by_user[u].onboarding, ctx.space)
                               : std::nullopt);
    }
    return from_optional(users, v, eval::track_space_batch(ctx.space, "onboarding-average"));
  };
  const auto ob_train = onboarding_vecs(train_users);
  const auto ob_test = onboarding_vecs(test_users);
  if (ob_train.z.rows() > 0 && ob_test.z.rows() > 0) {
    put_metrics(r, "coldstart.completed.onboarding_average",
                classify(ctx, ob_train, train_c, ob_test, test_c), all);
  }
}

void evaluate_clusters(const Context& ctx, const TrainedUserRep& rep, bool baselines,
                       MetricReport& r) {
  const auto& users = ctx.established;
  const std::vector<SimTime> as_of(users.size(), ctx.cutoff);
  const auto reps = downstream::stack_representations(
      represent(ctx, rep, users, as_of, userrep::RepSource::kBatchInference));

  const std::map<std::string, eval::ClusterMap> heuristics{
      {"archetype", eval::archetype_clusters(ctx.world, users)},
      {"favorite_artist", eval::favorite_artist_clusters(ctx.world, ctx.by_user, users, ctx.cutoff)},
      {"artist_country", eval::artist_country_clusters(ctx.world, ctx.by_user, users, ctx.cutoff)},
      {"onboarding", eval::onboarding_clusters(ctx.by_user, users, ctx.cutoff)},
  };

  // Baseline vectors for users with history; others get a zero vector so
  // every method ranks the same population.
  Matrix avg;
  if (baselines) {
    avg = Matrix::Zero(Eigen::Index(users.size()), ctx.space.d_audio() + ctx.space.d_collab());
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (auto v = eval::average_embedding(ctx.by_user[users[i]].listens, ctx.space, ctx.cutoff)) {
        avg.row(Eigen::Index(i)) = v->transpose();
      }
    }
  }
  const auto avg_batch = eval::track_space_batch(ctx.space, "average-embeddings");
  const std::size_t k = ctx.config.ndcg_k, sample = ctx.config.cluster_sample;
  for (const auto& [name, clusters] : heuristics) {
    const auto seed = derive_seed(ctx.config.seed, "clusters-" + name);
    const std::string p = "clusters." + name;
    r[p + ".labelled"] = double(clusters.size());
    r[p + ".rep"] = eval::cluster_eval(reps.ids, reps.z, reps.batch, clusters, sample, k, seed).mean_ndcg;
    if (!baselines) continue;
    r[p + ".average"] = eval::cluster_eval(users, avg, avg_batch, clusters, sample, k, seed).mean_ndcg;
    r[p + ".random"] = eval::random_base_rate(users, clusters, ctx.config.latent_dim, sample, k,
                                              ctx.config.random_trials, seed);
  }
}

}  // namespace

MetricReport evaluate(const Context& ctx, const TrainedUserRep& rep, const EvalOptions& options) {
  MetricReport r;
  if (!rep.loss_trace.empty()) {
    r["train.first_loss"] = rep.loss_trace.front();
    r["train.final_loss"] = rep.loss_trace.back();
    r["train.epochs"] = double(rep.loss_trace.size());
  }
  if (options.established) evaluate_established(ctx, rep, options.baselines, r);
  if (options.coldstart) evaluate_coldstart(ctx, rep, options.baselines, r);
  if (options.clusters) evaluate_clusters(ctx, rep, options.baselines, r);
  return r;
}

std::string report_json(const MetricReport& report, const std::string& fingerprint) {
  json metrics = json::object();
  for (const auto& [k, v] : report) metrics[k] = v;
  return json{{"format", "urep-metric-report"},
              {"version", 1},
              {"config_fingerprint", fingerprint},
              {"metrics", metrics}}
      .dump(2);
}

std::vector<AblationResult> run_ablations(const Context& ctx, const MetricReport& full,
                                          const std::vector<std::string>& masks) {
  std::vector<AblationResult> out;
  EvalOptions opts;
  opts.baselines = false;
  opts.coldstart = false;
  for (const auto& m : masks) {
    const auto mask = features::FeatureMask::parse(m);
    AblationResult a;
    a.mask = mask.str();
    a.report = evaluate(ctx, train_userrep(ctx, mask), opts);
    for (const auto& [k, v] : a.report) {
      const auto it = full.find(k);
      if (it != full.end()) a.delta[k] = v - it->second;
    }
    out.push_back(std::move(a));
  }
  return out;
}

// Transfer tasks -------------------------------------------------------------------

Vector artist_vector(const modality::TrackSpace& space, ArtistId a) {
  if (Eigen::Index(a) >= space.artist_audio.rows()) throw NotFoundError("unknown artist " + std::to_string(a));
  Vector v(space.d_audio() + space.d_collab());
  v << space.artist_audio.row(a).transpose(), space.artist_collab.row(a).transpose();
  return v;
}

ArtistPreferenceReport artist_preference(const Context& ctx, const TrainedUserRep& rep,
                                         std::size_t per_user, double noise) {
  const auto& users = ctx.established;
  const auto follows = downstream::artist_follow_labels(ctx.world, users, per_user, noise,
                                                        derive_seed(ctx.config.seed, "follows"));
  // Raw input: the unmasked feature vector at the cutoff.
  const auto raw_layout = context_layout(ctx, {});
  std::unordered_map<UserId, Eigen::Index> row;
  Matrix raw(Eigen::Index(users.size()), Eigen::Index(raw_layout.total_dim()));
  std::vector<SimTime> as_of(users.size(), ctx.cutoff);
  for (std::size_t i = 0; i < users.size(); ++i) {
    raw.row(Eigen::Index(i)) = features_at(ctx, users[i], ctx.cutoff, raw_layout).x.transpose();
    row[users[i]] = Eigen::Index(i);
  }
  const auto reps = downstream::stack_representations(
      represent(ctx, rep, users, as_of, userrep::RepSource::kBatchInference));
  const BatchId raw_batch{"raw-features", 1, ctx.cutoff, raw_layout.fingerprint()};

  auto build = [&](const Matrix& u, const std::vector<BatchId>& ub, bool train) {
    downstream::PairData d;
    std::vector<const downstream::Follow*> keep;
    for (const auto& f : follows) {
      if (is_train_user(ctx, f.user) == train) keep.push_back(&f);
    }
    d.users.resize(Eigen::Index(keep.size()), u.cols());
    d.targets.resize(Eigen::Index(keep.size()), ctx.space.d_audio() + ctx.space.d_collab());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      d.users.row(Eigen::Index(i)) = u.row(row.at(keep[i]->user));
      d.targets.row(Eigen::Index(i)) = artist_vector(ctx.space, keep[i]->artist).transpose();
      d.labels.push_back(keep[i]->label);
    }
    d.user_batches = ub;
    d.target_batches = ctx.space.batches();
    return d;
  };
  auto cc = ctx.config.classifier;
  cc.seed = derive_seed(ctx.config.seed, "artist-preference");
  auto fit = [&](const Matrix& u, const std::vector<BatchId>& ub, double& auc, double& acc) {
    auto clf = downstream::train_pair_classifier(build(u, ub, true), cc);
    const auto test = build(u, ub, false);
    const Vector p = clf.predict(test.users, test.targets, test.user_batches, test.target_batches);
    const std::vector<double> scores(p.data(), p.data() + p.size());
    auc = metrics::auc(scores, test.labels);
    acc = metrics::accuracy(scores, test.labels);
    return std::make_pair(std::move(clf), test.labels.size());
  };
  ArtistPreferenceReport r;
  auto [clf, n] = fit(reps.z, {reps.batch}, r.rep_auc, r.rep_accuracy);
  auto raw_fit = fit(raw, {raw_batch}, r.raw_auc, r.raw_accuracy);
  r.rep_inputs = clf.input_dim();
  r.raw_inputs = raw_fit.first.input_dim();
  r.test_examples = n;
  r.classifier = std::move(clf);
  return r;
}

TwoTowerReport two_tower_task(const Context& ctx, const TrainedUserRep& rep) {
  std::vector<UserId> users;
  for (UserId u : ctx.established) {
    if (!ctx.by_user[u].listens.empty()) users.push_back(u);
  }
  std::vector<eval::UserWindow> windows;
  for (UserId u : users) windows.push_back({u, ctx.cutoff, ctx.cutoff + ctx.config.world.eval_window});
  const auto n_tracks = std::uint32_t(ctx.world.tracks.size());
  const auto set = eval::build_eval_set(ctx.by_user, windows, n_tracks,
                                        derive_seed(ctx.config.seed, "eval-two-tower"));
  const std::vector<SimTime> as_of(users.size(), ctx.cutoff);
  const auto reps = downstream::stack_representations(
      represent(ctx, rep, users, as_of, userrep::RepSource::kBatchInference));
  std::unordered_map<UserId, std::size_t> row;
  for (std::size_t i = 0; i < reps.ids.size(); ++i) row[reps.ids[i]] = i;
  Matrix items(Eigen::Index(n_tracks), ctx.space.d_audio() + ctx.space.d_collab());
  for (TrackId t = 0; t < n_tracks; ++t) items.row(t) = ctx.space.track_vector(t).transpose();

  std::vector<downstream::Interaction> train, test;
  for (const auto& e : set.examples) {
    (is_train_user(ctx, e.user_id) ? train : test).push_back({row.at(e.user_id), e.track_id, e.label});
  }
  if (train.empty() || test.empty()) throw TrainingError("two-tower task has no examples");
  downstream::TwoTowerConfig tc;
  tc.seed = derive_seed(ctx.config.seed, "two-tower");
  TwoTowerReport r;
  r.model = downstream::train_two_tower(reps.z, {reps.batch}, items, ctx.space.batches(), train, tc);

  const Matrix uv = r.model.user_vectors(reps.z, {reps.batch});
  const Matrix iv = r.model.item_vectors(items, ctx.space.batches());
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& it : test) {
    scores.push_back(uv.row(Eigen::Index(it.user_row)).dot(iv.row(Eigen::Index(it.item_row))));
    labels.push_back(it.label);
  }
  r.auc = metrics::auc(scores, labels);
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  std::vector<bool> seen(users.size(), false);
  for (const auto& it : test) seen[it.user_row] = true;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!seen[i]) continue;
    const Vector s = iv * uv.row(Eigen::Index(i)).transpose();
    const auto arch = ctx.world.users[reps.ids[i]].archetype_id;
    for (TrackId t = 0; t < n_tracks; ++t) {
      if (ctx.world.tracks[t].archetype_id == arch) {
        in += s[t];
        ++n_in;
      } else {
        out += s[t];
        ++n_out;
      }
    }
  }
  r.in_archetype_score = n_in ? in / double(n_in) : 0.0;
  r.out_archetype_score = n_out ? out / double(n_out) : 0.0;
  return r;
}

}  // namespace urep::experiment
