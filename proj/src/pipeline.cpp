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

#include "urep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <sstream>

#include "json_util.hpp"

namespace urep::pipeline {

using detail::json;
using experiment::kAudioModel;
using experiment::kCollabModel;
using experiment::kUserRepModel;

// Config ---------------------------------------------------------------------------

std::string PipelineConfig::to_json() const {
  return json{{"experiment", json::parse(experiment.to_json())},
              {"world_dir", world_dir ? json(world_dir->string()) : json(nullptr)},
              {"suites", suites},
              {"ablations", ablations},
              {"nrt", {{"workers", nrt_workers}, {"debounce", nrt_debounce}}},
              {"demo_requests", demo_requests}}
      .dump();
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  PipelineConfig c;
  try {
    const auto j = json::parse(text);
    if (j.contains("experiment")) {
      c.experiment = experiment::ExperimentConfig::from_json(j.at("experiment").dump());
    }
    if (j.contains("world_dir") && !j.at("world_dir").is_null()) {
      c.world_dir = j.at("world_dir").get<std::string>();
    }
    if (j.contains("suites")) c.suites = j.at("suites").get<std::vector<std::string>>();
    if (j.contains("ablations")) c.ablations = j.at("ablations").get<std::vector<std::string>>();
    if (j.contains("nrt")) {
      const auto& n = j.at("nrt");
      c.nrt_workers = n.value("workers", c.nrt_workers);
      c.nrt_debounce = n.value("debounce", c.nrt_debounce);
    }
    c.demo_requests = j.value("demo_requests", c.demo_requests);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad pipeline config: ") + e.what());
  }
  for (const auto& s : c.suites) {
    if (s != "established" && s != "coldstart" && s != "clusters" && s != "ablation") {
      throw ConfigError("unknown eval suite '" + s + "'");
    }
  }
  for (const auto& m : c.ablations) features::FeatureMask::parse(m);
  if (c.nrt_debounce < 0.0) throw ConfigError("nrt.debounce must be nonnegative");
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw IoError("config file not found: " + file.string());
  return from_json(read_text_file(file));
}

std::string PipelineConfig::fingerprint() const { return hex64(fnv1a(to_json())); }

PipelineConfig tiny_pipeline_config(std::uint64_t seed) {
  PipelineConfig c;
  c.experiment = experiment::tiny_config(seed);
  c.demo_requests = 2;
  return c;
}

// Workspace ------------------------------------------------------------------------

Workspace::Workspace(std::filesystem::path root, PipelineConfig config)
    : root_(std::move(root)), config_(std::move(config)) {}

std::filesystem::path Workspace::encoder_file(const std::string& model, std::uint64_t gen) const {
  return root_ / "encoders" / (model + ".g" + std::to_string(gen) + ".json");
}

std::filesystem::path Workspace::userrep_dir(std::uint64_t gen) const {
  return root_ / "models" / (std::string(kUserRepModel) + ".g" + std::to_string(gen));
}

std::filesystem::path Workspace::downstream_file(const std::string& task, std::uint64_t gen) const {
  return root_ / "models" / (task + ".g" + std::to_string(gen) + ".json");
}

std::filesystem::path Workspace::report_file(const std::string& suite) const {
  return root_ / "reports" / (suite + ".json");
}

std::filesystem::path Workspace::stage_file(const std::string& stage) const {
  return root_ / "stages" / (stage + ".json");
}

const synth::World& Workspace::world() {
  if (!world_) world_ = synth::load_world(world_dir());
  return *world_;
}

const synth::EventLog& Workspace::log() {
  if (!log_) log_ = synth::load_log(log_file());
  return *log_;
}

namespace {

template <typename T>
T load_typed_encoder(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw IoError("missing encoder " + file.string());
  auto e = modality::load_encoder(file);
  auto* typed = dynamic_cast<T*>(e.get());
  if (!typed) throw IoError(file.string() + " holds the wrong encoder kind");
  return std::move(*typed);
}

}  // namespace

const modality::AudioEncoder& Workspace::audio(std::uint64_t gen) {
  auto it = audio_.find(gen);
  if (it == audio_.end()) {
    it = audio_.emplace(gen, load_typed_encoder<modality::AudioEncoder>(encoder_file(kAudioModel, gen))).first;
  }
  return it->second;
}

const modality::CollabEncoder& Workspace::collab(std::uint64_t gen) {
  auto it = collab_.find(gen);
  if (it == collab_.end()) {
    it = collab_.emplace(gen, load_typed_encoder<modality::CollabEncoder>(encoder_file(kCollabModel, gen))).first;
  }
  return it->second;
}

const experiment::Context& Workspace::context(std::uint64_t audio_gen, std::uint64_t collab_gen) {
  const auto key = std::make_pair(audio_gen, collab_gen);
  auto it = contexts_.find(key);
  if (it == contexts_.end()) {
    auto ctx = std::make_unique<experiment::Context>(experiment::make_context(
        config_.experiment, world(), log(), audio(audio_gen), collab(collab_gen)));
    it = contexts_.emplace(key, std::move(ctx)).first;
  }
  return *it->second;
}

const experiment::Context& Workspace::context_for(const lineage::Pins& pins) {
  const auto a = pins.find(kAudioModel);
  const auto c = pins.find(kCollabModel);
  if (a == pins.end() || c == pins.end()) throw LineageError("pins lack an encoder batch");
  return context(a->second.generation, c->second.generation);
}

const experiment::TrainedUserRep& Workspace::userrep(std::uint64_t gen) {
  auto it = userrep_.find(gen);
  if (it == userrep_.end()) {
    const auto dir = userrep_dir(gen);
    if (!std::filesystem::exists(dir / "model.json")) {
      throw IoError("missing user representation model " + dir.string());
    }
    experiment::TrainedUserRep t;
    t.model = userrep::load_model(dir);
    if (!t.model.layout()) throw IoError(dir.string() + " has no feature layout");
    t.layout = *t.model.layout();
    if (std::filesystem::exists(dir / "loss_trace.json")) {
      t.loss_trace = json::parse(read_text_file(dir / "loss_trace.json")).get<std::vector<double>>();
    }
    it = userrep_.emplace(gen, std::move(t)).first;
  }
  return it->second;
}

const downstream::PairClassifier& Workspace::classifier(std::uint64_t gen) {
  auto it = classifiers_.find(gen);
  if (it == classifiers_.end()) {
    const auto file = downstream_file("future_listen", gen);
    if (!std::filesystem::exists(file)) throw IoError("missing classifier " + file.string());
    it = classifiers_.emplace(gen, downstream::load_classifier(file)).first;
  }
  return it->second;
}

lineage::LineageGraph& Workspace::graph() {
  if (!graph_) {
    graph_ = std::make_unique<lineage::LineageGraph>(
        std::filesystem::exists(ledger_file()) ? lineage::LineageGraph::replay(ledger_file())
                                               : lineage::LineageGraph());
    graph_->attach_ledger(ledger_file());
  }
  return *graph_;
}

serving::EmbeddingStore& Workspace::store() {
  if (!store_) {
    store_ = std::make_unique<serving::EmbeddingStore>();
    if (std::filesystem::exists(store_dir() / "store.jsonl")) store_->load_dir(store_dir());
  }
  return *store_;
}

void Workspace::save_store() { store().save(store_dir()); }

void Workspace::forget_cached() {
  world_.reset();
  log_.reset();
  audio_.clear();
  collab_.clear();
  contexts_.clear();
  userrep_.clear();
  classifiers_.clear();
  graph_.reset();
  store_.reset();
}

// Shared training helpers ----------------------------------------------------------

namespace {

std::string hash_of(const std::string& s) { return hex64(fnv1a(s)); }

void save_userrep(const Workspace& ws, const experiment::TrainedUserRep& t, std::uint64_t gen) {
  const auto dir = ws.userrep_dir(gen);
  userrep::save_model(t.model, dir);
  write_text_file(dir / "loss_trace.json", json(t.loss_trace).dump());
}

/// Future-listening classifier trained on the week before the cutoff, with
/// representations as of the start of that week.
downstream::PairClassifier train_future_listen(const experiment::Context& ctx,
                                               const experiment::TrainedUserRep& rep) {
  const SimTime start = ctx.cutoff - ctx.config.world.eval_window;
  std::vector<UserId> users;
  std::vector<eval::UserWindow> windows;
  for (UserId u : ctx.established) {
    if (ctx.world.users[u].registration_time > start) continue;
    users.push_back(u);
    windows.push_back({u, start, ctx.cutoff});
  }
  const auto set = eval::build_eval_set(ctx.by_user, windows, std::uint32_t(ctx.world.tracks.size()),
                                        derive_seed(ctx.config.seed, "future-listen-train"));
  if (set.examples.empty()) throw TrainingError("no future-listening examples before the cutoff");
  const std::vector<SimTime> as_of(users.size(), start);
  const auto reps = downstream::stack_representations(
      experiment::represent(ctx, rep, users, as_of, userrep::RepSource::kBatchInference));
  std::unordered_map<UserId, Eigen::Index> row;
  for (std::size_t i = 0; i < reps.ids.size(); ++i) row[reps.ids[i]] = Eigen::Index(i);
  downstream::PairData d;
  d.users.resize(Eigen::Index(set.examples.size()), reps.z.cols());
  d.targets.resize(Eigen::Index(set.examples.size()), ctx.space.d_audio() + ctx.space.d_collab());
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    const auto& e = set.examples[i];
    d.users.row(Eigen::Index(i)) = reps.z.row(row.at(e.user_id));
    d.targets.row(Eigen::Index(i)) = ctx.space.track_vector(e.track_id).transpose();
    d.labels.push_back(e.label);
  }
  d.user_batches = {reps.batch};
  d.target_batches = ctx.space.batches();
  auto cc = ctx.config.classifier;
  cc.seed = derive_seed(ctx.config.seed, "future-listen");
  return downstream::train_pair_classifier(d, cc);
}

/// Batch inference for every user registered by `as_of`, then drops store
/// batches the lineage graph no longer retains.
std::size_t refresh_store(Workspace& ws, const experiment::Context& ctx,
                          const experiment::TrainedUserRep& rep, SimTime as_of) {
  auto& store = ws.store();
  serving::InferenceContext ic{&ctx.world, &ctx.space, &rep.model, rep.layout};
  std::vector<UserId> all(ctx.world.users.size());
  std::iota(all.begin(), all.end(), 0);
  const auto n = serving::run_batch_inference(ic, ctx.by_user, all, as_of, store);
  auto& g = ws.graph();
  for (const auto& b : store.batches()) {
    const auto& node = g.node(b.model);
    const bool kept = (node.current && *node.current == b) || (node.legacy && *node.legacy == b);
    if (!kept) store.drop_batch(b);
  }
  ws.save_store();
  return n;
}

json read_stage(const Workspace& ws, const std::string& stage) {
  const auto f = ws.stage_file(stage);
  if (!std::filesystem::exists(f)) return json();
  try {
    return json::parse(read_text_file(f));
  } catch (const json::exception&) {
    return json();
  }
}

}  // namespace

// Stages ---------------------------------------------------------------------------

std::vector<std::string> stage_names() {
  return {"gen-data",         "train-encoders",  "assemble-features", "train-userrep",
          "register-batches", "batch-inference", "train-downstream",  "eval"};
}

namespace {

/// Stage-specific inputs folded into the fingerprint chain.
std::string stage_inputs(const PipelineConfig& c, const std::string& stage) {
  const auto j = json::parse(c.to_json());
  const auto& e = j.at("experiment");
  if (stage == "gen-data") return e.at("world").dump() + e.at("seed").dump() + j.at("world_dir").dump();
  if (stage == "train-encoders") return e.at("d_audio").dump() + e.at("d_collab").dump();
  if (stage == "assemble-features") return e.at("augment_registration").dump();
  if (stage == "train-userrep") return e.at("latent_dim").dump() + e.at("widths").dump() + e.at("train").dump();
  if (stage == "register-batches") return "";
  if (stage == "batch-inference") return j.at("nrt").dump();
  if (stage == "train-downstream") return e.at("classifier").dump();
  if (stage == "eval") {
    return j.at("suites").dump() + j.at("ablations").dump() + e.at("nmf_rank").dump() +
           e.at("nmf_iterations").dump() + e.at("cluster_sample").dump() + e.at("ndcg_k").dump() +
           e.at("random_trials").dump();
  }
  throw ConfigError("unknown stage '" + stage + "'");
}

std::map<std::string, std::string> stage_fingerprints(const PipelineConfig& c) {
  std::map<std::string, std::string> out;
  std::string prev;
  for (const auto& s : stage_names()) {
    prev = hash_of(prev + "|" + s + "|" + stage_inputs(c, s));
    out[s] = prev;
  }
  return out;
}

void stage_gen_data(Workspace& ws, json& info) {
  const auto& cfg = ws.config();
  synth::World world;
  std::optional<synth::EventLog> log;
  if (cfg.world_dir) {
    if (!std::filesystem::is_directory(*cfg.world_dir)) {
      throw IoError("world directory not found: " + cfg.world_dir->string());
    }
    world = synth::load_world(*cfg.world_dir);
    if (std::filesystem::exists(*cfg.world_dir / "log.jsonl")) log = synth::load_log(*cfg.world_dir / "log.jsonl");
  } else {
    world = experiment::generate_world(cfg.experiment);
  }
  if (!log) log = experiment::generate_log(cfg.experiment, world);
  synth::save_world(world, ws.world_dir());
  synth::save_log(*log, ws.log_file());
  info["users"] = world.users.size();
  info["tracks"] = world.tracks.size();
  info["events"] = log->size();
}

void stage_train_encoders(Workspace& ws, json& info) {
  const auto& cfg = ws.config().experiment;
  const auto& world = ws.world();
  std::filesystem::create_directories(ws.root() / "encoders");
  modality::save_encoder(experiment::train_audio(cfg, world, 1), ws.encoder_file(kAudioModel, 1));
  modality::save_encoder(experiment::train_collab(cfg, world, 1), ws.encoder_file(kCollabModel, 1));
  info["audio"] = ws.encoder_file(kAudioModel, 1).filename().string();
  info["collab"] = ws.encoder_file(kCollabModel, 1).filename().string();
}

void stage_assemble_features(Workspace& ws, json& info) {
  const auto& ctx = ws.context(1, 1);
  const auto layout = experiment::context_layout(ctx, {});
  const auto feats = experiment::training_features(ctx, layout);
  std::filesystem::create_directories(ws.features_dir());
  features::save_features(feats, layout, ws.features_dir());
  info["rows"] = feats.size();
  info["dim"] = layout.total_dim();
}

void stage_train_userrep(Workspace& ws, json& info) {
  const auto& ctx = ws.context(1, 1);
  auto [feats, layout] = features::load_features(ws.features_dir());
  for (const auto& f : feats) assert_same_batches(f.upstream_batches, ctx.space.batches());
  const auto t = experiment::train_userrep(ctx, layout, features::stack(feats), 1);
  save_userrep(ws, t, 1);
  info["epochs"] = t.loss_trace.size();
  info["first_loss"] = t.loss_trace.front();
  info["final_loss"] = t.loss_trace.back();
  info["seconds"] = t.seconds;
}

void stage_register_batches(Workspace& ws, json& info) {
  std::error_code ec;
  std::filesystem::remove(ws.ledger_file(), ec);
  std::filesystem::remove(ws.store_dir() / "store.jsonl", ec);
  ws.forget_cached();
  auto& g = ws.graph();
  g.register_model(kAudioModel, {});
  g.register_model(kCollabModel, {});
  g.register_model(kUserRepModel, {kAudioModel, kCollabModel});
  g.register_model(kDownstreamModel, {kUserRepModel, kAudioModel, kCollabModel});
  for (const char* m : {kAudioModel, kCollabModel}) {
    const auto pins = g.begin_retrain(m);
    const auto& b = std::string(m) == kAudioModel ? ws.audio(1).batch_id() : ws.collab(1).batch_id();
    g.complete_retrain(m, pins, 0.0, b.fingerprint);
  }
  const auto pins = g.begin_retrain(kUserRepModel);
  const auto& rep = ws.userrep(1);
  std::vector<BatchId> pinned{pins.at(kAudioModel), pins.at(kCollabModel)};
  assert_same_batches(rep.model.upstream_batches(), pinned);
  const auto out = g.complete_retrain(kUserRepModel, pins, ws.config().experiment.world.cutoff(),
                                      rep.model.batch_id().fingerprint);
  if (!out.completed || !(out.batch == rep.model.batch_id())) {
    throw LineageError("user representation batch does not match the registered rotation");
  }
  info["table"] = g.status_table();
}

void stage_batch_inference(Workspace& ws, json& info) {
  const auto& g = ws.graph();
  const auto& node = g.node(kUserRepModel);
  const auto& ctx = ws.context_for(node.pins);
  const auto& rep = ws.userrep(node.current->generation);
  auto& store = ws.store();
  for (const auto& b : store.batches()) store.drop_batch(b);
  serving::InferenceContext ic{&ctx.world, &ctx.space, &rep.model, rep.layout};
  std::vector<UserId> all(ctx.world.users.size());
  std::iota(all.begin(), all.end(), 0);
  const auto written = serving::run_batch_inference(ic, ctx.by_user, all, ctx.cutoff, store);

  // Events after the cutoff arrive as a stream.
  serving::NrtProcessor nrt(ic, store, {ws.config().nrt_workers, ws.config().nrt_debounce});
  for (std::size_t u = 0; u < ctx.by_user.size(); ++u) {
    synth::UserEvents seen;
    const auto& ev = ctx.by_user[u];
    if (ev.registration && *ev.registration <= ctx.cutoff) seen.registration = ev.registration;
    if (ev.onboarding_time && *ev.onboarding_time <= ctx.cutoff) {
      seen.onboarding_time = ev.onboarding_time;
      seen.onboarding = ev.onboarding;
    }
    for (const auto& l : ev.listens) {
      if (l.timestamp <= ctx.cutoff) seen.listens.push_back(l);
    }
    nrt.seed(UserId(u), seen);
  }
  std::size_t streamed = 0;
  for (const auto& e : ctx.log.events) {
    if (e.timestamp <= ctx.cutoff) continue;
    nrt.submit(serving::TriggerEvent::from(e));
    ++streamed;
  }
  nrt.drain();
  nrt.flush();
  ws.save_store();
  const auto stats = nrt.stats();
  info["batch_written"] = written;
  info["events_streamed"] = streamed;
  info["nrt_writes"] = stats.writes;
  info["store_entries"] = store.count(rep.model.batch_id());
  info["coverage"] = double(store.count(rep.model.batch_id())) / double(ctx.world.users.size());
}

void stage_train_downstream(Workspace& ws, json& info) {
  auto& g = ws.graph();
  if (g.node(kDownstreamModel).current) {
    info["note"] = "already trained; use lineage retrain to rotate";
    return;
  }
  const auto pins = g.begin_retrain(kDownstreamModel);
  try {
    const auto& ctx = ws.context_for(pins);
    const auto& rep = ws.userrep(pins.at(kUserRepModel).generation);
    const auto clf = train_future_listen(ctx, rep);
    downstream::save_classifier(clf, ws.downstream_file("future_listen", 1));
    const auto out = g.complete_retrain(kDownstreamModel, pins, ctx.cutoff,
                                        hash_of(ws.config().to_json() + "future_listen"));
    info["batch"] = out.batch.str();
  } catch (...) {
    g.abort_retrain(kDownstreamModel);
    throw;
  }
}

void stage_eval(Workspace& ws, json& info, experiment::MetricReport& metrics) {
  const auto& cfg = ws.config();
  auto has = [&](const char* s) { return std::find(cfg.suites.begin(), cfg.suites.end(), s) != cfg.suites.end(); };
  const auto& node = ws.graph().node(kUserRepModel);
  const auto& ctx = ws.context_for(node.pins);
  const auto& rep = ws.userrep(node.current->generation);
  experiment::EvalOptions opts;
  opts.established = has("established");
  opts.coldstart = has("coldstart");
  opts.clusters = has("clusters");
  metrics = experiment::evaluate(ctx, rep, opts);
  std::vector<std::string> masks = cfg.ablations;
  if (has("ablation") && masks.empty()) masks = {"onboarding", "modality", "static"};
  for (const auto& a : experiment::run_ablations(ctx, metrics, masks)) {
    for (const auto& [k, v] : a.delta) metrics["ablation." + a.mask + ".delta." + k] = v;
  }
  std::filesystem::create_directories(ws.root() / "reports");
  write_text_file(ws.report_file("metrics"), experiment::report_json(metrics, cfg.fingerprint()));
  info["metrics"] = metrics.size();
}

}  // namespace

StageReport run_stage(Workspace& ws, const std::string& stage, std::ostream* progress) {
  const auto fps = stage_fingerprints(ws.config());
  if (!fps.count(stage)) throw ConfigError("unknown stage '" + stage + "'");
  StageReport r;
  r.name = stage;
  r.fingerprint = fps.at(stage);
  if (progress) *progress << "[" << stage << "] running\n" << std::flush;
  const auto start = std::chrono::steady_clock::now();
  json info = json::object();
  experiment::MetricReport metrics;
  try {
    if (stage == "gen-data") stage_gen_data(ws, info);
    else if (stage == "train-encoders") stage_train_encoders(ws, info);
    else if (stage == "assemble-features") stage_assemble_features(ws, info);
    else if (stage == "train-userrep") stage_train_userrep(ws, info);
    else if (stage == "register-batches") stage_register_batches(ws, info);
    else if (stage == "batch-inference") stage_batch_inference(ws, info);
    else if (stage == "train-downstream") stage_train_downstream(ws, info);
    else stage_eval(ws, info, metrics);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, std::current_exception(), e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::filesystem::create_directories(ws.stage_file(stage).parent_path());
  write_text_file(ws.stage_file(stage), json{{"stage", stage},
                                             {"fingerprint", r.fingerprint},
                                             {"config_fingerprint", ws.config().fingerprint()},
                                             {"seconds", r.seconds},
                                             {"info", info}}
                                            .dump(2));
  if (progress) *progress << "[" << stage << "] done in " << r.seconds << " s\n" << std::flush;
  return r;
}

RunReport run_pipeline(const std::filesystem::path& root, const PipelineConfig& config,
                       std::ostream* progress) {
  std::filesystem::create_directories(root);
  Workspace ws(root, config);
  const auto fps = stage_fingerprints(config);
  RunReport report;
  bool rerun = false;  // once a stage reruns, every later stage reruns too
  for (const auto& stage : stage_names()) {
    const auto recorded = read_stage(ws, stage);
    if (!rerun && recorded.is_object() && recorded.value("fingerprint", "") == fps.at(stage)) {
      if (progress) *progress << "[" << stage << "] up to date, skipped\n";
      report.stages.push_back({stage, true, 0.0, fps.at(stage)});
      continue;
    }
    rerun = true;
    report.stages.push_back(run_stage(ws, stage, progress));
  }
  if (std::filesystem::exists(ws.report_file("metrics"))) {
    const auto j = json::parse(read_text_file(ws.report_file("metrics")));
    for (const auto& [k, v] : j.at("metrics").items()) report.metrics[k] = v.get<double>();
  }
  write_text_file(root / "config.json", json::parse(config.to_json()).dump(2));
  return report;
}

// Retraining -----------------------------------------------------------------------

lineage::RetrainOutcome retrain(Workspace& ws, const std::string& model, SimTime now,
                                std::ostream* progress) {
  auto& g = ws.graph();
  const auto& node = g.node(model);
  const std::uint64_t gen = node.current ? node.current->generation + 1 : 1;
  const auto pins = g.begin_retrain(model, now);
  if (progress) *progress << "retraining " << model << " as generation " << gen << "\n";
  try {
    const auto& cfg = ws.config().experiment;
    std::string fingerprint;
    if (model == kAudioModel) {
      const auto enc = experiment::train_audio(cfg, ws.world(), gen);
      modality::save_encoder(enc, ws.encoder_file(model, gen));
    } else if (model == kCollabModel) {
      const auto enc = experiment::train_collab(cfg, ws.world(), gen);
      modality::save_encoder(enc, ws.encoder_file(model, gen));
    } else if (model == kUserRepModel) {
      const auto& ctx = ws.context_for(pins);
      const auto t = experiment::train_userrep(ctx, {}, gen);
      save_userrep(ws, t, gen);
      fingerprint = t.model.batch_id().fingerprint;
    } else if (model == kDownstreamModel) {
      const auto& ctx = ws.context_for(pins);
      const auto& rep = ws.userrep(pins.at(kUserRepModel).generation);
      downstream::save_classifier(train_future_listen(ctx, rep), ws.downstream_file("future_listen", gen));
      fingerprint = hash_of(ws.config().to_json() + "future_listen" + std::to_string(gen));
    } else {
      throw NotFoundError("no trainer for model '" + model + "'");
    }
    auto out = g.complete_retrain(model, pins, now, fingerprint);
    if (out.completed && model == kUserRepModel) {
      const auto& ctx = ws.context_for(pins);
      refresh_store(ws, ctx, ws.userrep(gen), ctx.config.world.horizon);
    }
    return out;
  } catch (...) {
    if (g.node(model).status == lineage::Status::kRetraining) g.abort_retrain(model);
    throw;
  }
}

std::vector<lineage::RetrainOutcome> retrain_cascade(Workspace& ws, const std::string& model,
                                                     SimTime now, std::ostream* progress) {
  std::vector<lineage::RetrainOutcome> out;
  out.push_back(retrain(ws, model, now, progress));
  for (const auto& d : ws.graph().descendants(model)) {
    if (ws.graph().node(d).status == lineage::Status::kStale) out.push_back(retrain(ws, d, now, progress));
  }
  return out;
}

std::pair<double, BatchId> serve_request(Workspace& ws, UserId user, TrackId track) {
  const auto& g = ws.graph();
  const auto& d = g.node(kDownstreamModel);
  if (!d.current) throw LineageError("downstream model has no batch");
  const auto ub = g.serving_batch(kDownstreamModel, kUserRepModel);
  const lineage::Pins target_pins{{kAudioModel, g.serving_batch(kDownstreamModel, kAudioModel)},
                                  {kCollabModel, g.serving_batch(kDownstreamModel, kCollabModel)}};
  const auto rep = ws.store().get(user, ub);
  if (!rep) throw NotFoundError("no representation for user " + std::to_string(user) + " in " + ub.str());
  const auto& ctx = ws.context_for(target_pins);
  const auto& clf = ws.classifier(d.current->generation);
  const double p = clf.predict(rep->z, ctx.space.track_vector(track), {rep->model_batch}, ctx.space.batches());
  return {p, rep->model_batch};
}

// Rotation demo --------------------------------------------------------------------

DemoResult demo_rotation(Workspace& ws, std::ostream* progress) {
  DemoResult r;
  auto& g = ws.graph();
  for (const auto& n : g.topological_order()) {
    if (!g.node(n).current) throw LineageError("run the pipeline first: " + n + " has no batch");
  }
  const auto& world = ws.world();
  const SimTime now = world.config.horizon;
  std::vector<UserId> users;
  for (const auto& u : world.users) {
    if (users.size() >= ws.config().demo_requests) break;
    if (u.registration_time <= world.config.cutoff()) users.push_back(u.id);
  }
  auto say = [&](const std::string& line) {
    r.transcript.push_back(line);
    if (progress) *progress << line << "\n" << std::flush;
  };
  auto table = [&] {
    std::istringstream in(g.status_table());
    std::string line;
    while (std::getline(in, line)) say("    " + line);
  };
  std::size_t round = 0;
  auto requests = [&](const std::string& phase) {
    for (UserId u : users) {
      const TrackId t = TrackId((u * 7919u + round * 104729u) % world.tracks.size());
      ++r.requests;
      try {
        const auto [p, served] = serve_request(ws, u, t);
        const bool legacy = g.node(kUserRepModel).legacy && *g.node(kUserRepModel).legacy == served;
        r.legacy_served += legacy;
        std::ostringstream ss;
        ss.precision(4);
        ss << "  request user=" << u << " track=" << t << " phase=" << phase << " served="
           << served.str() << (legacy ? " (legacy)" : " (current)") << " downstream="
           << g.node(kDownstreamModel).current->str() << " p=" << p;
        say(ss.str());
      } catch (const Error& e) {
        ++r.unavailable;
        say("  request user=" + std::to_string(u) + " phase=" + phase + " UNAVAILABLE: " + e.what());
      }
    }
    ++round;
  };
  auto step = [&](const std::string& model) {
    say("begin retrain " + model);
    const auto& node = g.node(model);
    const std::uint64_t gen = node.current ? node.current->generation + 1 : 1;
    // Requests keep flowing while the model trains; simulated by serving a
    // round before the retrain is committed.
    std::string reason;
    if (!g.can_begin_retrain(model, &reason)) throw LineageError("cannot retrain " + model + ": " + reason);
    requests(model + "-training");
    const auto out = retrain(ws, model, now, nullptr);
    if (!out.completed) throw LineageError(model + " retrain invalidated: " + out.reason);
    std::string cascade;
    for (const auto& c : out.cascaded) cascade += (cascade.empty() ? "" : ", ") + c;
    say("rotated " + model + " to " + out.batch.str() + " (gen " + std::to_string(gen) + ")" +
        (cascade.empty() ? "" : "; stale: " + cascade));
    table();
  };

  say("initial state");
  table();
  requests("steady");
  step(kCollabModel);
  requests("after-collab");
  step(kUserRepModel);
  requests("after-userrep");
  step(kDownstreamModel);
  requests("final");

  r.aligned = true;
  for (const auto& n : g.topological_order()) {
    const auto& node = g.node(n);
    if (node.status != lineage::Status::kLive) r.aligned = false;
    for (const auto& [up, b] : node.pins) {
      if (!(b == *g.node(up).current)) r.aligned = false;
    }
  }
  say("requests=" + std::to_string(r.requests) + " legacy_served=" + std::to_string(r.legacy_served) +
      " unavailable=" + std::to_string(r.unavailable) + " aligned=" + (r.aligned ? "yes" : "no"));
  return r;
}

// Provenance -----------------------------------------------------------------------

std::vector<std::string> verify_workspace(Workspace& ws) {
  std::vector<std::string> problems;
  const auto fps = stage_fingerprints(ws.config());
  for (const auto& s : stage_names()) {
    const auto j = read_stage(ws, s);
    if (!j.is_object()) {
      problems.push_back("stage " + s + " has no record");
    } else if (j.value("fingerprint", "") != fps.at(s)) {
      problems.push_back("stage " + s + " was produced by a different config");
    }
  }
  if (!std::filesystem::exists(ws.ledger_file())) {
    problems.push_back("no lineage ledger");
    return problems;
  }
  auto& g = ws.graph();
  auto check = [&](const std::string& what, auto fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems.push_back(what + ": " + e.what());
    }
  };
  for (const auto& n : g.topological_order()) {
    const auto& node = g.node(n);
    for (const auto& b : {node.current, node.legacy}) {
      if (!b) continue;
      const auto& pins = b == node.current ? node.pins : node.legacy_pins;
      check(b->str(), [&] {
        if (n == kAudioModel) {
          assert_same_batch(ws.audio(b->generation).batch_id(), *b);
        } else if (n == kCollabModel) {
          assert_same_batch(ws.collab(b->generation).batch_id(), *b);
        } else if (n == kUserRepModel) {
          const auto& m = ws.userrep(b->generation).model;
          assert_same_batch(m.batch_id(), *b);
          assert_same_batches(m.upstream_batches(), {pins.at(kAudioModel), pins.at(kCollabModel)});
        } else if (n == kDownstreamModel) {
          const auto& c = ws.classifier(b->generation);
          assert_same_batches(c.user_pins(), {pins.at(kUserRepModel)});
          assert_same_batches(c.target_pins(), {pins.at(kAudioModel), pins.at(kCollabModel)});
        }
      });
    }
  }
  for (const auto& b : ws.store().batches()) {
    const auto& node = g.node(b.model);
    if (!((node.current && *node.current == b) || (node.legacy && *node.legacy == b))) {
      problems.push_back("store holds " + b.str() + " which lineage no longer retains");
    }
  }
  return problems;
}

}  // namespace urep::pipeline
