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

#include "urep/serving.hpp"

#include <algorithm>
#include <sstream>

#include "json_util.hpp"

namespace urep::serving {

using detail::json;

// Store ---------------------------------------------------------------------------

bool EmbeddingStore::put(const UserRepresentation& rep) {
  if (!rep.model_batch.valid()) throw BatchConsistencyError("representation has no model batch");
  const Key key{rep.model_batch.model, rep.model_batch.generation};
  std::unique_lock lock(mu_);
  batch_ids_.try_emplace(key, rep.model_batch);
  auto& entries = entries_[key];
  const auto it = entries.find(rep.user_id);
  if (it != entries.end() && it->second.as_of > rep.as_of) return false;
  entries.insert_or_assign(rep.user_id, rep);
  return true;
}

std::optional<UserRepresentation> EmbeddingStore::get(UserId user, const BatchId& batch) const {
  std::shared_lock lock(mu_);
  const auto b = entries_.find({batch.model, batch.generation});
  if (b == entries_.end()) return std::nullopt;
  const auto it = b->second.find(user);
  if (it == b->second.end()) return std::nullopt;
  return it->second;
}

std::optional<SimTime> EmbeddingStore::as_of(UserId user, const BatchId& batch) const {
  std::shared_lock lock(mu_);
  const auto b = entries_.find({batch.model, batch.generation});
  if (b == entries_.end()) return std::nullopt;
  const auto it = b->second.find(user);
  if (it == b->second.end()) return std::nullopt;
  return it->second.as_of;
}

std::vector<BatchId> EmbeddingStore::batches() const {
  std::shared_lock lock(mu_);
  std::vector<BatchId> out;
  for (const auto& [k, b] : batch_ids_) out.push_back(b);
  return out;
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mu_);
  std::size_t n = 0;
  for (const auto& [k, e] : entries_) n += e.size();
  return n;
}

std::size_t EmbeddingStore::count(const BatchId& batch) const {
  std::shared_lock lock(mu_);
  const auto b = entries_.find({batch.model, batch.generation});
  return b == entries_.end() ? 0 : b->second.size();
}

void EmbeddingStore::drop_batch(const BatchId& batch) {
  std::unique_lock lock(mu_);
  entries_.erase({batch.model, batch.generation});
  batch_ids_.erase({batch.model, batch.generation});
}

std::vector<UserRepresentation> EmbeddingStore::snapshot(const BatchId& batch) const {
  std::vector<UserRepresentation> out;
  {
    std::shared_lock lock(mu_);
    const auto b = entries_.find({batch.model, batch.generation});
    if (b == entries_.end()) return out;
    out.reserve(b->second.size());
    for (const auto& [u, r] : b->second) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
  return out;
}

std::string EmbeddingStore::serialize() const {
  std::ostringstream ss;
  for (const auto& b : batches()) {
    for (const auto& r : snapshot(b)) {
      ss << json{{"user", r.user_id},
                 {"batch", detail::to_json(r.model_batch)},
                 {"as_of", r.as_of},
                 {"source", userrep::source_name(r.source)},
                 {"z", detail::to_json(r.z)}}
                .dump()
         << '\n';
    }
  }
  return ss.str();
}

void EmbeddingStore::load(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      UserRepresentation r;
      r.user_id = j.at("user").get<UserId>();
      r.model_batch = detail::batch_from(j.at("batch"));
      r.as_of = j.at("as_of").get<double>();
      r.source = userrep::source_from_name(j.at("source").get<std::string>());
      r.z = detail::vector_from(j.at("z"));
      put(r);
    } catch (const json::exception& e) {
      throw ConfigError("store line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void EmbeddingStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "store.jsonl", serialize());
}

void EmbeddingStore::load_dir(const std::filesystem::path& dir) {
  load(read_text_file(dir / "store.jsonl"));
}

// Batch policy ---------------------------------------------------------------------

BatchPolicy BatchPolicy::parse(const std::string& text) {
  BatchPolicy p;
  if (text == "current") return p;
  if (text == "legacy") {
    p.kind = Kind::kLegacy;
    return p;
  }
  if (text.rfind("consumer:", 0) == 0 && text.size() > 9) {
    p.kind = Kind::kConsumer;
    p.consumer = text.substr(9);
    return p;
  }
  if (text.rfind("generation:", 0) == 0) {
    try {
      std::size_t used = 0;
      const auto g = std::stoull(text.substr(11), &used);
      if (used == text.size() - 11 && g > 0) {
        p.kind = Kind::kExact;
        p.generation = g;
        return p;
      }
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown batch policy '" + text + "'");
}

std::string BatchPolicy::str() const {
  switch (kind) {
    case Kind::kCurrent:
      return "current";
    case Kind::kLegacy:
      return "legacy";
    case Kind::kConsumer:
      return "consumer:" + consumer;
    case Kind::kExact:
      return "generation:" + std::to_string(generation);
  }
  return "?";
}

BatchId resolve_batch(const EmbeddingStore& store, const std::string& model,
                      const BatchPolicy& policy, const lineage::LineageGraph* graph) {
  switch (policy.kind) {
    case BatchPolicy::Kind::kExact:
      return BatchId{model, policy.generation, 0.0, ""};
    case BatchPolicy::Kind::kConsumer:
      if (!graph) throw ConfigError("policy " + policy.str() + " needs the lineage graph");
      return graph->serving_batch(policy.consumer, model);
    case BatchPolicy::Kind::kCurrent:
    case BatchPolicy::Kind::kLegacy: {
      const bool legacy = policy.kind == BatchPolicy::Kind::kLegacy;
      if (graph && graph->has(model)) return graph->resolve(model, legacy);
      std::vector<BatchId> held;
      for (const auto& b : store.batches()) {
        if (b.model == model) held.push_back(b);
      }
      // batches() is ascending by generation.
      const std::size_t need = legacy ? 2 : 1;
      if (held.size() < need) {
        throw NotFoundError("store holds no " + policy.str() + " batch of " + model);
      }
      return held[held.size() - need];
    }
  }
  throw ConfigError("bad batch policy");
}

UserRepresentation get_representation(const EmbeddingStore& store, UserId user,
                                      const std::string& model, const BatchPolicy& policy,
                                      const lineage::LineageGraph* graph) {
  const BatchId batch = resolve_batch(store, model, policy, graph);
  auto rep = store.get(user, batch);
  if (!rep) {
    throw NotFoundError("no representation for user " + std::to_string(user) + " in " + batch.str());
  }
  return *rep;
}

// Events ---------------------------------------------------------------------------

const char* trigger_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::kRegistration:
      return "registration";
    case TriggerKind::kOnboardingCompleted:
      return "onboarding_completed";
    case TriggerKind::kListenActivity:
      return "listen_activity";
  }
  return "unknown";
}

TriggerEvent TriggerEvent::from(const synth::Event& e) {
  TriggerEvent t;
  t.user = e.user;
  t.timestamp = e.timestamp;
  switch (e.kind) {
    case synth::EventKind::kRegistration:
      t.kind = TriggerKind::kRegistration;
      break;
    case synth::EventKind::kOnboarding:
      t.kind = TriggerKind::kOnboardingCompleted;
      t.record = e.record;
      break;
    case synth::EventKind::kListen:
      t.kind = TriggerKind::kListenActivity;
      t.track = e.track;
      break;
  }
  return t;
}

synth::Event TriggerEvent::to_event() const {
  synth::Event e;
  e.user = user;
  e.timestamp = timestamp;
  switch (kind) {
    case TriggerKind::kRegistration:
      e.kind = synth::EventKind::kRegistration;
      break;
    case TriggerKind::kOnboardingCompleted:
      e.kind = synth::EventKind::kOnboarding;
      e.record = record;
      break;
    case TriggerKind::kListenActivity:
      e.kind = synth::EventKind::kListen;
      e.track = track;
      break;
  }
  return e;
}

void InferenceContext::check() const {
  if (!world || !space || !model) throw ConfigError("inference context is incomplete");
  if (!model->batch_id().valid()) throw BatchConsistencyError("model has no batch id");
  assert_same_batches(model->upstream_batches(), space->batches());
  if (model->layout() && model->layout()->fingerprint() != layout.fingerprint()) {
    throw LayoutError("serving layout differs from the model's training layout");
  }
}

// NRT ------------------------------------------------------------------------------

NrtProcessor::NrtProcessor(InferenceContext ctx, EmbeddingStore& store, NrtConfig config)
    : ctx_(std::move(ctx)), store_(store), config_(config) {
  ctx_.check();
  if (config_.debounce < 0.0) throw ConfigError("debounce must be nonnegative");
  const std::size_t n = std::max<std::size_t>(1, config_.workers);
  for (std::size_t i = 0; i < n; ++i) shards_.push_back(std::make_unique<Shard>());
  if (config_.workers > 0) {
    for (auto& s : shards_) s->worker = std::thread([this, sp = s.get()] { run(*sp); });
  }
}

NrtProcessor::~NrtProcessor() {
  stop_ = true;
  for (auto& s : shards_) {
    {
      std::lock_guard lock(s->mu);
    }
    s->cv.notify_all();
  }
  for (auto& s : shards_) {
    if (s->worker.joinable()) s->worker.join();
  }
}

NrtProcessor::Shard& NrtProcessor::shard_of(UserId user) { return *shards_[user % shards_.size()]; }

void NrtProcessor::seed(UserId user, const synth::UserEvents& events) {
  if (user >= ctx_.world->users.size()) throw NotFoundError("unknown user " + std::to_string(user));
  auto& shard = shard_of(user);
  std::lock_guard lock(shard.state_mu);
  auto& st = shard.users[user];
  st.known = true;
  if (events.registration) {
    st.markers.insert({int(TriggerKind::kRegistration), *events.registration});
    st.as_of = std::max(st.as_of, *events.registration);
  }
  if (events.onboarding_time) {
    st.markers.insert({int(TriggerKind::kOnboardingCompleted), *events.onboarding_time});
    st.onboarding = events.onboarding;
    st.onboarding_time = events.onboarding_time;
    st.as_of = std::max(st.as_of, *events.onboarding_time);
  }
  for (const auto& l : events.listens) {
    st.listens.insert({l.timestamp, l.track});
    st.as_of = std::max(st.as_of, l.timestamp);
  }
}

UserRepresentation NrtProcessor::write(UserState& st, UserId user) {
  const auto& u = ctx_.world->users[user];
  std::vector<synth::Listen> listens;
  listens.reserve(st.listens.size());
  for (const auto& [t, track] : st.listens) listens.push_back({t, track});
  features::UserSnapshot snap;
  snap.profile = {u.id, u.country, u.device, u.registration_time};
  snap.onboarding = st.onboarding;
  snap.onboarding_time = st.onboarding_time;
  snap.listens = listens;
  const auto fv = features::assemble(snap, *ctx_.space, st.as_of, ctx_.layout);
  const bool has_history = std::any_of(listens.begin(), listens.end(),
                                       [&](const synth::Listen& l) { return l.timestamp <= st.as_of; });
  auto rep = userrep::encode(*ctx_.model, fv,
                             has_history ? userrep::RepSource::kNrt : userrep::RepSource::kColdStart);
  const bool stored = store_.put(rep);
  st.last_write = st.as_of;
  st.pending = false;
  std::lock_guard lock(stats_mu_);
  if (stored) ++stats_.writes;
  return rep;
}

std::optional<UserRepresentation> NrtProcessor::process(Shard& shard, const TriggerEvent& e) {
  if (e.user >= ctx_.world->users.size()) throw NotFoundError("unknown user " + std::to_string(e.user));
  std::lock_guard lock(shard.state_mu);
  auto& st = shard.users[e.user];
  st.known = true;
  bool fresh = true;
  switch (e.kind) {
    case TriggerKind::kRegistration:
      fresh = st.markers.insert({int(e.kind), e.timestamp}).second;
      break;
    case TriggerKind::kOnboardingCompleted:
      fresh = st.markers.insert({int(e.kind), e.timestamp}).second;
      if (fresh) {
        st.onboarding = e.record;
        st.onboarding_time = e.timestamp;
      }
      break;
    case TriggerKind::kListenActivity:
      if (e.track >= ctx_.space->n_tracks()) {
        throw NotFoundError("unknown track " + std::to_string(e.track));
      }
      fresh = st.listens.insert({e.timestamp, e.track}).second;
      break;
  }
  st.as_of = std::max(st.as_of, e.timestamp);
  {
    std::lock_guard slock(stats_mu_);
    ++stats_.events;
    if (!fresh) ++stats_.duplicates;
  }
  if (config_.debounce > 0.0 && st.last_write && st.as_of - *st.last_write < config_.debounce) {
    st.pending = true;
    std::lock_guard slock(stats_mu_);
    ++stats_.debounced;
    return std::nullopt;
  }
  return write(st, e.user);
}

std::optional<UserRepresentation> NrtProcessor::handle(const TriggerEvent& event) {
  return process(shard_of(event.user), event);
}

void NrtProcessor::submit(const TriggerEvent& event) {
  if (config_.workers == 0) {
    handle(event);
    return;
  }
  auto& shard = shard_of(event.user);
  {
    std::lock_guard lock(shard.mu);
    shard.queue.push_back(event);
  }
  shard.cv.notify_all();
}

void NrtProcessor::run(Shard& shard) {
  for (;;) {
    TriggerEvent e;
    {
      std::unique_lock lock(shard.mu);
      shard.cv.wait(lock, [&] { return stop_ || !shard.queue.empty(); });
      if (shard.queue.empty()) return;
      e = std::move(shard.queue.front());
      shard.queue.pop_front();
      ++shard.in_flight;
    }
    try {
      process(shard, e);
    } catch (...) {
      std::lock_guard lock(stats_mu_);
      ++stats_.errors;
      if (!error_) error_ = std::current_exception();
    }
    {
      std::lock_guard lock(shard.mu);
      --shard.in_flight;
    }
    shard.cv.notify_all();
  }
}

void NrtProcessor::drain() {
  for (auto& s : shards_) {
    std::unique_lock lock(s->mu);
    s->cv.wait(lock, [&] { return s->queue.empty() && s->in_flight == 0; });
  }
  std::exception_ptr err;
  {
    std::lock_guard lock(stats_mu_);
    err = error_;
    error_ = nullptr;
  }
  if (err) std::rethrow_exception(err);
}

std::size_t NrtProcessor::flush() {
  drain();
  std::size_t n = 0;
  for (auto& s : shards_) {
    std::lock_guard lock(s->state_mu);
    std::vector<UserId> pending;
    for (const auto& [u, st] : s->users) {
      if (st.pending) pending.push_back(u);
    }
    std::sort(pending.begin(), pending.end());
    for (UserId u : pending) {
      write(s->users[u], u);
      ++n;
    }
  }
  return n;
}

NrtStats NrtProcessor::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

// Batch inference ------------------------------------------------------------------

std::size_t run_batch_inference(const InferenceContext& ctx,
                                std::span<const synth::UserEvents> by_user,
                                std::span<const UserId> users, SimTime as_of,
                                EmbeddingStore& store) {
  ctx.check();
  const BatchId& batch = ctx.model->batch_id();
  std::size_t written = 0;
  for (UserId id : users) {
    if (id >= ctx.world->users.size() || id >= by_user.size()) {
      throw NotFoundError("unknown user " + std::to_string(id));
    }
    const auto& u = ctx.world->users[id];
    if (u.registration_time > as_of) continue;
    const auto stored = store.as_of(id, batch);
    if (stored && *stored > as_of) continue;
    const auto fv = features::assemble(features::snapshot_of(u, by_user[id]), *ctx.space, as_of,
                                       ctx.layout);
    if (store.put(userrep::encode(*ctx.model, fv, userrep::RepSource::kBatchInference))) ++written;
  }
  return written;
}

}  // namespace urep::serving
