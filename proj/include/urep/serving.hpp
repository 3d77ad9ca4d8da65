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

// Representation serving: an in-memory embedding store, event-triggered
// (near-real-time) inference, daily batch inference, and a length-prefixed
// request protocol over a Unix domain socket.

#ifndef UREP_SERVING_HPP_
#define UREP_SERVING_HPP_

#include <atomic>
#include <condition_variable>
#include <deque>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "urep/common.hpp"
#include "urep/features.hpp"
#include "urep/lineage.hpp"
#include "urep/modality.hpp"
#include "urep/synth.hpp"
#include "urep/userrep.hpp"

namespace urep::serving {

using userrep::UserRepresentation;

/// Per (user, batch) store of the latest representation. Writes older than
/// the stored one are rejected, so stored as_of never decreases.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(const EmbeddingStore&) = delete;
  EmbeddingStore& operator=(const EmbeddingStore&) = delete;

  /// Returns false (and keeps the stored entry) if the stored as_of is later.
  bool put(const UserRepresentation& rep);
  std::optional<UserRepresentation> get(UserId user, const BatchId& batch) const;
  std::optional<SimTime> as_of(UserId user, const BatchId& batch) const;

  /// Batches held, ascending by (model, generation).
  std::vector<BatchId> batches() const;
  std::size_t size() const;
  std::size_t count(const BatchId& batch) const;
  void drop_batch(const BatchId& batch);
  /// All entries of one batch, ordered by user id.
  std::vector<UserRepresentation> snapshot(const BatchId& batch) const;

  /// Line-delimited JSON, one entry per line, ordered by batch then user.
  std::string serialize() const;
  void load(const std::string& text);
  void save(const std::filesystem::path& dir) const;  // dir/store.jsonl
  void load_dir(const std::filesystem::path& dir);

 private:
  using Key = std::pair<std::string, std::uint64_t>;
  mutable std::shared_mutex mu_;
  std::map<Key, BatchId> batch_ids_;
  std::map<Key, std::unordered_map<UserId, UserRepresentation>> entries_;
};

/// Which batch a read is served from.
struct BatchPolicy {
  enum class Kind : std::uint8_t { kCurrent, kLegacy, kConsumer, kExact };
  Kind kind = Kind::kCurrent;
  std::string consumer;  // kConsumer: serve what this lineage consumer reads
  std::uint64_t generation = 0;  // kExact

  /// "current", "legacy", "consumer:<name>" or "generation:<n>".
  static BatchPolicy parse(const std::string& text);
  std::string str() const;
};

/// Picks the batch of `model` for a policy. Current and legacy come from the
/// lineage graph when given, else from the newest batches held in the store.
BatchId resolve_batch(const EmbeddingStore& store, const std::string& model,
                      const BatchPolicy& policy, const lineage::LineageGraph* graph);

/// Latest representation of `user` under the policy; NotFoundError if none.
UserRepresentation get_representation(const EmbeddingStore& store, UserId user,
                                      const std::string& model, const BatchPolicy& policy,
                                      const lineage::LineageGraph* graph = nullptr);

// Trigger events -------------------------------------------------------------------

enum class TriggerKind : std::uint8_t { kRegistration, kOnboardingCompleted, kListenActivity };
const char* trigger_name(TriggerKind k);

struct TriggerEvent {
  TriggerKind kind = TriggerKind::kListenActivity;
  UserId user = 0;
  SimTime timestamp = 0.0;
  TrackId track = 0;                                // listen activity
  std::optional<synth::OnboardingRecord> record;    // onboarding

  static TriggerEvent from(const synth::Event& e);
  synth::Event to_event() const;
};

/// Everything needed to turn events into representations. All members are
/// read-only while a processor runs.
struct InferenceContext {
  const synth::World* world = nullptr;
  const modality::TrackSpace* space = nullptr;
  const userrep::AutoencoderModel* model = nullptr;
  features::FeatureLayout layout;

  /// Throws BatchConsistencyError unless the model was trained on the
  /// encoders' batches.
  void check() const;
};

struct NrtConfig {
  /// 0 processes events inline on the caller's thread (deterministic);
  /// otherwise events are sharded by user over this many worker threads.
  std::size_t workers = 0;
  /// Minimum simulated time between writes for one user; 0 writes on every
  /// event. Suppressed writes are flushed by flush().
  SimTime debounce = 0.0;
};

struct NrtStats {
  std::size_t events = 0;
  std::size_t duplicates = 0;
  std::size_t writes = 0;
  std::size_t debounced = 0;
  std::size_t errors = 0;
};

/// Event-triggered inference. A user's features are a function of the set
/// of events seen for that user and the latest event time, so redelivery of
/// an event leaves the stored vector unchanged.
class NrtProcessor {
 public:
  NrtProcessor(InferenceContext ctx, EmbeddingStore& store, NrtConfig config = {});
  ~NrtProcessor();
  NrtProcessor(const NrtProcessor&) = delete;
  NrtProcessor& operator=(const NrtProcessor&) = delete;

  /// Preloads a user's event history without writing to the store.
  void seed(UserId user, const synth::UserEvents& events);

  /// Processes one event on the calling thread. Returns the representation
  /// written, or nullopt when the write was debounced.
  std::optional<UserRepresentation> handle(const TriggerEvent& event);

  /// Queues an event for its user's shard; inline mode handles it at once.
  void submit(const TriggerEvent& event);
  /// Blocks until all submitted events are processed. Rethrows the first
  /// worker error, if any.
  void drain();
  /// Writes any debounced users at their latest event time.
  std::size_t flush();

  NrtStats stats() const;

 private:
  struct UserState {
    bool known = false;
    std::optional<synth::OnboardingRecord> onboarding;
    std::optional<SimTime> onboarding_time;
    std::set<std::pair<SimTime, TrackId>> listens;
    std::set<std::pair<int, SimTime>> markers;  // registration/onboarding events seen
    SimTime as_of = 0.0;
    std::optional<SimTime> last_write;
    bool pending = false;
  };
  struct Shard {
    std::mutex mu;        // guards queue and in_flight
    std::mutex state_mu;  // guards users
    std::condition_variable cv;
    std::deque<TriggerEvent> queue;
    std::size_t in_flight = 0;
    std::unordered_map<UserId, UserState> users;
    std::thread worker;
  };

  Shard& shard_of(UserId user);
  std::optional<UserRepresentation> process(Shard& shard, const TriggerEvent& event);
  UserRepresentation write(UserState& state, UserId user);
  void run(Shard& shard);

  InferenceContext ctx_;
  EmbeddingStore& store_;
  NrtConfig config_;
  std::vector<std::unique_ptr<Shard>> shards_;
  std::atomic<bool> stop_{false};
  mutable std::mutex stats_mu_;
  NrtStats stats_;
  std::exception_ptr error_;
};

/// Writes a representation at `as_of` for every user registered by then,
/// except users whose stored entry in the model's batch is already newer.
/// Returns the number of users written.
std::size_t run_batch_inference(const InferenceContext& ctx,
                                std::span<const synth::UserEvents> by_user,
                                std::span<const UserId> users, SimTime as_of,
                                EmbeddingStore& store);

// Socket protocol ------------------------------------------------------------------
//
// Each message is a 4-byte big-endian length followed by that many bytes of
// JSON. Request: {"user": id, "policy": "current"}. Response: {"ok": true,
// "user", "z", "batch", "as_of", "source"} or {"ok": false, "error", "message"}.

std::string frame(std::string_view payload);
/// Reads one frame; nullopt on orderly end of stream.
std::optional<std::string> read_frame(int fd);
void write_frame(int fd, std::string_view payload);

/// Answers one JSON request against the store.
std::string handle_request(const EmbeddingStore& store, const std::string& model,
                           const lineage::LineageGraph* graph, const std::string& request);

/// Serves requests on a Unix socket until stop() is called.
class RepServer {
 public:
  using Handler = std::function<std::string(const std::string&)>;
  RepServer(std::filesystem::path socket_path, Handler handler);
  ~RepServer();
  RepServer(const RepServer&) = delete;
  RepServer& operator=(const RepServer&) = delete;

  void start();
  void stop();
  std::size_t served() const { return served_; }

 private:
  void loop();
  void serve_client(int fd);

  std::filesystem::path path_;
  Handler handler_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> served_{0};
  std::thread thread_;
};

/// Sends one request and returns the response payload.
std::string request(const std::filesystem::path& socket_path, const std::string& payload);

}  // namespace urep::serving

#endif  // UREP_SERVING_HPP_
