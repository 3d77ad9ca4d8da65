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

// Model lineage and batch rotation.
//
// Models form a DAG through their upstream inputs. Each model retains at most
// two batches (current and legacy). A consumer keeps serving from the
// upstream batch it was trained against until its own retrain completes, so
// an upstream rotation never leaves a consumer without inputs.
//
// Rules enforced here:
//  * begin_retrain needs a current batch on every upstream, and is deferred
//    while some consumer's current batch still reads this model's legacy
//    batch (a second rotation would drop it).
//  * complete_retrain is invalidated, returning the node to stale, when a
//    batch it trained against is no longer retained upstream. Otherwise the
//    node rotates; it becomes live only if every upstream is live and every
//    pin is that upstream's current batch, and stays stale otherwise.
//  * A successful rotation marks all descendants stale.

#ifndef UREP_LINEAGE_HPP_
#define UREP_LINEAGE_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "urep/common.hpp"

namespace urep::lineage {

enum class Status : std::uint8_t { kLive, kStale, kRetraining };
const char* status_name(Status s);

using Pins = std::map<std::string, BatchId>;

struct ModelNode {
  std::string name;
  std::vector<std::string> upstreams;
  std::optional<BatchId> current;
  std::optional<BatchId> legacy;
  Pins pins;         // upstream batches `current` was trained against
  Pins legacy_pins;  // same for `legacy`
  Status status = Status::kStale;
  std::optional<Pins> training_pins;  // captured by begin_retrain
  Status resume_status = Status::kStale;  // restored by abort_retrain

  std::size_t retained() const { return std::size_t(current.has_value()) + legacy.has_value(); }
};

struct RetrainOutcome {
  bool completed = false;
  BatchId batch;                       // valid when completed
  std::vector<std::string> cascaded;   // newly stale descendants, topological order
  std::string reason;                  // why an attempt was invalidated
};

class LineageGraph {
 public:
  /// Adds a node with no batches and status stale.
  void register_model(const std::string& name, const std::vector<std::string>& upstreams);

  bool has(const std::string& name) const { return nodes_.count(name) > 0; }
  const ModelNode& node(const std::string& name) const;
  std::vector<std::string> names() const;
  /// Upstreams before downstreams; ties by registration order.
  std::vector<std::string> topological_order() const;
  /// Transitive consumers of `name` in topological order.
  std::vector<std::string> descendants(const std::string& name) const;
  std::vector<std::string> consumers(const std::string& name) const;

  /// Starts a retrain and returns the upstream batches to train against.
  Pins begin_retrain(const std::string& name, SimTime now = 0.0);
  /// Whether begin_retrain would currently succeed; fills `reason` if not.
  bool can_begin_retrain(const std::string& name, std::string* reason = nullptr) const;
  RetrainOutcome complete_retrain(const std::string& name, const Pins& trained_against,
                                  SimTime now = 0.0, const std::string& fingerprint = "");
  /// Abandons a running retrain; the node returns to stale.
  void abort_retrain(const std::string& name);
  /// Marks every descendant stale (retraining nodes keep their status; their
  /// completion is validated instead) and returns them in topological order.
  std::vector<std::string> mark_stale_cascade(const std::string& name);

  /// Upstream batch a consumer must read: the retained batch matching the pin
  /// of the consumer's current batch. Throws LineageError if none exists.
  BatchId serving_batch(const std::string& consumer, const std::string& upstream) const;
  /// Batch of `name` to serve to a reader: current, or legacy if requested.
  BatchId resolve(const std::string& name, bool legacy) const;

  /// Appends every subsequent mutation to a line-delimited JSON ledger.
  void attach_ledger(const std::filesystem::path& file);
  static LineageGraph replay(const std::filesystem::path& file);
  std::string status_table() const;

 private:
  void append(const std::string& line);
  const ModelNode& at(const std::string& name) const;
  ModelNode& at(const std::string& name);
  bool aligned(const ModelNode& n) const;

  std::map<std::string, ModelNode> nodes_;
  std::vector<std::string> order_;  // registration order
  std::optional<std::filesystem::path> ledger_;
};

}  // namespace urep::lineage

#endif  // UREP_LINEAGE_HPP_
