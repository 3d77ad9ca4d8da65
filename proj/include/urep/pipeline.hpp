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

// Artifact workspace and staged pipeline.
//
// A workspace directory holds every artifact of one configuration: world,
// event log, encoders, features, models by batch generation, the lineage
// ledger, the embedding store and reports. Stages record a fingerprint of
// their inputs, so a rerun with an unchanged config skips them.

#ifndef UREP_PIPELINE_HPP_
#define UREP_PIPELINE_HPP_

#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "urep/downstream.hpp"
#include "urep/experiment.hpp"
#include "urep/lineage.hpp"
#include "urep/serving.hpp"

namespace urep::pipeline {

inline constexpr const char* kDownstreamModel = "downstream";

struct PipelineConfig {
  experiment::ExperimentConfig experiment;
  /// Use the world (and log, if present) in this directory instead of
  /// generating one.
  std::optional<std::filesystem::path> world_dir;
  std::vector<std::string> suites{"established", "coldstart", "clusters"};
  std::vector<std::string> ablations;  // feature masks, e.g. "onboarding"
  std::size_t nrt_workers = 0;
  SimTime nrt_debounce = 0.0;
  std::size_t demo_requests = 3;  // requests issued per demo phase

  std::string to_json() const;
  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& file);
  std::string fingerprint() const;
};

/// 50 users, encoder dims 8/8, latent 8.
PipelineConfig tiny_pipeline_config(std::uint64_t seed = 1);

/// A failed stage; `cause` holds the original error.
class StageError : public Error {
 public:
  StageError(std::string stage, std::exception_ptr cause, const std::string& what)
      : Error("stage " + stage + " failed: " + what), stage_(std::move(stage)), cause_(cause) {}
  const std::string& stage() const { return stage_; }
  std::exception_ptr cause() const { return cause_; }

 private:
  std::string stage_;
  std::exception_ptr cause_;
};

/// Lazily loaded view of a workspace directory.
class Workspace {
 public:
  Workspace(std::filesystem::path root, PipelineConfig config);

  const std::filesystem::path& root() const { return root_; }
  const PipelineConfig& config() const { return config_; }

  std::filesystem::path world_dir() const { return root_ / "world"; }
  std::filesystem::path log_file() const { return root_ / "log.jsonl"; }
  std::filesystem::path encoder_file(const std::string& model, std::uint64_t gen) const;
  std::filesystem::path features_dir() const { return root_ / "features"; }
  std::filesystem::path userrep_dir(std::uint64_t gen) const;
  std::filesystem::path downstream_file(const std::string& task, std::uint64_t gen) const;
  std::filesystem::path ledger_file() const { return root_ / "lineage" / "ledger.jsonl"; }
  std::filesystem::path store_dir() const { return root_ / "store"; }
  std::filesystem::path report_file(const std::string& suite) const;
  std::filesystem::path stage_file(const std::string& stage) const;

  const synth::World& world();
  const synth::EventLog& log();
  const modality::AudioEncoder& audio(std::uint64_t gen);
  const modality::CollabEncoder& collab(std::uint64_t gen);
  /// Experiment context over the given encoder generations.
  const experiment::Context& context(std::uint64_t audio_gen, std::uint64_t collab_gen);
  const experiment::TrainedUserRep& userrep(std::uint64_t gen);
  const downstream::PairClassifier& classifier(std::uint64_t gen);

  lineage::LineageGraph& graph();
  serving::EmbeddingStore& store();
  void save_store();

  /// Context matching the pins of a lineage node's current batch.
  const experiment::Context& context_for(const lineage::Pins& pins);

  void forget_cached();

 private:
  std::filesystem::path root_;
  PipelineConfig config_;
  std::optional<synth::World> world_;
  std::optional<synth::EventLog> log_;
  std::map<std::uint64_t, modality::AudioEncoder> audio_;
  std::map<std::uint64_t, modality::CollabEncoder> collab_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::unique_ptr<experiment::Context>> contexts_;
  std::map<std::uint64_t, experiment::TrainedUserRep> userrep_;
  std::map<std::uint64_t, downstream::PairClassifier> classifiers_;
  std::unique_ptr<lineage::LineageGraph> graph_;
  std::unique_ptr<serving::EmbeddingStore> store_;
};

struct StageReport {
  std::string name;
  bool skipped = false;
  double seconds = 0.0;
  std::string fingerprint;
};

struct RunReport {
  std::vector<StageReport> stages;
  experiment::MetricReport metrics;
};

/// Stage names in execution order.
std::vector<std::string> stage_names();

/// Runs every stage, skipping those whose recorded fingerprint matches.
/// Throws StageError naming the failed stage.
RunReport run_pipeline(const std::filesystem::path& root, const PipelineConfig& config,
                       std::ostream* progress = nullptr);

/// Runs one named stage unconditionally (its inputs must exist).
StageReport run_stage(Workspace& ws, const std::string& stage, std::ostream* progress = nullptr);

// Lineage-driven retraining ----------------------------------------------------------

/// Trains the next batch of `model` against its upstreams' current batches,
/// registers the rotation, and for the user representation writes the new
/// batch into the store. Returns the outcome of the rotation.
lineage::RetrainOutcome retrain(Workspace& ws, const std::string& model, SimTime now,
                                std::ostream* progress = nullptr);

/// Retrains `model`, then every stale descendant in topological order.
std::vector<lineage::RetrainOutcome> retrain_cascade(Workspace& ws, const std::string& model,
                                                     SimTime now, std::ostream* progress = nullptr);

/// Future-listening score for one request as a downstream consumer sees it:
/// representation and track embedding both resolved through the consumer's
/// pins. Returns (probability, user-representation batch served).
std::pair<double, BatchId> serve_request(Workspace& ws, UserId user, TrackId track);

struct DemoResult {
  std::vector<std::string> transcript;
  std::size_t requests = 0;
  std::size_t legacy_served = 0;
  std::size_t unavailable = 0;
  bool aligned = false;  // every node live and pinned to current upstreams at the end
};

/// Retrains the collaborative encoder and the chain below it while issuing
/// requests throughout, recording which batches served each one.
DemoResult demo_rotation(Workspace& ws, std::ostream* progress = nullptr);

/// Checks the provenance chain: stage fingerprints, model pins against the
/// lineage graph, and store batches. Returns human-readable problems.
std::vector<std::string> verify_workspace(Workspace& ws);

}  // namespace urep::pipeline

#endif  // UREP_PIPELINE_HPP_
