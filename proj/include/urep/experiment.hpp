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

// End-to-end offline evaluation on one synthetic world: established-user
// future listening, cold-start future listening, cluster recovery, and
// feature-block ablations, each against its baselines.

#ifndef UREP_EXPERIMENT_HPP_
#define UREP_EXPERIMENT_HPP_

#include <map>
#include <string>
#include <vector>

#include "urep/common.hpp"
#include "urep/downstream.hpp"
#include "urep/evaluation.hpp"
#include "urep/features.hpp"
#include "urep/modality.hpp"
#include "urep/synth.hpp"
#include "urep/userrep.hpp"

namespace urep::experiment {

struct ExperimentConfig {
  synth::WorldConfig world;
  std::uint64_t seed = 1;
  std::uint32_t d_audio = 80;
  std::uint32_t d_collab = 80;
  std::size_t latent_dim = 120;
  std::vector<std::size_t> widths{512, 256};
  userrep::TrainConfig train;
  downstream::ClassifierConfig classifier;
  std::size_t nmf_rank = 32;
  std::size_t nmf_iterations = 150;
  std::size_t cluster_sample = 400;
  std::size_t ndcg_k = 50;
  std::size_t random_trials = 3;
  /// Also train on each user's registration-time snapshot so the onboarding
  /// pathway is seen during training.
  bool augment_registration = true;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  std::string fingerprint() const;
};

/// Tiny preset for smoke tests and the CLI demo.
ExperimentConfig tiny_config(std::uint64_t seed);

/// World, log and trained modality encoders shared by every run on one seed.
struct Context {
  ExperimentConfig config;
  synth::World world;
  synth::EventLog log;
  std::vector<synth::UserEvents> by_user;
  modality::AudioEncoder audio;
  modality::CollabEncoder collab;
  modality::TrackSpace space;
  SimTime cutoff = 0.0;
  std::vector<UserId> established;  // registered before the cutoff
  std::vector<UserId> cold;         // registered after the cutoff
};

Context build_context(const ExperimentConfig& config);
Context make_context(const ExperimentConfig& config, synth::World world, synth::EventLog log,
                     modality::AudioEncoder audio, modality::CollabEncoder collab);

synth::World generate_world(const ExperimentConfig& config);
synth::EventLog generate_log(const ExperimentConfig& config, const synth::World& world);
/// Encoders for one batch generation; later generations use fresh seeds.
modality::AudioEncoder train_audio(const ExperimentConfig& config, const synth::World& world,
                                   std::uint64_t generation);
modality::CollabEncoder train_collab(const ExperimentConfig& config, const synth::World& world,
                                     std::uint64_t generation);

/// Model batch names used throughout the pipeline.
inline constexpr const char* kAudioModel = "audio";
inline constexpr const char* kCollabModel = "collab";
inline constexpr const char* kUserRepModel = "userrep";

struct TrainedUserRep {
  userrep::AutoencoderModel model;
  features::FeatureLayout layout;
  std::vector<double> loss_trace;
  double seconds = 0.0;
};

features::FeatureLayout context_layout(const Context& ctx, const features::FeatureMask& mask);

/// Cutoff snapshots of established users, plus registration-time snapshots
/// when augmentation is on.
std::vector<features::UserFeatureVector> training_features(const Context& ctx,
                                                          const features::FeatureLayout& layout);

TrainedUserRep train_userrep(const Context& ctx, const features::FeatureMask& mask,
                             std::uint64_t generation = 1);
/// Trains on a prepared feature matrix laid out by `layout`.
TrainedUserRep train_userrep(const Context& ctx, const features::FeatureLayout& layout,
                             const Matrix& x, std::uint64_t generation);

/// Representation of each user as of its entry in `as_of`.
std::vector<userrep::UserRepresentation> represent(const Context& ctx, const TrainedUserRep& rep,
                                                   std::span<const UserId> users,
                                                   std::span<const SimTime> as_of,
                                                   userrep::RepSource source);

/// Flat metric name -> value. Names are dotted paths such as
/// "established.rep.auc" or "clusters.archetype.rep".
using MetricReport = std::map<std::string, double>;

struct EvalOptions {
  bool baselines = true;
  bool established = true;
  bool coldstart = true;
  bool clusters = true;
};

MetricReport evaluate(const Context& ctx, const TrainedUserRep& rep, const EvalOptions& options);

std::string report_json(const MetricReport& report, const std::string& fingerprint);

/// Full run plus one retrain per ablation mask; deltas are masked - full.
struct AblationResult {
  std::string mask;
  MetricReport report;
  MetricReport delta;
};
std::vector<AblationResult> run_ablations(const Context& ctx, const MetricReport& full,
                                          const std::vector<std::string>& masks);

// Transfer tasks -------------------------------------------------------------------

/// Artist-follow classifier consuming the representation, against the same
/// classifier consuming the raw feature vector the representation is
/// computed from. Users are split by the same rule as the evaluation.
struct ArtistPreferenceReport {
  double rep_auc = 0.0;
  double raw_auc = 0.0;
  double rep_accuracy = 0.0;
  double raw_accuracy = 0.0;
  std::size_t rep_inputs = 0;  // classifier input width
  std::size_t raw_inputs = 0;
  std::size_t test_examples = 0;
  downstream::PairClassifier classifier;  // the representation-based one
};
ArtistPreferenceReport artist_preference(const Context& ctx, const TrainedUserRep& rep,
                                         std::size_t per_user = 10, double noise = 0.1);

/// [audio | collab] vector of an artist.
Vector artist_vector(const modality::TrackSpace& space, ArtistId a);

/// Two-tower candidate generator trained on the week before the cutoff and
/// scored on the week after it.
struct TwoTowerReport {
  double auc = 0.0;                  // held-out users, week after the cutoff
  double in_archetype_score = 0.0;   // mean dot score, own-archetype tracks
  double out_archetype_score = 0.0;  // mean dot score, other tracks
  downstream::TwoTower model;
};
TwoTowerReport two_tower_task(const Context& ctx, const TrainedUserRep& rep);

}  // namespace urep::experiment

#endif  // UREP_EXPERIMENT_HPP_
