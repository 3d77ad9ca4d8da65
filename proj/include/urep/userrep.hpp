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

// User representation autoencoder.
//
// The encoder maps a feature vector x (width d) through SELU hidden layers to
// an affine latent z (width k < d); the decoder mirrors the hidden widths back
// to d. Training minimises the per-dimension mean squared reconstruction
// error over shuffled mini-batches.

#ifndef UREP_USERREP_HPP_
#define UREP_USERREP_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urep/common.hpp"
#include "urep/features.hpp"
#include "urep/nn.hpp"

namespace urep::userrep {

enum class RepSource : std::uint8_t { kBatchInference = 0, kNrt = 1, kColdStart = 2 };
const char* source_name(RepSource s);
RepSource source_from_name(const std::string& name);

struct UserRepresentation {
  UserId user_id = 0;
  Vector z;
  BatchId model_batch;
  SimTime as_of = 0.0;
  RepSource source = RepSource::kBatchInference;
};

/// kColumn: per-column z-score. kBlock: per-column centering, then each
/// feature block scaled to unit total variance, so blocks weigh equally in
/// the reconstruction loss whatever their width.
enum class Normalization : std::uint8_t { kNone = 0, kColumn = 1, kBlock = 2 };
const char* normalization_name(Normalization n);
Normalization normalization_from_name(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.03;
  std::size_t epochs = 30;
  double dropout = 0.05;
  std::uint64_t seed = 1;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kSgdMomentum;
  double momentum = 0.9;
  double tolerance = 1e-4;   // relative epoch-loss improvement
  std::size_t patience = 3;
  /// Input normalization fitted on the training set and stored in the model.
  Normalization normalization = Normalization::kBlock;

  void validate() const;
};

class AutoencoderModel {
 public:
  AutoencoderModel() = default;
  AutoencoderModel(nn::Mlp encoder, nn::Mlp decoder);

  std::size_t input_dim() const { return encoder_.input_dim(); }
  std::size_t latent_dim() const { return encoder_.output_dim(); }
  std::vector<std::size_t> widths() const;

  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& decoder() const { return decoder_; }
  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& decoder() { return decoder_; }
  void set_dropout(double dropout);

  /// Column-wise input transform (x - mean) / scale applied before the
  /// encoder; identity unless set. Reconstruction is measured after it.
  void set_normalization(Vector mean, Vector scale);
  const Vector& input_mean() const { return mean_; }
  const Vector& input_scale() const { return scale_; }
  Matrix normalize(const Matrix& x) const;

  const BatchId& batch_id() const { return batch_; }
  const std::vector<BatchId>& upstream_batches() const { return upstream_; }
  const std::optional<features::FeatureLayout>& layout() const { return layout_; }

  /// Stamps the model once training completes; a model is stamped only once.
  void assign_batch(BatchId batch, std::vector<BatchId> upstream,
                    features::FeatureLayout layout);

  Matrix encode(const Matrix& x) const;
  Matrix reconstruct(const Matrix& x) const;

 private:
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  Vector mean_;
  Vector scale_;
  BatchId batch_;
  std::vector<BatchId> upstream_;
  std::optional<features::FeatureLayout> layout_;
};

/// Encoder d -> widths... -> k (latent affine), decoder k -> reversed widths -> d.
AutoencoderModel init_model(std::size_t d, std::size_t k, const std::vector<std::size_t>& widths,
                            std::uint64_t seed, double dropout = 0.05);

/// Inference (dropout off). Checks width and, for stamped models, that the
/// feature vector was built on the model's upstream batches.
UserRepresentation encode(const AutoencoderModel& model, const features::UserFeatureVector& x,
                          RepSource source = RepSource::kBatchInference);

/// Mean over rows of ||x - x_hat||^2 / d, in normalized input space.
double reconstruction_loss(const AutoencoderModel& model, const Matrix& x);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<nn::Dense> encoder_grad;
  std::vector<nn::Dense> decoder_grad;
};

/// Reconstruction loss and its exact gradient; dropout applied when rng given.
LossAndGradient loss_and_gradient(const AutoencoderModel& model, const Matrix& x,
                                  nn::Rng* rng = nullptr);

struct TrainResult {
  AutoencoderModel model;
  std::vector<double> loss_trace;  // mean training loss per epoch
  bool converged = false;
};

/// `blocks` are column groups for kBlock normalization; empty means one block.
TrainResult train(AutoencoderModel model, const Matrix& x, const TrainConfig& config,
                  std::span<const features::BlockSpan> blocks = {});

/// Mean and scale for `normalization` over the rows of x.
std::pair<Vector, Vector> fit_normalization(const Matrix& x, Normalization normalization,
                                            std::span<const features::BlockSpan> blocks = {});

void save_model(const AutoencoderModel& model, const std::filesystem::path& dir);
AutoencoderModel load_model(const std::filesystem::path& dir);

std::string train_config_json(const TrainConfig& c);
TrainConfig parse_train_config(const std::string& json_text);

}  // namespace urep::userrep

#endif  // UREP_USERREP_HPP_
