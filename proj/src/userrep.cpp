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

#include "urep/userrep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_util.hpp"

namespace urep::userrep {

using detail::json;

const char* source_name(RepSource s) {
  switch (s) {
    case RepSource::kBatchInference: return "batch_inference";
    case RepSource::kNrt: return "nrt";
    case RepSource::kColdStart: return "cold_start";
  }
  return "?";
}

RepSource source_from_name(const std::string& name) {
  if (name == "batch_inference") return RepSource::kBatchInference;
  if (name == "nrt") return RepSource::kNrt;
  if (name == "cold_start") return RepSource::kColdStart;
  throw IoError("unknown representation source '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (dropout < 0.0 || dropout > 0.5) throw ConfigError("dropout must lie in [0, 0.5]");
  if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

AutoencoderModel::AutoencoderModel(nn::Mlp encoder, nn::Mlp decoder)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  if (decoder_.input_dim() != encoder_.output_dim() ||
      decoder_.output_dim() != encoder_.input_dim()) {
    throw ShapeError("decoder does not mirror encoder");
  }
  mean_ = Vector::Zero(Eigen::Index(input_dim()));
  scale_ = Vector::Ones(Eigen::Index(input_dim()));
}

void AutoencoderModel::set_normalization(Vector mean, Vector scale) {
  if (std::size_t(mean.size()) != input_dim() || scale.size() != mean.size()) {
    throw ShapeError("normalization width != model input");
  }
  if ((scale.array() <= 0).any() || !scale.allFinite() || !mean.allFinite()) {
    throw ConfigError("normalization scale must be positive and finite");
  }
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

Matrix AutoencoderModel::normalize(const Matrix& x) const {
  if (std::size_t(x.cols()) != input_dim()) {
    throw ShapeError("feature width " + std::to_string(x.cols()) + " != model input " +
                     std::to_string(input_dim()));
  }
  return (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
}

std::vector<std::size_t> AutoencoderModel::widths() const {
  std::vector<std::size_t> w;
  const auto& layers = encoder_.layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) w.push_back(std::size_t(layers[i].weight.cols()));
  return w;
}

void AutoencoderModel::set_dropout(double dropout) {
  encoder_ = nn::Mlp(encoder_.layers(), encoder_.activations(), dropout);
  decoder_ = nn::Mlp(decoder_.layers(), decoder_.activations(), dropout);
}

void AutoencoderModel::assign_batch(BatchId batch, std::vector<BatchId> upstream,
                                    features::FeatureLayout layout) {
  if (batch_.valid()) throw ConfigError("model already stamped with " + batch_.str());
  if (layout.total_dim() != input_dim()) {
    throw LayoutError("layout width " + std::to_string(layout.total_dim()) +
                      " != model input " + std::to_string(input_dim()));
  }
  batch_ = std::move(batch);
  upstream_ = std::move(upstream);
  layout_ = std::move(layout);
}

Matrix AutoencoderModel::encode(const Matrix& x) const { return encoder_.forward(normalize(x)); }
Matrix AutoencoderModel::reconstruct(const Matrix& x) const {
  return decoder_.forward(encoder_.forward(normalize(x)));
}

AutoencoderModel init_model(std::size_t d, std::size_t k, const std::vector<std::size_t>& widths,
                            std::uint64_t seed, double dropout) {
  if (widths.empty()) throw ConfigError("hidden widths must be nonempty");
  if (k >= d) {
    throw ConfigError("latent dim k=" + std::to_string(k) + " must be < input dim d=" +
                      std::to_string(d));
  }
  if (k == 0) throw ConfigError("latent dim must be >= 1");
  std::vector<std::size_t> enc{d};
  enc.insert(enc.end(), widths.begin(), widths.end());
  enc.push_back(k);
  std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
  std::vector<nn::Activation> acts(enc.size() - 1, nn::Activation::kSelu);
  acts.back() = nn::Activation::kIdentity;
  return AutoencoderModel(nn::Mlp(enc, acts, dropout, derive_seed(seed, "encoder")),
                          nn::Mlp(dec, acts, dropout, derive_seed(seed, "decoder")));
}

UserRepresentation encode(const AutoencoderModel& model, const features::UserFeatureVector& x,
                          RepSource source) {
  if (std::size_t(x.x.size()) != model.input_dim()) {
    throw ShapeError("feature width " + std::to_string(x.x.size()) + " != model input " +
                     std::to_string(model.input_dim()));
  }
  if (model.batch_id().valid()) assert_same_batches(model.upstream_batches(), x.upstream_batches);
  UserRepresentation r;
  r.user_id = x.user_id;
  r.z = model.encode(x.x.transpose()).row(0).transpose();
  r.model_batch = model.batch_id();
  r.as_of = x.as_of;
  r.source = source;
  if (!r.z.allFinite()) throw TrainingError("non-finite representation");
  return r;
}

double reconstruction_loss(const AutoencoderModel& model, const Matrix& x) {
  if (x.rows() == 0) throw ShapeError("empty batch");
  const Matrix diff = model.reconstruct(x) - model.normalize(x);
  return diff.squaredNorm() / double(x.rows() * x.cols());
}

LossAndGradient loss_and_gradient(const AutoencoderModel& model, const Matrix& x, nn::Rng* rng) {
  if (x.rows() == 0) throw ShapeError("empty batch");
  nn::Mlp::Trace enc_trace, dec_trace;
  const Matrix xn = model.normalize(x);
  const Matrix z = model.encoder().forward(xn, enc_trace, rng);
  const Matrix x_hat = model.decoder().forward(z, dec_trace, rng);
  const Matrix diff = x_hat - xn;
  const double scale = 1.0 / double(x.rows() * x.cols());
  LossAndGradient out;
  out.loss = diff.squaredNorm() * scale;
  out.encoder_grad = model.encoder().zero_like();
  out.decoder_grad = model.decoder().zero_like();
  const Matrix dz = model.decoder().backward(dec_trace, 2.0 * scale * diff, out.decoder_grad);
  model.encoder().backward(enc_trace, dz, out.encoder_grad);
  return out;
}

const char* normalization_name(Normalization n) {
  switch (n) {
    case Normalization::kNone: return "none";
    case Normalization::kColumn: return "column";
    case Normalization::kBlock: return "block";
  }
  return "?";
}

Normalization normalization_from_name(const std::string& name) {
  if (name == "none") return Normalization::kNone;
  if (name == "column") return Normalization::kColumn;
  if (name == "block") return Normalization::kBlock;
  throw ConfigError("unknown normalization '" + name + "'");
}

std::pair<Vector, Vector> fit_normalization(const Matrix& x, Normalization normalization,
                                            std::span<const features::BlockSpan> blocks) {
  const Eigen::Index d = x.cols();
  if (normalization == Normalization::kNone || x.rows() == 0) {
    return {Vector::Zero(d), Vector::Ones(d)};
  }
  const Vector mean = x.colwise().mean().transpose();
  const Vector var =
      ((x.rowwise() - mean.transpose()).array().square().colwise().sum() / double(x.rows()))
          .transpose();
  Vector scale(d);
  if (normalization == Normalization::kColumn) {
    scale = var.cwiseSqrt();
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (const auto& b : blocks) groups.emplace_back(b.offset, b.width);
    if (groups.empty()) groups.emplace_back(0, std::size_t(d));
    scale.setOnes();
    for (const auto& [off, width] : groups) {
      if (off + width > std::size_t(d)) throw ShapeError("block exceeds input width");
      const double total = var.segment(Eigen::Index(off), Eigen::Index(width)).sum();
      scale.segment(Eigen::Index(off), Eigen::Index(width)).setConstant(std::sqrt(total));
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(scale[i] > 1e-8)) scale[i] = 1.0;
  }
  return {mean, scale};
}

TrainResult train(AutoencoderModel model, const Matrix& x, const TrainConfig& config,
                  std::span<const features::BlockSpan> blocks) {
  config.validate();
  if (x.rows() < 1) throw TrainingError("training needs at least one user");
  if (std::size_t(x.cols()) != model.input_dim()) {
    throw ShapeError("feature width " + std::to_string(x.cols()) + " != model input " +
                     std::to_string(model.input_dim()));
  }
  model.set_dropout(config.dropout);
  if (config.normalization != Normalization::kNone) {
    auto [mean, scale] = fit_normalization(x, config.normalization, blocks);
    model.set_normalization(std::move(mean), std::move(scale));
  }
  nn::Rng rng(derive_seed(config.seed, "autoencoder-train"));

  nn::OptimizerConfig oc;
  oc.kind = config.optimizer;
  oc.learning_rate = config.learning_rate;
  oc.momentum = config.momentum;
  auto& enc = model.encoder().layers();
  auto& dec = model.decoder().layers();
  nn::Optimizer opt(oc, {&enc, &dec});

  std::vector<Eigen::Index> order(std::size_t(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  std::size_t stalled = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      Matrix batch(Eigen::Index(n), x.cols());
      for (std::size_t i = 0; i < n; ++i) batch.row(Eigen::Index(i)) = x.row(order[start + i]);
      auto lg = loss_and_gradient(model, batch, &rng);
      if (!std::isfinite(lg.loss) || !nn::all_finite(lg.encoder_grad) ||
          !nn::all_finite(lg.decoder_grad)) {
        throw TrainingError("non-finite loss or gradient at epoch " + std::to_string(epoch) +
                            ", batch offset " + std::to_string(start) +
                            " (try a smaller learning rate)");
      }
      weighted += lg.loss * double(n);
      opt.step({&enc, &dec}, {&lg.encoder_grad, &lg.decoder_grad});
    }
    const double epoch_loss = weighted / double(order.size());
    if (!model.encoder().finite() || !model.decoder().finite()) {
      throw TrainingError("parameters diverged at epoch " + std::to_string(epoch));
    }
    if (!result.loss_trace.empty()) {
      const double prev = result.loss_trace.back();
      const double rel = prev > 0 ? (prev - epoch_loss) / prev : 0.0;
      stalled = rel < config.tolerance ? stalled + 1 : 0;
    }
    result.loss_trace.push_back(epoch_loss);
    if (stalled >= config.patience) {
      result.converged = true;
      break;
    }
  }
  result.model = std::move(model);
  return result;
}

// Artifacts ------------------------------------------------------------------------

void save_model(const AutoencoderModel& model, const std::filesystem::path& dir) {
  json up = json::array();
  for (const auto& b : model.upstream_batches()) up.push_back(detail::to_json(b));
  json j{{"format", "urep-autoencoder"},
         {"version", 1},
         {"input_dim", model.input_dim()},
         {"latent_dim", model.latent_dim()},
         {"batch", detail::to_json(model.batch_id())},
         {"upstream", up},
         {"layout", model.layout() ? json::parse(model.layout()->to_json()) : json(nullptr)},
         {"layout_fingerprint", model.layout() ? model.layout()->fingerprint() : ""},
         {"input_mean", detail::to_json(model.input_mean())},
         {"input_scale", detail::to_json(model.input_scale())},
         {"encoder", detail::mlp_json(model.encoder())},
         {"decoder", detail::mlp_json(model.decoder())}};
  write_text_file(dir / "model.json", j.dump());
}

AutoencoderModel load_model(const std::filesystem::path& dir) {
  try {
    const auto j = json::parse(read_text_file(dir / "model.json"));
    detail::check_format(j, "urep-autoencoder", 1);
    AutoencoderModel m(detail::mlp_from(j.at("encoder")), detail::mlp_from(j.at("decoder")));
    m.set_normalization(detail::vector_from(j.at("input_mean")),
                        detail::vector_from(j.at("input_scale")));
    auto batch = detail::batch_from(j.at("batch"));
    if (batch.valid()) {
      std::vector<BatchId> up;
      for (const auto& b : j.at("upstream")) up.push_back(detail::batch_from(b));
      auto layout = features::FeatureLayout::from_json(j.at("layout").dump());
      if (layout.fingerprint() != j.at("layout_fingerprint").get<std::string>()) {
        throw LayoutError("layout fingerprint mismatch in " + dir.string());
      }
      m.assign_batch(std::move(batch), std::move(up), std::move(layout));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError("malformed model artifact in " + dir.string() + ": " + e.what());
  }
}

std::string train_config_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"dropout", c.dropout},
              {"seed", c.seed},
              {"optimizer", nn::optimizer_name(c.optimizer)},
              {"momentum", c.momentum},
              {"tolerance", c.tolerance},
              {"patience", c.patience},
              {"normalization", normalization_name(c.normalization)}}
      .dump();
}

TrainConfig parse_train_config(const std::string& json_text) {
  TrainConfig c;
  try {
    const auto j = json::parse(json_text);
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("optimizer")) c.optimizer = nn::optimizer_from_name(j.at("optimizer").get<std::string>());
    if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
    if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("normalization")) {
      c.normalization = normalization_from_name(j.at("normalization").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace urep::userrep
