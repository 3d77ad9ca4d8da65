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

#include "urep/nn.hpp"

#include <cmath>

namespace urep::nn {

double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

double selu_derivative(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

namespace {

Matrix activate(const Matrix& z, Activation a) {
  if (a == Activation::kIdentity) return z;
  return z.unaryExpr([](double v) { return selu(v); });
}

Matrix activation_grad(const Matrix& z, Activation a) {
  if (a == Activation::kIdentity) return Matrix::Ones(z.rows(), z.cols());
  return z.unaryExpr([](double v) { return selu_derivative(v); });
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations, double dropout,
         std::uint64_t seed)
    : activations_(std::move(activations)), dropout_(dropout) {
  if (sizes.size() < 2) throw ConfigError("network needs at least one layer");
  if (activations_.size() != sizes.size() - 1) {
    throw ConfigError("one activation per layer required");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (sizes[i] == 0 || sizes[i + 1] == 0) throw ConfigError("layer widths must be >= 1");
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(double(sizes[i])));
    Dense d;
    d.weight.resize(Eigen::Index(sizes[i]), Eigen::Index(sizes[i + 1]));
    for (Eigen::Index c = 0; c < d.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < d.weight.rows(); ++r) d.weight(r, c) = g(rng);
    d.bias = Vector::Zero(Eigen::Index(sizes[i + 1]));
    layers_.push_back(std::move(d));
  }
}

Mlp::Mlp(std::vector<Dense> layers, std::vector<Activation> activations, double dropout)
    : layers_(std::move(layers)), activations_(std::move(activations)), dropout_(dropout) {
  if (layers_.empty() || activations_.size() != layers_.size()) {
    throw ConfigError("one activation per layer required");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].weight.cols()) throw ShapeError("bias width mismatch");
    if (i > 0 && layers_[i].weight.rows() != layers_[i - 1].weight.cols()) {
      throw ShapeError("layer chain width mismatch");
    }
  }
}

std::size_t Mlp::input_dim() const {
  return layers_.empty() ? 0 : std::size_t(layers_.front().weight.rows());
}
std::size_t Mlp::output_dim() const {
  return layers_.empty() ? 0 : std::size_t(layers_.back().weight.cols());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += std::size_t(l.weight.size() + l.bias.size());
  return n;
}

bool Mlp::finite() const { return all_finite(layers_); }

Matrix Mlp::forward(const Matrix& x) const {
  if (std::size_t(x.cols()) != input_dim()) {
    throw ShapeError("network input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(input_dim()));
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = h * layers_[i].weight;
    z.rowwise() += layers_[i].bias.transpose();
    h = activate(z, activations_[i]);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, Trace& trace, Rng* rng) const {
  if (std::size_t(x.cols()) != input_dim()) {
    throw ShapeError("network input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(input_dim()));
  }
  trace.inputs.clear();
  trace.preacts.clear();
  trace.keep_masks.clear();
  Matrix h = x;
  const double keep = 1.0 - dropout_;
  std::bernoulli_distribution coin(keep);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    trace.inputs.push_back(h);
    Matrix z = h * layers_[i].weight;
    z.rowwise() += layers_[i].bias.transpose();
    h = activate(z, activations_[i]);
    trace.preacts.push_back(std::move(z));
    const bool hidden = i + 1 < layers_.size();
    if (hidden && rng != nullptr && dropout_ > 0.0) {
      Matrix mask(h.rows(), h.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = coin(*rng) ? 1.0 / keep : 0.0;
      h = h.cwiseProduct(mask);
      trace.keep_masks.push_back(std::move(mask));
    } else {
      trace.keep_masks.emplace_back();
    }
  }
  return h;
}

Matrix Mlp::backward(const Trace& trace, const Matrix& grad_out, std::vector<Dense>& grads) const {
  if (grads.size() != layers_.size()) throw ShapeError("gradient buffer size mismatch");
  Matrix g = grad_out;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    if (trace.keep_masks[idx].size() > 0) g = g.cwiseProduct(trace.keep_masks[idx]);
    g = g.cwiseProduct(activation_grad(trace.preacts[idx], activations_[idx]));
    grads[idx].weight.noalias() += trace.inputs[idx].transpose() * g;
    grads[idx].bias += g.colwise().sum().transpose();
    g = g * layers_[idx].weight.transpose();
  }
  return g;
}

std::vector<Dense> Mlp::zero_like() const {
  std::vector<Dense> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) {
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

bool all_finite(const std::vector<Dense>& layers) {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

std::vector<double*> parameter_pointers(std::vector<Dense>& layers) {
  std::vector<double*> out;
  for (auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
  }
  return out;
}

// Optimizers ----------------------------------------------------------------------

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + name + "'");
}

namespace {

std::vector<Dense> zeros_of(const std::vector<Dense>& like) {
  std::vector<Dense> out;
  for (const auto& l : like) {
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

}  // namespace

Optimizer::Optimizer(OptimizerConfig config, const std::vector<std::vector<Dense>*>& params)
    : config_(config) {
  for (const auto* p : params) {
    m_.push_back(zeros_of(*p));
    v_.push_back(zeros_of(*p));
  }
}

void Optimizer::step(const std::vector<std::vector<Dense>*>& params,
                     const std::vector<std::vector<Dense>*>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("optimizer parameter groups changed");
  }
  ++t_;
  const double lr = config_.learning_rate;
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto& P = *params[g];
    const auto& G = *grads[g];
    for (std::size_t i = 0; i < P.size(); ++i) {
      Matrix gw = G[i].weight;
      if (config_.weight_decay > 0) gw += config_.weight_decay * P[i].weight;
      const Vector& gb = G[i].bias;
      if (config_.kind == OptimizerKind::kSgdMomentum) {
        m_[g][i].weight = config_.momentum * m_[g][i].weight + gw;
        m_[g][i].bias = config_.momentum * m_[g][i].bias + gb;
        P[i].weight -= lr * m_[g][i].weight;
        P[i].bias -= lr * m_[g][i].bias;
      } else {
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, double(t_));
        const double c2 = 1.0 - std::pow(b2, double(t_));
        m_[g][i].weight = b1 * m_[g][i].weight + (1 - b1) * gw;
        v_[g][i].weight = b2 * v_[g][i].weight + (1 - b2) * gw.cwiseAbs2();
        m_[g][i].bias = b1 * m_[g][i].bias + (1 - b1) * gb;
        v_[g][i].bias = b2 * v_[g][i].bias + (1 - b2) * gb.cwiseAbs2();
        P[i].weight.array() -= lr * (m_[g][i].weight.array() / c1) /
                               ((v_[g][i].weight.array() / c2).sqrt() + config_.epsilon);
        P[i].bias.array() -= lr * (m_[g][i].bias.array() / c1) /
                             ((v_[g][i].bias.array() / c2).sqrt() + config_.epsilon);
      }
    }
  }
}

}  // namespace urep::nn
