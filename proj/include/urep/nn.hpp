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

// Small dense feed-forward networks with hand-written backpropagation.
// Batches are row-major in the math sense: one example per matrix row.

#ifndef UREP_NN_HPP_
#define UREP_NN_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "urep/common.hpp"

namespace urep::nn {

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double selu(double x);
double selu_derivative(double x);

enum class Activation : std::uint8_t { kIdentity = 0, kSelu = 1 };

/// y = x * weight + bias; weight is fan_in x fan_out.
struct Dense {
  Matrix weight;
  Vector bias;
};

using Rng = std::mt19937_64;

class Mlp {
 public:
  Mlp() = default;
  /// sizes = {in, h1, ..., out}; activations has sizes.size()-1 entries.
  /// Weights ~ N(0, 1/fan_in), biases zero. Dropout follows every hidden
  /// (non-final) layer during training only.
  Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations, double dropout,
      std::uint64_t seed);
  Mlp(std::vector<Dense> layers, std::vector<Activation> activations, double dropout);

  struct Trace {
    std::vector<Matrix> inputs;       // input to each layer
    std::vector<Matrix> preacts;      // affine output of each layer
    std::vector<Matrix> keep_masks;   // scaled dropout masks (empty if none)
  };

  Matrix forward(const Matrix& x) const;
  /// Training pass; `rng == nullptr` disables dropout.
  Matrix forward(const Matrix& x, Trace& trace, Rng* rng) const;
  /// Accumulates parameter gradients into `grads` and returns dL/dx.
  Matrix backward(const Trace& trace, const Matrix& grad_out, std::vector<Dense>& grads) const;

  std::vector<Dense> zero_like() const;
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }
  const std::vector<Activation>& activations() const { return activations_; }
  double dropout() const { return dropout_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  bool finite() const;

 private:
  std::vector<Dense> layers_;
  std::vector<Activation> activations_;
  double dropout_ = 0.0;
};

enum class OptimizerKind : std::uint8_t { kSgdMomentum = 0, kAdam = 1 };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

/// Keeps per-parameter state for a fixed list of layer groups.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const std::vector<std::vector<Dense>*>& params);
  void step(const std::vector<std::vector<Dense>*>& params,
            const std::vector<std::vector<Dense>*>& grads);

 private:
  OptimizerConfig config_;
  std::vector<std::vector<Dense>> m_;
  std::vector<std::vector<Dense>> v_;
  std::uint64_t t_ = 0;
};

bool all_finite(const std::vector<Dense>& layers);
/// Flat views over parameters, used by finite-difference checks.
std::vector<double*> parameter_pointers(std::vector<Dense>& layers);

}  // namespace urep::nn

#endif  // UREP_NN_HPP_
