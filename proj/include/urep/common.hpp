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

#ifndef UREP_COMMON_HPP_
#define UREP_COMMON_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace urep {

using UserId = std::uint32_t;
using TrackId = std::uint32_t;
using ArtistId = std::uint32_t;

/// Simulated clock, in hours since the start of the world.
using SimTime = double;

inline constexpr SimTime kHour = 1.0;
inline constexpr SimTime kDay = 24.0;
inline constexpr SimTime kWeek = 7.0 * kDay;
inline constexpr SimTime kMonth = 30.0 * kDay;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. Every failure class maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class TrainingError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class LayoutError : public Error {
 public:
  using Error::Error;
};
class BatchConsistencyError : public Error {
 public:
  using Error::Error;
};
class NotFoundError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class LineageError : public Error {
 public:
  using Error::Error;
};

/// One trained generation of a vector-space model. Identity is
/// (model, generation); `created_at` and `fingerprint` are metadata.
struct BatchId {
  std::string model;
  std::uint64_t generation = 0;
  SimTime created_at = 0.0;
  std::string fingerprint;

  bool operator==(const BatchId& other) const {
    return model == other.model && generation == other.generation;
  }
  bool valid() const { return !model.empty() && generation > 0; }
  std::string str() const;
};

/// Throws BatchConsistencyError naming both batches unless they are equal.
void assert_same_batch(const BatchId& a, const BatchId& b);
void assert_same_batches(const std::vector<BatchId>& a,
                         const std::vector<BatchId>& b);

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

/// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

double cosine_similarity(const Vector& a, const Vector& b);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames, so readers never see a
/// partially written file.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace urep

#endif  // UREP_COMMON_HPP_
