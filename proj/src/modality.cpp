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

#include "urep/modality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCore>

#include "json_util.hpp"

namespace urep::modality {

using detail::json;

const char* space_name(Space s) {
  return s == Space::kAudio ? "audio" : "collaborative";
}

namespace {

// Largest-magnitude entry of every column becomes positive.
void fix_signs(Matrix& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, c) < 0) vectors.col(c) *= -1.0;
  }
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw TrainingError(std::string(what) + " produced non-finite values");
}

}  // namespace

// Audio ----------------------------------------------------------------------

AudioEncoder::AudioEncoder(Vector mean, Matrix projection, BatchId batch)
    : mean_(std::move(mean)), projection_(std::move(projection)), batch_(std::move(batch)) {
  if (projection_.cols() < 2) throw ConfigError("encoder dim must be >= 2");
  if (projection_.rows() != mean_.size()) throw ShapeError("projection/mean size mismatch");
}

Vector AudioEncoder::project(const Vector& acoustic) const {
  if (acoustic.size() != mean_.size()) {
    throw ShapeError("acoustic feature length " + std::to_string(acoustic.size()) +
                     " != " + std::to_string(mean_.size()));
  }
  return projection_.transpose() * (acoustic - mean_);
}

TrackEmbedding AudioEncoder::embed(const synth::Track& track) const {
  return {track.id, project(track.acoustic_features), Space::kAudio, batch_, false};
}

AudioEncoder train_audio_encoder(const synth::World& world, std::uint32_t dim,
                                 std::uint64_t /*seed*/, BatchId batch) {
  if (world.tracks.size() < 2) throw TrainingError("audio encoder needs at least 2 tracks");
  if (dim < 2) throw ConfigError("encoder dim must be >= 2");
  const auto raw = world.tracks.front().acoustic_features.size();
  Matrix X(static_cast<Eigen::Index>(world.tracks.size()), raw);
  for (std::size_t i = 0; i < world.tracks.size(); ++i) {
    if (world.tracks[i].acoustic_features.size() != raw) {
      throw ShapeError("tracks disagree on acoustic feature length");
    }
    X.row(Eigen::Index(i)) = world.tracks[i].acoustic_features.transpose();
  }
  Vector mean = X.colwise().mean().transpose();
  X.rowwise() -= mean.transpose();
  const Matrix cov = (X.transpose() * X) / double(X.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw TrainingError("PCA eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the top components.
  const Eigen::Index keep = std::min<Eigen::Index>(dim, raw);
  Matrix components = eig.eigenvectors().rightCols(keep).rowwise().reverse();
  fix_signs(components);
  Matrix projection = Matrix::Zero(raw, dim);
  projection.leftCols(keep) = components;
  check_finite(projection, "audio encoder");
  batch.fingerprint = hex64(fnv1a(std::string_view(
      reinterpret_cast<const char*>(projection.data()),
      sizeof(double) * std::size_t(projection.size()))));
  return AudioEncoder(std::move(mean), std::move(projection), std::move(batch));
}

// Collaborative ----------------------------------------------------------------

CollabEncoder::CollabEncoder(Matrix factors, std::vector<bool> known, BatchId batch)
    : factors_(std::move(factors)), known_(std::move(known)), batch_(std::move(batch)) {
  if (factors_.cols() < 2) throw ConfigError("encoder dim must be >= 2");
  if (static_cast<Eigen::Index>(known_.size()) != factors_.rows()) {
    throw ShapeError("known-mask size mismatch");
  }
}

TrackEmbedding CollabEncoder::embed(TrackId id) const {
  if (id >= known_.size() || !known_[id]) {
    return {id, Vector::Zero(factors_.cols()), Space::kCollaborative, batch_, true};
  }
  return {id, factors_.row(id).transpose(), Space::kCollaborative, batch_, false};
}

TrackEmbedding CollabEncoder::embed(const synth::Track& track) const { return embed(track.id); }

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Cooccurrence {
  std::vector<TrackId> tracks;   // compact index -> track id
  SparseMatrix ppmi;             // symmetric, compact indices
};

Cooccurrence build_ppmi(std::span<const synth::Playlist> playlists, std::uint32_t n_tracks,
                        const CollabOptions& opt) {
  std::vector<std::int64_t> index(n_tracks, -1);
  Cooccurrence out;
  for (const auto& pl : playlists) {
    for (TrackId t : pl) {
      if (t >= n_tracks) throw ShapeError("playlist references unknown track " + std::to_string(t));
    }
    if (pl.size() < 2) continue;
    for (TrackId t : pl) {
      if (index[t] < 0) {
        index[t] = std::int64_t(out.tracks.size());
        out.tracks.push_back(t);
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(out.tracks.size());
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& pl : playlists) {
    for (std::size_t a = 0; a < pl.size(); ++a) {
      for (std::size_t b = 0; b < pl.size(); ++b) {
        if (pl[a] == pl[b]) continue;
        trip.emplace_back(index[pl[a]], index[pl[b]], 1.0);
      }
    }
  }
  SparseMatrix counts(n, n);
  counts.setFromTriplets(trip.begin(), trip.end());
  counts.makeCompressed();
  for (Eigen::Index k = 0; k < counts.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(counts, k); it; ++it) it.valueRef() += opt.smoothing;
  }

  Vector row_sum = Vector::Zero(n);
  for (Eigen::Index k = 0; k < counts.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(counts, k); it; ++it) row_sum[it.row()] += it.value();
  }
  const double total = row_sum.sum();
  const Vector ctx = row_sum.array().pow(opt.context_power);
  const double ctx_total = ctx.sum();

  std::vector<Eigen::Triplet<double>> ppmi;
  for (Eigen::Index k = 0; k < counts.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(counts, k); it; ++it) {
      const double p_ij = it.value() / total;
      const double p_i = row_sum[it.row()] / total;
      const double p_j = ctx[it.col()] / ctx_total;
      const double pmi = std::log(p_ij / (p_i * p_j));
      if (pmi > 0) {
        // Context smoothing makes PMI asymmetric; store the symmetric part.
        ppmi.emplace_back(it.row(), it.col(), 0.5 * pmi);
        ppmi.emplace_back(it.col(), it.row(), 0.5 * pmi);
      }
    }
  }
  out.ppmi.resize(n, n);
  out.ppmi.setFromTriplets(ppmi.begin(), ppmi.end());
  out.ppmi.makeCompressed();
  return out;
}

Matrix orthonormalize(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

// Leading positive eigenpairs of a symmetric matrix, at most `dim`.
std::pair<Vector, Matrix> leading_spectrum(const SparseMatrix& m, std::uint32_t dim,
                                           std::uint64_t seed, const CollabOptions& opt) {
  const Eigen::Index n = m.rows();
  Vector values;
  Matrix vectors;
  if (n <= Eigen::Index(dim + opt.oversample) || n <= 400) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig{Matrix(m)};
    if (eig.info() != Eigen::Success) throw TrainingError("eigendecomposition failed");
    values = eig.eigenvalues().reverse();
    vectors = eig.eigenvectors().rowwise().reverse();
  } else {
    const Eigen::Index l = std::min<Eigen::Index>(n, dim + opt.oversample);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix omega(n, l);
    for (Eigen::Index c = 0; c < l; ++c)
      for (Eigen::Index r = 0; r < n; ++r) omega(r, c) = g(rng);
    Matrix q = orthonormalize(m * omega);
    for (std::uint32_t it = 0; it < opt.power_iterations; ++it) q = orthonormalize(m * q);
    const Matrix small = q.transpose() * (m * q);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (small + small.transpose()));
    if (eig.info() != Eigen::Success) throw TrainingError("eigendecomposition failed");
    values = eig.eigenvalues().reverse();
    vectors = q * eig.eigenvectors().rowwise().reverse();
  }
  Eigen::Index keep = 0;
  while (keep < values.size() && keep < Eigen::Index(dim) && values[keep] > 1e-12) ++keep;
  Matrix top = vectors.leftCols(keep);
  fix_signs(top);
  return {values.head(keep), top};
}

}  // namespace

Matrix ppmi_matrix(std::span<const synth::Playlist> playlists, std::uint32_t n_tracks,
                   const CollabOptions& options) {
  const auto co = build_ppmi(playlists, n_tracks, options);
  Matrix dense = Matrix::Zero(n_tracks, n_tracks);
  for (Eigen::Index k = 0; k < co.ppmi.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(co.ppmi, k); it; ++it) {
      dense(co.tracks[std::size_t(it.row())], co.tracks[std::size_t(it.col())]) = it.value();
    }
  }
  return dense;
}

CollabEncoder train_collab_encoder(std::span<const synth::Playlist> playlists,
                                   std::uint32_t n_tracks, std::uint32_t dim,
                                   std::uint64_t seed, BatchId batch,
                                   const CollabOptions& options) {
  if (playlists.empty()) throw TrainingError("collaborative encoder needs playlists");
  if (dim < 2) throw ConfigError("encoder dim must be >= 2");
  const auto co = build_ppmi(playlists, n_tracks, options);
  if (co.tracks.empty()) throw TrainingError("no playlist has two or more tracks");

  auto [values, vectors] = leading_spectrum(co.ppmi, dim, seed, options);
  Matrix compact = vectors * values.cwiseSqrt().asDiagonal();

  Matrix factors = Matrix::Zero(n_tracks, dim);
  std::vector<bool> known(n_tracks, false);
  for (std::size_t i = 0; i < co.tracks.size(); ++i) {
    factors.row(co.tracks[i]).head(compact.cols()) = compact.row(Eigen::Index(i));
    known[co.tracks[i]] = true;
  }
  if (options.unit_mean_norm) {
    double sum = 0.0;
    for (TrackId t : co.tracks) sum += factors.row(t).norm();
    const double mean = sum / double(co.tracks.size());
    if (mean > 0) factors /= mean;
  }
  check_finite(factors, "collaborative encoder");
  batch.fingerprint = hex64(fnv1a(std::string_view(
      reinterpret_cast<const char*>(factors.data()), sizeof(double) * std::size_t(factors.size()))));
  return CollabEncoder(std::move(factors), std::move(known), std::move(batch));
}

// TrackSpace --------------------------------------------------------------------

TrackSpace TrackSpace::build(const synth::World& world, const AudioEncoder& audio,
                             const CollabEncoder& collab) {
  TrackSpace s;
  const auto n = static_cast<Eigen::Index>(world.tracks.size());
  if (collab.factors().rows() != n) {
    throw ShapeError("collaborative encoder covers " + std::to_string(collab.factors().rows()) +
                     " tracks, world has " + std::to_string(n));
  }
  s.audio.resize(n, audio.dim());
  for (const auto& t : world.tracks) s.audio.row(t.id) = audio.project(t.acoustic_features).transpose();
  s.collab = collab.factors();
  s.collab_known = collab.known();
  s.track_artist.resize(world.tracks.size());
  for (const auto& t : world.tracks) s.track_artist[t.id] = t.artist_id;

  const auto n_artists = static_cast<Eigen::Index>(world.artists.size());
  s.artist_collab = Matrix::Zero(n_artists, collab.dim());
  s.artist_audio = Matrix::Zero(n_artists, audio.dim());
  std::vector<int> collab_count(world.artists.size(), 0), audio_count(world.artists.size(), 0);
  for (const auto& t : world.tracks) {
    s.artist_audio.row(t.artist_id) += s.audio.row(t.id);
    ++audio_count[t.artist_id];
    if (s.collab_known[t.id]) {
      s.artist_collab.row(t.artist_id) += s.collab.row(t.id);
      ++collab_count[t.artist_id];
    }
  }
  for (Eigen::Index a = 0; a < n_artists; ++a) {
    if (collab_count[std::size_t(a)] > 0) s.artist_collab.row(a) /= collab_count[std::size_t(a)];
    if (audio_count[std::size_t(a)] > 0) s.artist_audio.row(a) /= audio_count[std::size_t(a)];
  }
  s.audio_batch = audio.batch_id();
  s.collab_batch = collab.batch_id();
  return s;
}

Vector TrackSpace::track_vector(TrackId t) const {
  Vector v(audio.cols() + collab.cols());
  v << audio.row(t).transpose(), collab.row(t).transpose();
  return v;
}

// Artifacts -------------------------------------------------------------------------

std::string batch_to_json(const BatchId& b) { return detail::to_json(b).dump(); }
BatchId batch_from_json(const std::string& text) { return detail::batch_from(json::parse(text)); }

void save_encoder(const ModalityEncoder& encoder, const std::filesystem::path& file) {
  json j{{"format", "urep-modality-encoder"},
         {"version", 1},
         {"kind", space_name(encoder.space())},
         {"dim", encoder.dim()},
         {"batch", detail::to_json(encoder.batch_id())}};
  if (const auto* a = dynamic_cast<const AudioEncoder*>(&encoder)) {
    j["mean"] = detail::to_json(a->mean());
    j["projection"] = detail::to_json(a->projection());
  } else if (const auto* c = dynamic_cast<const CollabEncoder*>(&encoder)) {
    j["factors"] = detail::to_json(c->factors());
    std::vector<int> known(c->known().begin(), c->known().end());
    j["known"] = known;
  } else {
    throw IoError("unsupported encoder type");
  }
  write_text_file(file, j.dump());
}

std::unique_ptr<ModalityEncoder> load_encoder(const std::filesystem::path& file) {
  try {
    const auto j = json::parse(read_text_file(file));
    detail::check_format(j, "urep-modality-encoder", 1);
    const auto kind = j.at("kind").get<std::string>();
    auto batch = detail::batch_from(j.at("batch"));
    if (kind == "audio") {
      return std::make_unique<AudioEncoder>(detail::vector_from(j.at("mean")),
                                            detail::matrix_from(j.at("projection")), batch);
    }
    if (kind == "collaborative") {
      const auto k = j.at("known").get<std::vector<int>>();
      return std::make_unique<CollabEncoder>(detail::matrix_from(j.at("factors")),
                                             std::vector<bool>(k.begin(), k.end()), batch);
    }
    throw IoError("unknown encoder kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw IoError("malformed encoder artifact " + file.string() + ": " + e.what());
  }
}

}  // namespace urep::modality
