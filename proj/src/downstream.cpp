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

#include "urep/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_util.hpp"

namespace urep::downstream {

using detail::json;

RepMatrix stack_representations(std::span<const userrep::UserRepresentation> reps) {
  RepMatrix out;
  if (reps.empty()) return out;
  out.batch = reps.front().model_batch;
  out.z.resize(Eigen::Index(reps.size()), reps.front().z.size());
  for (std::size_t i = 0; i < reps.size(); ++i) {
    assert_same_batch(out.batch, reps[i].model_batch);
    if (reps[i].z.size() != out.z.cols()) throw ShapeError("representation widths differ");
    out.z.row(Eigen::Index(i)) = reps[i].z.transpose();
    out.ids.push_back(reps[i].user_id);
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

Matrix concat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("pair halves have different row counts");
  Matrix x(a.rows(), a.cols() + b.cols());
  x << a, b;
  return x;
}

void check_labels(const std::vector<int>& labels, Eigen::Index rows) {
  if (Eigen::Index(labels.size()) != rows) throw ShapeError("label count != example count");
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ConfigError("labels must be 0 or 1");
    (y ? pos : neg) = true;
  }
  if (!pos || !neg) throw TrainingError("training data has a single class");
}

/// Shuffled mini-batch indices for one epoch.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, nn::Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    out.emplace_back(order.begin() + std::ptrdiff_t(s),
                     order.begin() + std::ptrdiff_t(std::min(n, s + batch)));
  }
  return out;
}

Matrix gather(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(Eigen::Index(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = m.row(Eigen::Index(rows[i]));
  return out;
}

}  // namespace

// Pair classifier -----------------------------------------------------------------

PairClassifier::PairClassifier(Vector mean, Vector scale, nn::Mlp net, std::size_t user_dim,
                               std::vector<BatchId> user_pins, std::vector<BatchId> target_pins)
    : mean_(std::move(mean)),
      scale_(std::move(scale)),
      net_(std::move(net)),
      user_dim_(user_dim),
      user_pins_(std::move(user_pins)),
      target_pins_(std::move(target_pins)) {
  if (std::size_t(mean_.size()) != net_.input_dim() || scale_.size() != mean_.size()) {
    throw ShapeError("standardization width != classifier input");
  }
  if (net_.output_dim() != 1) throw ShapeError("classifier must end in one logit");
  if (user_dim_ > net_.input_dim()) throw ShapeError("user width exceeds classifier input");
}

Vector PairClassifier::predict(const Matrix& users, const Matrix& targets,
                               const std::vector<BatchId>& user_batches,
                               const std::vector<BatchId>& target_batches) const {
  assert_same_batches(user_pins_, user_batches);
  assert_same_batches(target_pins_, target_batches);
  if (std::size_t(users.cols()) != user_dim_ ||
      std::size_t(users.cols() + targets.cols()) != net_.input_dim()) {
    throw ShapeError("pair widths (" + std::to_string(users.cols()) + ", " +
                     std::to_string(targets.cols()) + ") do not match classifier input " +
                     std::to_string(net_.input_dim()));
  }
  Matrix x = concat(users, targets);
  x = (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  const Matrix logits = net_.forward(x);
  Vector p(logits.rows());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(logits(i, 0));
  return p;
}

double PairClassifier::predict(const Vector& user, const Vector& target,
                               const std::vector<BatchId>& user_batches,
                               const std::vector<BatchId>& target_batches) const {
  return predict(Matrix(user.transpose()), Matrix(target.transpose()), user_batches,
                 target_batches)[0];
}

PairClassifier train_pair_classifier(const PairData& data, const ClassifierConfig& config) {
  if (config.batch_size < 1 || config.hidden < 1) throw ConfigError("bad classifier config");
  check_labels(data.labels, data.users.rows());
  const Matrix raw = concat(data.users, data.targets);
  if (!raw.allFinite()) throw TrainingError("non-finite classifier input");
  const Vector mean = raw.colwise().mean().transpose();
  Vector scale = ((raw.rowwise() - mean.transpose()).array().square().colwise().sum() /
                  double(raw.rows()))
                     .sqrt()
                     .transpose();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (scale[i] < 1e-8) scale[i] = 1.0;
  }
  const Matrix x = (raw.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();

  nn::Mlp net({std::size_t(x.cols()), config.hidden, 1},
              {nn::Activation::kSelu, nn::Activation::kIdentity}, 0.0,
              derive_seed(config.seed, "pair-classifier-init"));
  nn::OptimizerConfig oc;
  oc.kind = nn::OptimizerKind::kAdam;
  oc.learning_rate = config.learning_rate;
  oc.weight_decay = config.weight_decay;
  nn::Optimizer opt(oc, {&net.layers()});
  nn::Rng rng(derive_seed(config.seed, "pair-classifier-train"));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& rows : minibatches(std::size_t(x.rows()), config.batch_size, rng)) {
      const Matrix xb = gather(x, rows);
      nn::Mlp::Trace trace;
      const Matrix logits = net.forward(xb, trace, nullptr);
      Matrix g(logits.rows(), 1);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        g(i, 0) = (sigmoid(logits(i, 0)) - data.labels[rows[std::size_t(i)]]) / double(rows.size());
      }
      auto grads = net.zero_like();
      net.backward(trace, g, grads);
      if (!nn::all_finite(grads)) throw TrainingError("non-finite classifier gradient");
      opt.step({&net.layers()}, {&grads});
    }
  }
  return PairClassifier(mean, scale, std::move(net), std::size_t(data.users.cols()),
                        data.user_batches, data.target_batches);
}

// Two-tower -----------------------------------------------------------------------

TwoTower::TwoTower(nn::Mlp user_tower, nn::Mlp item_tower, std::vector<BatchId> user_pins,
                   std::vector<BatchId> item_pins)
    : user_tower_(std::move(user_tower)),
      item_tower_(std::move(item_tower)),
      user_pins_(std::move(user_pins)),
      item_pins_(std::move(item_pins)) {
  if (user_tower_.output_dim() != item_tower_.output_dim()) {
    throw ShapeError("tower output widths differ");
  }
}

Matrix TwoTower::user_vectors(const Matrix& users, const std::vector<BatchId>& batches) const {
  assert_same_batches(user_pins_, batches);
  return user_tower_.forward(users);
}

Matrix TwoTower::item_vectors(const Matrix& items, const std::vector<BatchId>& batches) const {
  assert_same_batches(item_pins_, batches);
  return item_tower_.forward(items);
}

double TwoTower::score(const Vector& user, const Vector& item,
                       const std::vector<BatchId>& user_batches,
                       const std::vector<BatchId>& item_batches) const {
  const Matrix u = user_vectors(Matrix(user.transpose()), user_batches);
  const Matrix v = item_vectors(Matrix(item.transpose()), item_batches);
  return u.row(0).dot(v.row(0));
}

TwoTower train_two_tower(const Matrix& users, const std::vector<BatchId>& user_batches,
                         const Matrix& items, const std::vector<BatchId>& item_batches,
                         std::span<const Interaction> interactions, const TwoTowerConfig& config) {
  if (config.output_dim < 2) throw ConfigError("two-tower output dim must be >= 2");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<int> labels;
  for (const auto& it : interactions) {
    if (it.user_row >= std::size_t(users.rows()) || it.item_row >= std::size_t(items.rows())) {
      throw ShapeError("interaction row out of range");
    }
    labels.push_back(it.label);
  }
  check_labels(labels, Eigen::Index(labels.size()));

  const std::vector<nn::Activation> acts{nn::Activation::kSelu, nn::Activation::kIdentity};
  nn::Mlp ut({std::size_t(users.cols()), config.hidden, config.output_dim}, acts, 0.0,
             derive_seed(config.seed, "user-tower"));
  nn::Mlp it({std::size_t(items.cols()), config.hidden, config.output_dim}, acts, 0.0,
             derive_seed(config.seed, "item-tower"));
  nn::OptimizerConfig oc;
  oc.kind = nn::OptimizerKind::kAdam;
  oc.learning_rate = config.learning_rate;
  nn::Optimizer opt(oc, {&ut.layers(), &it.layers()});
  nn::Rng rng(derive_seed(config.seed, "two-tower-train"));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& rows : minibatches(interactions.size(), config.batch_size, rng)) {
      Matrix ub(Eigen::Index(rows.size()), users.cols());
      Matrix ib(Eigen::Index(rows.size()), items.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        ub.row(Eigen::Index(i)) = users.row(Eigen::Index(interactions[rows[i]].user_row));
        ib.row(Eigen::Index(i)) = items.row(Eigen::Index(interactions[rows[i]].item_row));
      }
      nn::Mlp::Trace tu, ti;
      const Matrix u = ut.forward(ub, tu, nullptr);
      const Matrix v = it.forward(ib, ti, nullptr);
      Vector ds(u.rows());
      for (Eigen::Index i = 0; i < u.rows(); ++i) {
        ds[i] = (sigmoid(u.row(i).dot(v.row(i))) - interactions[rows[std::size_t(i)]].label) /
                double(rows.size());
      }
      const Matrix du = ds.asDiagonal() * v;
      const Matrix dv = ds.asDiagonal() * u;
      auto gu = ut.zero_like();
      auto gi = it.zero_like();
      ut.backward(tu, du, gu);
      it.backward(ti, dv, gi);
      if (!nn::all_finite(gu) || !nn::all_finite(gi)) {
        throw TrainingError("non-finite two-tower gradient");
      }
      opt.step({&ut.layers(), &it.layers()}, {&gu, &gi});
    }
  }
  return TwoTower(std::move(ut), std::move(it), user_batches, item_batches);
}

ItemIndex build_item_index(const TwoTower& model, std::vector<TrackId> ids, const Matrix& items,
                           const std::vector<BatchId>& item_batches) {
  if (Eigen::Index(ids.size()) != items.rows()) throw ShapeError("id count != item rows");
  ItemIndex index;
  index.vectors = model.item_vectors(items, item_batches);
  index.ids = std::move(ids);
  index.batches = item_batches;
  return index;
}

Retrieval retrieve(const Vector& query, const ItemIndex& index, std::size_t k) {
  if (query.size() != index.vectors.cols()) throw ShapeError("query width != index width");
  const Vector scores = index.vectors * query;
  std::vector<std::size_t> order(index.ids.size());
  std::iota(order.begin(), order.end(), 0);
  Retrieval r;
  if (k > order.size()) {
    r.truncated = true;
    k = order.size();
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[Eigen::Index(a)] != scores[Eigen::Index(b)]) {
      return scores[Eigen::Index(a)] > scores[Eigen::Index(b)];
    }
    return index.ids[a] < index.ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(), better);
  for (std::size_t i = 0; i < k; ++i) {
    r.ids.push_back(index.ids[order[i]]);
    r.scores.push_back(scores[Eigen::Index(order[i])]);
  }
  return r;
}

Retrieval retrieve(const TwoTower& model, const Vector& user,
                   const std::vector<BatchId>& user_batches, const ItemIndex& index,
                   std::size_t k) {
  assert_same_batches(model.item_pins(), index.batches);
  const Matrix u = model.user_vectors(Matrix(user.transpose()), user_batches);
  return retrieve(Vector(u.row(0).transpose()), index, k);
}

// Artist follows ------------------------------------------------------------------

std::vector<Follow> artist_follow_labels(const synth::World& world, std::span<const UserId> users,
                                         std::size_t per_user, double noise, std::uint64_t seed) {
  if (noise < 0.0 || noise > 0.5) throw ConfigError("label noise must lie in [0, 0.5]");
  std::vector<Follow> out;
  for (UserId u : users) {
    if (u >= world.users.size()) throw NotFoundError("unknown user " + std::to_string(u));
    nn::Rng rng(derive_seed(seed, "follow-" + std::to_string(u)));
    const auto arch = world.users[u].archetype_id;
    std::vector<ArtistId> in, outside;
    for (const auto& a : world.artists) (a.archetype_id == arch ? in : outside).push_back(a.id);
    std::bernoulli_distribution flip(noise);
    auto draw = [&](const std::vector<ArtistId>& pool, int label) {
      if (pool.empty()) return;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t i = 0; i < per_user; ++i) {
        const ArtistId a = pool[pick(rng)];
        out.push_back({u, a, flip(rng) ? 1 - label : label});
      }
    };
    draw(in, 1);
    draw(outside, 0);
  }
  return out;
}

// Artifacts -----------------------------------------------------------------------

void save_classifier(const PairClassifier& c, const std::filesystem::path& file) {
  json j{{"format", "urep-pair-classifier"},
         {"version", 1},
         {"user_dim", c.user_dim()},
         {"user_pins", detail::to_json(c.user_pins())},
         {"target_pins", detail::to_json(c.target_pins())},
         {"mean", detail::to_json(c.mean())},
         {"scale", detail::to_json(c.scale())},
         {"net", detail::mlp_json(c.net())}};
  write_text_file(file, j.dump());
}

PairClassifier load_classifier(const std::filesystem::path& file) {
  try {
    const auto j = json::parse(read_text_file(file));
    detail::check_format(j, "urep-pair-classifier", 1);
    return PairClassifier(detail::vector_from(j.at("mean")), detail::vector_from(j.at("scale")),
                          detail::mlp_from(j.at("net")), j.at("user_dim").get<std::size_t>(),
                          detail::batches_from(j.at("user_pins")),
                          detail::batches_from(j.at("target_pins")));
  } catch (const json::exception& e) {
    throw IoError("malformed classifier " + file.string() + ": " + e.what());
  }
}

void save_two_tower(const TwoTower& t, const std::filesystem::path& file) {
  json j{{"format", "urep-two-tower"},
         {"version", 1},
         {"user_pins", detail::to_json(t.user_pins())},
         {"item_pins", detail::to_json(t.item_pins())},
         {"user_tower", detail::mlp_json(t.user_tower())},
         {"item_tower", detail::mlp_json(t.item_tower())}};
  write_text_file(file, j.dump());
}

TwoTower load_two_tower(const std::filesystem::path& file) {
  try {
    const auto j = json::parse(read_text_file(file));
    detail::check_format(j, "urep-two-tower", 1);
    return TwoTower(detail::mlp_from(j.at("user_tower")), detail::mlp_from(j.at("item_tower")),
                    detail::batches_from(j.at("user_pins")),
                    detail::batches_from(j.at("item_pins")));
  } catch (const json::exception& e) {
    throw IoError("malformed two-tower model " + file.string() + ": " + e.what());
  }
}

}  // namespace urep::downstream
