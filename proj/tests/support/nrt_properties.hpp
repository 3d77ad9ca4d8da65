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

// Replay checks for near-real-time inference, shared by the unit and
// acceptance suites.

#ifndef UREP_TESTS_NRT_PROPERTIES_HPP_
#define UREP_TESTS_NRT_PROPERTIES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "urep/serving.hpp"

namespace urep::testing {

struct NrtSuiteResult {
  std::size_t events = 0;
  std::size_t users = 0;
  double replay_diff = 0.0;      // inline replay vs inline replay
  double parallel_diff = 0.0;    // inline replay vs sharded workers
  double duplicate_diff = 0.0;   // inline replay vs duplicated delivery
  bool same_entries = true;      // identical (batch, user, as_of) sets
  std::size_t as_of_regressions = 0;
  std::size_t duplicates_seen = 0;
};

namespace detail {

// Max coordinate difference; infinity when the entry sets differ.
inline double store_diff(const serving::EmbeddingStore& a, const serving::EmbeddingStore& b,
                         bool& same_entries) {
  double worst = 0.0;
  if (a.batches().size() != b.batches().size()) {
    same_entries = false;
    return INFINITY;
  }
  for (const auto& batch : a.batches()) {
    const auto sa = a.snapshot(batch);
    const auto sb = b.snapshot(batch);
    if (sa.size() != sb.size()) {
      same_entries = false;
      return INFINITY;
    }
    for (std::size_t i = 0; i < sa.size(); ++i) {
      if (sa[i].user_id != sb[i].user_id || sa[i].as_of != sb[i].as_of || sa[i].z.size() != sb[i].z.size()) {
        same_entries = false;
        return INFINITY;
      }
      worst = std::max(worst, (sa[i].z - sb[i].z).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace detail

/// Replays `events` (time ordered) against processors seeded with `history`
/// for the listed users: twice inline, once over worker shards, and once
/// with every event delivered twice plus late redeliveries of earlier events.
inline NrtSuiteResult run_nrt_suite(const serving::InferenceContext& ctx,
                                    std::span<const synth::UserEvents> history,
                                    std::span<const UserId> seeded_users,
                                    std::span<const synth::Event> events, std::uint64_t seed) {
  NrtSuiteResult r;
  r.events = events.size();
  r.users = seeded_users.size();
  auto prepare = [&](serving::NrtProcessor& p) {
    for (UserId u : seeded_users) p.seed(u, history[u]);
  };

  serving::EmbeddingStore first;
  {
    serving::NrtProcessor p(ctx, first);
    prepare(p);
    std::map<UserId, SimTime> last;
    const BatchId batch = ctx.model->batch_id();
    for (const auto& e : events) {
      p.handle(serving::TriggerEvent::from(e));
      const auto t = first.as_of(e.user, batch);
      if (!t) continue;
      const auto it = last.find(e.user);
      if (it != last.end() && *t < it->second) ++r.as_of_regressions;
      last[e.user] = *t;
    }
  }
  serving::EmbeddingStore second;
  {
    serving::NrtProcessor p(ctx, second);
    prepare(p);
    for (const auto& e : events) p.handle(serving::TriggerEvent::from(e));
  }
  serving::EmbeddingStore sharded;
  {
    serving::NrtProcessor p(ctx, sharded, {4, 0.0});
    prepare(p);
    for (const auto& e : events) p.submit(serving::TriggerEvent::from(e));
    p.drain();
  }
  serving::EmbeddingStore duplicated;
  {
    serving::NrtProcessor p(ctx, duplicated);
    prepare(p);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < events.size(); ++i) {
      p.handle(serving::TriggerEvent::from(events[i]));
      p.handle(serving::TriggerEvent::from(events[i]));
      if (i > 0 && rng() % 10 == 0) p.handle(serving::TriggerEvent::from(events[rng() % i]));
    }
    r.duplicates_seen = p.stats().duplicates;
  }
  r.replay_diff = detail::store_diff(first, second, r.same_entries);
  r.parallel_diff = detail::store_diff(first, sharded, r.same_entries);
  r.duplicate_diff = detail::store_diff(first, duplicated, r.same_entries);
  return r;
}

}  // namespace urep::testing

#endif  // UREP_TESTS_NRT_PROPERTIES_HPP_
