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

// Acceptance run. Prints detail lines prefixed with "  " and one
// "AC<n> PASS|FAIL <name>" line per criterion; exits nonzero on any FAIL.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "lineage_properties.hpp"
#include "nrt_properties.hpp"
#include "urep/experiment.hpp"
#include "urep/metrics.hpp"
#include "urep/nn.hpp"
#include "urep/pipeline.hpp"
#include "urep/serving.hpp"
#include "urep/userrep.hpp"

namespace {

using namespace urep;
namespace fs = std::filesystem;

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

struct Verdict {
  int id;
  std::string name;
  bool pass;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& name, bool pass) {
  verdicts.push_back({id, name, pass});
  std::printf("AC%d %s %s\n", id, pass ? "PASS" : "FAIL", name.c_str());
  std::fflush(stdout);
}

template <typename... Args>
void detail(const char* fmt, Args... args) {
  std::printf("  ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

// Independent oracles ----------------------------------------------------------

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

double direct_ndcg(const std::vector<std::uint32_t>& retrieved,
                   const std::unordered_set<std::uint32_t>& relevant, std::size_t k) {
  if (relevant.empty()) return 0.0;
  double dcg = 0.0, ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, retrieved.size()); ++i) {
    if (relevant.count(retrieved[i])) dcg += 1.0 / std::log2(double(i) + 2.0);
  }
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) ideal += 1.0 / std::log2(double(i) + 2.0);
  return dcg / ideal;
}

// Per-seed experiment ----------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;
  experiment::MetricReport full;
  std::vector<experiment::AblationResult> ablations;
  double seconds = 0.0;
};

double metric(const experiment::MetricReport& r, const std::string& key) {
  const auto it = r.find(key);
  return it == r.end() ? std::nan("") : it->second;
}

double ablation_delta(const SeedRun& run, const std::string& mask, const std::string& key) {
  for (const auto& a : run.ablations) {
    if (a.mask == mask) return metric(a.delta, key);
  }
  return std::nan("");
}

// 5-epoch trailing moving average must never rise.
bool smoothed_nonincreasing(const std::vector<double>& trace) {
  if (trace.size() < 5) return true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 4; i < trace.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i - 4; j <= i; ++j) s += trace[j];
    s /= 5.0;
    if (s > prev) return false;
    prev = s;
  }
  return true;
}

// Criteria -----------------------------------------------------------------------

void ac1(const std::vector<SeedRun>& runs) {
  bool ok = true;
  for (const auto& r : runs) {
    const auto& t = r.loss_trace;
    const bool conv = !t.empty() && t.size() <= 30 && t.back() <= 0.5 * t.front();
    const bool mono = smoothed_nonincreasing(t);
    detail("seed %llu: %zu epochs, loss %.5f -> %.5f (ratio %.3f), smoothed nonincreasing %s",
           (unsigned long long)r.seed, t.size(), t.front(), t.back(), t.back() / t.front(),
           mono ? "yes" : "no");
    ok = ok && conv && mono;
  }
  report(1, "autoencoder convergence", ok);
}

void ac2() {
  auto m = userrep::init_model(9, 3, {7, 5}, 2026, 0.0);
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(12, 9);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  auto lg = userrep::loss_and_gradient(m, x);
  auto enc_p = nn::parameter_pointers(m.encoder().layers());
  auto dec_p = nn::parameter_pointers(m.decoder().layers());
  auto enc_g = nn::parameter_pointers(lg.encoder_grad);
  auto dec_g = nn::parameter_pointers(lg.decoder_grad);
  std::vector<std::pair<double*, double*>> all;
  for (std::size_t i = 0; i < enc_p.size(); ++i) all.push_back({enc_p[i], enc_g[i]});
  for (std::size_t i = 0; i < dec_p.size(); ++i) all.push_back({dec_p[i], dec_g[i]});
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    auto [p, grad] = all[rng() % all.size()];
    const double keep = *p, h = 1e-5;
    *p = keep + h;
    const double up = userrep::reconstruction_loss(m, x);
    *p = keep - h;
    const double down = userrep::reconstruction_loss(m, x);
    *p = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - *grad) /
                                std::max({std::abs(numeric), std::abs(*grad), 1e-6}));
  }
  detail("100 probes over %zu parameters, worst relative error %.2e", all.size(), worst);
  report(2, "gradient oracle", worst <= 1e-4);
}

void ac3(const std::vector<SeedRun>& runs) {
  bool ok = true;
  for (const auto& r : runs) {
    const double rep = metric(r.full, "established.rep.auc");
    const double avg = metric(r.full, "established.average.auc");
    const double nmf = metric(r.full, "established.nmf.auc");
    detail("seed %llu: rep %.4f  average %.4f (%+.4f)  nmf %.4f (%+.4f)", (unsigned long long)r.seed,
           rep, avg, rep - avg, nmf, rep - nmf);
    ok = ok && rep >= avg && rep - nmf >= 0.03;
  }
  report(3, "established-user AUC vs baselines", ok);
}

void ac4(const std::vector<SeedRun>& runs) {
  bool ok = true;
  for (const auto& r : runs) {
    const double c_rep = metric(r.full, "coldstart.completed.rep.auc");
    const double c_pop = metric(r.full, "coldstart.completed.popularity.auc");
    const double c_ob = metric(r.full, "coldstart.completed.onboarding_average.auc");
    const double n_rep = metric(r.full, "coldstart.not_completed.rep.auc");
    const double n_pop = metric(r.full, "coldstart.not_completed.popularity.auc");
    detail("seed %llu: completed rep %.4f  popularity %.4f (%+.4f)  onboarding avg %.4f (%+.4f)",
           (unsigned long long)r.seed, c_rep, c_pop, c_rep - c_pop, c_ob, c_rep - c_ob);
    detail("seed %llu: not completed rep %.4f  popularity %.4f (%+.4f)", (unsigned long long)r.seed,
           n_rep, n_pop, n_rep - n_pop);
    ok = ok && c_rep - c_pop >= 0.10 && n_rep >= n_pop && c_rep >= c_ob - 0.01;
  }
  report(4, "cold-start AUC vs baselines", ok);
}

void ac5(const std::vector<SeedRun>& runs) {
  bool ok = true;
  for (const auto& r : runs) {
    const double rep = metric(r.full, "clusters.archetype.rep");
    const double avg = metric(r.full, "clusters.archetype.average");
    const double rnd = metric(r.full, "clusters.archetype.random");
    detail("seed %llu: archetype nDCG@50 rep %.4f  average %.4f  random %.4f", (unsigned long long)r.seed,
           rep, avg, rnd);
    ok = ok && rep >= rnd + 0.30 && rep >= avg - 0.01;
  }
  std::mt19937_64 rng(50);
  std::vector<std::uint32_t> ids(150);
  std::iota(ids.begin(), ids.end(), 0u);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::shuffle(ids.begin(), ids.end(), rng);
    std::unordered_set<std::uint32_t> rel;
    const std::size_t n_rel = 1 + rng() % 80;
    while (rel.size() < n_rel) rel.insert(std::uint32_t(rng() % 150));
    if (metrics::ndcg_at_k(ids, rel, 50) != direct_ndcg(ids, rel, 50)) ++mismatches;
  }
  detail("nDCG@50 vs direct summation: %zu mismatches in 1000 permutations", mismatches);
  report(5, "planted-cluster recovery", ok && mismatches == 0);
}

void ac6(const std::vector<SeedRun>& runs) {
  struct Check {
    const char* mask;
    const char* key;
  };
  const Check checks[] = {{"onboarding", "clusters.onboarding.rep"},
                          {"modality", "established.rep.auc"},
                          {"modality", "clusters.favorite_artist.rep"},
                          {"static", "clusters.artist_country.rep"}};
  bool ok = true;
  for (const auto& r : runs) {
    for (const auto& c : checks) {
      const double d = ablation_delta(r, c.mask, c.key);
      detail("seed %llu: mask %-10s %-30s delta %+.4f", (unsigned long long)r.seed, c.mask, c.key, d);
      ok = ok && d < 0.0;
    }
  }
  report(6, "ablation directions", ok);
}

void ac7() {
  const auto r = urep::testing::run_lineage_suite(250, 2026);
  detail("%zu sequences, %zu steps, %zu completions, %zu invalidated, %zu deferred", r.sequences, r.steps,
         r.completions, r.invalidated, r.deferred);
  detail("faults caught %zu / %zu, violations %zu", r.faults_caught, r.faults_injected, r.violations.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(5, r.violations.size()); ++i) {
    detail("violation: %s", r.violations[i].c_str());
  }
  report(7, "batch-management properties",
         r.sequences >= 200 && r.violations.empty() && r.faults_injected > 0 &&
             r.faults_caught == r.faults_injected);
}

void ac8(const experiment::Context& ctx, const experiment::TrainedUserRep& rep) {
  serving::InferenceContext inf{&ctx.world, &ctx.space, &rep.model, rep.layout};
  const auto [history, future] = synth::split_log(ctx.log, ctx.cutoff);
  const auto by_user = synth::index_by_user(history, ctx.world.users.size());
  const auto r = urep::testing::run_nrt_suite(inf, by_user, ctx.established, future.events, 8);
  detail("%zu events over %zu users", r.events, r.users);
  detail("replay diff %.3g, sharded diff %.3g, duplicated-delivery diff %.3g, same entries %s",
         r.replay_diff, r.parallel_diff, r.duplicate_diff, r.same_entries ? "yes" : "no");
  detail("as_of regressions %zu, duplicate deliveries %zu", r.as_of_regressions, r.duplicates_seen);
  report(8, "NRT determinism and freshness",
         r.events > 0 && r.same_entries && r.replay_diff <= 1e-12 && r.parallel_diff <= 1e-12 &&
             r.duplicate_diff <= 1e-12 && r.as_of_regressions == 0 && r.duplicates_seen >= r.events);
}

void ac9() {
  const auto root = fs::temp_directory_path() / ("urep_acceptance_demo_" + std::to_string(::getpid()));
  fs::remove_all(root);
  bool ok = false;
  try {
    const auto config = pipeline::tiny_pipeline_config(1);
    pipeline::run_pipeline(root, config);
    pipeline::Workspace ws(root, config);
    const auto demo = pipeline::demo_rotation(ws);
    for (const auto& line : demo.transcript) detail("| %s", line.c_str());
    detail("%zu requests, %zu served from legacy batches, %zu unavailable, aligned %s", demo.requests,
           demo.legacy_served, demo.unavailable, demo.aligned ? "yes" : "no");
    ok = demo.legacy_served > 0 && demo.unavailable == 0 && demo.aligned;
  } catch (const std::exception& e) {
    detail("error: %s", e.what());
  }
  fs::remove_all(root);
  report(9, "rotation demo", ok);
}

void ac10() {
  std::mt19937_64 rng(10);
  std::size_t sets = 0, mismatches = 0;
  for (std::size_t n = 2; n <= 200; ++n) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<double> s(n);
      std::vector<int> y(n);
      // Alternate coarse (tie-heavy) and continuous scores.
      std::normal_distribution<double> g(0.0, 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = rep % 2 == 0 ? double(rng() % 7) : g(rng);
        y[i] = int(rng() % 2);
      }
      y[0] = 1;
      y[1] = 0;
      ++sets;
      if (metrics::auc(s, y) != pair_count_auc(s, y)) ++mismatches;
    }
  }
  detail("%zu sets of 2..200 examples, %zu mismatches", sets, mismatches);
  report(10, "AUC oracle", mismatches == 0);
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  std::vector<SeedRun> runs;
  // The first seed's world and model are reused for the NRT replay.
  std::optional<experiment::Context> keep_ctx;
  std::optional<experiment::TrainedUserRep> keep_rep;
  try {
    for (std::uint64_t seed : kSeeds) {
      const auto t0 = Clock::now();
      experiment::ExperimentConfig cfg;
      cfg.seed = seed;
      auto ctx = experiment::build_context(cfg);
      auto rep = experiment::train_userrep(ctx, features::FeatureMask{});
      SeedRun run;
      run.seed = seed;
      run.loss_trace = rep.loss_trace;
      run.full = experiment::evaluate(ctx, rep, {});
      run.ablations = experiment::run_ablations(ctx, run.full, {"onboarding", "modality", "static"});
      run.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      std::printf("  seed %llu: default world evaluated in %.1fs\n", (unsigned long long)seed, run.seconds);
      runs.push_back(std::move(run));
      if (!keep_ctx) {
        keep_ctx.emplace(std::move(ctx));
        keep_rep.emplace(std::move(rep));
      }
    }
  } catch (const std::exception& e) {
    std::printf("  experiment error: %s\n", e.what());
  }

  if (runs.size() == std::size(kSeeds)) {
    ac1(runs);
  } else {
    report(1, "autoencoder convergence", false);
  }
  ac2();
  if (runs.size() == std::size(kSeeds)) {
    ac3(runs);
    ac4(runs);
    ac5(runs);
    ac6(runs);
  } else {
    for (int id : {3, 4, 5, 6}) report(id, "experiment did not complete", false);
  }
  ac7();
  if (keep_ctx) {
    try {
      ac8(*keep_ctx, *keep_rep);
    } catch (const std::exception& e) {
      std::printf("  error: %s\n", e.what());
      report(8, "NRT determinism and freshness", false);
    }
  } else {
    report(8, "NRT determinism and freshness", false);
  }
  ac9();
  ac10();

  const auto failed = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return !v.pass; });
  std::printf("acceptance: %zu/%zu passed in %.1fs\n", verdicts.size() - std::size_t(failed), verdicts.size(),
              std::chrono::duration<double>(Clock::now() - start).count());
  return failed == 0 ? 0 : 1;
}
