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

#include "urep/serving.hpp"

#include <gtest/gtest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <numeric>

#include "nrt_properties.hpp"
#include "urep/experiment.hpp"
#include "json.hpp"

namespace urep::serving {
namespace {

UserRepresentation rep_of(UserId u, std::uint64_t gen, SimTime as_of, double value) {
  UserRepresentation r;
  r.user_id = u;
  r.z = Vector::Constant(3, value);
  r.model_batch = {"userrep", gen, 0, ""};
  r.as_of = as_of;
  return r;
}

TEST(StoreTest, LatestWinsPerBatch) {
  EmbeddingStore s;
  EXPECT_TRUE(s.put(rep_of(1, 1, 5.0, 0.5)));
  EXPECT_FALSE(s.put(rep_of(1, 1, 4.0, 0.7)));
  EXPECT_EQ(s.get(1, {"userrep", 1, 0, ""})->z[0], 0.5);
  EXPECT_TRUE(s.put(rep_of(1, 1, 5.0, 0.6)));  // same time: idempotent overwrite
  EXPECT_TRUE(s.put(rep_of(1, 2, 1.0, 0.9)));
  EXPECT_EQ(s.batches().size(), 2u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(*s.as_of(1, {"userrep", 1, 0, ""}), 5.0);
  EXPECT_FALSE(s.get(2, {"userrep", 1, 0, ""}));
  s.drop_batch({"userrep", 1, 0, ""});
  EXPECT_EQ(s.count({"userrep", 1, 0, ""}), 0u);
  EXPECT_THROW(s.put(rep_of(1, 0, 1.0, 0.0)), BatchConsistencyError);
}

TEST(StoreTest, SerializeRoundTrip) {
  EmbeddingStore s;
  s.put(rep_of(3, 1, 2.0, 0.125));
  s.put(rep_of(1, 1, 2.5, -1.0 / 3.0));
  s.put(rep_of(2, 2, 7.0, 1e-17));
  EmbeddingStore t;
  t.load(s.serialize());
  EXPECT_EQ(t.serialize(), s.serialize());
  EXPECT_EQ(t.get(1, {"userrep", 1, 0, ""})->z, s.get(1, {"userrep", 1, 0, ""})->z);
  const auto dir = std::filesystem::temp_directory_path() / "urep_store_test";
  s.save(dir);
  EmbeddingStore u;
  u.load_dir(dir);
  EXPECT_EQ(u.size(), 3u);
  std::filesystem::remove_all(dir);
}

TEST(PolicyTest, ParseForms) {
  EXPECT_EQ(BatchPolicy::parse("current").kind, BatchPolicy::Kind::kCurrent);
  EXPECT_EQ(BatchPolicy::parse("legacy").kind, BatchPolicy::Kind::kLegacy);
  const auto c = BatchPolicy::parse("consumer:downstream");
  EXPECT_EQ(c.kind, BatchPolicy::Kind::kConsumer);
  EXPECT_EQ(c.consumer, "downstream");
  EXPECT_EQ(BatchPolicy::parse("generation:3").generation, 3u);
  EXPECT_EQ(BatchPolicy::parse(c.str()).consumer, "downstream");
  EXPECT_THROW(BatchPolicy::parse("newest"), ConfigError);
  EXPECT_THROW(BatchPolicy::parse("generation:x"), ConfigError);
}

TEST(PolicyTest, ResolveAgainstStoreAndLineage) {
  EmbeddingStore s;
  s.put(rep_of(1, 1, 1.0, 0.1));
  s.put(rep_of(1, 2, 2.0, 0.2));
  EXPECT_EQ(get_representation(s, 1, "userrep", BatchPolicy::parse("current")).z[0], 0.2);
  EXPECT_EQ(get_representation(s, 1, "userrep", BatchPolicy::parse("legacy")).z[0], 0.1);
  EXPECT_THROW(get_representation(s, 9, "userrep", BatchPolicy::parse("current")), NotFoundError);

  lineage::LineageGraph g;
  g.register_model("userrep", {});
  g.register_model("task", {"userrep"});
  auto pins = g.begin_retrain("userrep");
  g.complete_retrain("userrep", pins);
  pins = g.begin_retrain("task");
  g.complete_retrain("task", pins);
  pins = g.begin_retrain("userrep");
  g.complete_retrain("userrep", pins);
  // The task still reads generation 1 until it retrains.
  EXPECT_EQ(get_representation(s, 1, "userrep", BatchPolicy::parse("consumer:task"), &g).z[0], 0.1);
  pins = g.begin_retrain("task");
  EXPECT_EQ(get_representation(s, 1, "userrep", BatchPolicy::parse("consumer:task"), &g).z[0], 0.1);
  g.complete_retrain("task", pins);
  EXPECT_EQ(get_representation(s, 1, "userrep", BatchPolicy::parse("consumer:task"), &g).z[0], 0.2);
}

class NrtTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ctx_ = new experiment::Context(experiment::build_context(experiment::tiny_config(3)));
    layout_ = new features::FeatureLayout(experiment::context_layout(*ctx_, {}));
    model_ = new userrep::AutoencoderModel(userrep::init_model(layout_->total_dim(), 6, {16}, 5));
    model_->assign_batch({"userrep", 1, ctx_->cutoff, ""}, ctx_->space.batches(), *layout_);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete layout_;
    delete ctx_;
  }
  InferenceContext inference() const { return {&ctx_->world, &ctx_->space, model_, *layout_}; }

  Vector direct(UserId u, const synth::UserEvents& ev, SimTime as_of) const {
    const auto f = features::assemble(features::snapshot_of(ctx_->world.users[u], ev), ctx_->space, as_of,
                                      *layout_);
    return userrep::encode(*model_, f).z;
  }

  static experiment::Context* ctx_;
  static features::FeatureLayout* layout_;
  static userrep::AutoencoderModel* model_;
};
experiment::Context* NrtTest::ctx_ = nullptr;
features::FeatureLayout* NrtTest::layout_ = nullptr;
userrep::AutoencoderModel* NrtTest::model_ = nullptr;

TEST_F(NrtTest, RegistrationOnlyUsesDemographics) {
  EmbeddingStore store;
  NrtProcessor p(inference(), store);
  const UserId u = ctx_->cold.front();
  const SimTime reg = ctx_->world.users[u].registration_time;
  const auto r = p.handle({TriggerKind::kRegistration, u, reg, 0, std::nullopt});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->source, userrep::RepSource::kColdStart);
  synth::UserEvents ev;
  ev.registration = reg;
  EXPECT_LT((r->z - direct(u, ev, reg)).norm(), 1e-12);
}

TEST_F(NrtTest, OnboardingThenListenScript) {
  EmbeddingStore store;
  NrtProcessor p(inference(), store);
  const UserId u = ctx_->cold.front();
  const SimTime reg = ctx_->world.users[u].registration_time;
  synth::OnboardingRecord rec;
  rec.completed = true;
  rec.selected_artists = {0};
  rec.selected_languages = {1};
  p.handle({TriggerKind::kOnboardingCompleted, u, reg + 0.1, 0, rec});
  const auto second = p.handle({TriggerKind::kListenActivity, u, reg + 0.5, 7, std::nullopt});
  EXPECT_EQ(p.stats().writes, 2u);
  synth::UserEvents ev;
  ev.onboarding = rec;
  ev.onboarding_time = reg + 0.1;
  ev.listens = {{reg + 0.5, 7}};
  EXPECT_LT((second->z - direct(u, ev, reg + 0.5)).norm(), 1e-12);
  EXPECT_EQ(store.get(u, model_->batch_id())->z, second->z);
  EXPECT_EQ(second->source, userrep::RepSource::kNrt);
}

TEST_F(NrtTest, DuplicateListenIsIdempotent) {
  EmbeddingStore store;
  NrtProcessor p(inference(), store);
  const UserId u = ctx_->established.front();
  p.seed(u, ctx_->by_user[u]);
  const TriggerEvent e{TriggerKind::kListenActivity, u, ctx_->config.world.horizon + 1.0, 3, std::nullopt};
  const auto a = p.handle(e);
  const auto b = p.handle(e);
  EXPECT_EQ(a->z, b->z);
  EXPECT_EQ(p.stats().duplicates, 1u);
}

TEST_F(NrtTest, UnknownUserAndTrackRejected) {
  EmbeddingStore store;
  NrtProcessor p(inference(), store);
  EXPECT_THROW(p.handle({TriggerKind::kRegistration, 1u << 30, 0.0, 0, std::nullopt}), NotFoundError);
  EXPECT_THROW(p.handle({TriggerKind::kListenActivity, 0, 1.0, 1u << 30, std::nullopt}), NotFoundError);
}

TEST_F(NrtTest, MismatchedModelRejected) {
  auto stale = userrep::init_model(layout_->total_dim(), 6, {16}, 5);
  stale.assign_batch({"userrep", 2, 0, ""}, {{"audio", 9, 0, ""}, {"collab", 1, 0, ""}}, *layout_);
  InferenceContext ic{&ctx_->world, &ctx_->space, &stale, *layout_};
  EXPECT_THROW(ic.check(), BatchConsistencyError);
  EmbeddingStore store;
  EXPECT_THROW(NrtProcessor(ic, store), BatchConsistencyError);
}

TEST_F(NrtTest, DebounceAndFlush) {
  EmbeddingStore store;
  NrtProcessor p(inference(), store, {0, 24.0});
  const UserId u = ctx_->established.front();
  const SimTime t = ctx_->config.world.horizon + 1.0;
  EXPECT_TRUE(p.handle({TriggerKind::kListenActivity, u, t, 1, std::nullopt}));
  EXPECT_FALSE(p.handle({TriggerKind::kListenActivity, u, t + 1.0, 2, std::nullopt}));
  EXPECT_EQ(p.stats().debounced, 1u);
  EXPECT_EQ(p.flush(), 1u);
  EXPECT_EQ(*store.as_of(u, model_->batch_id()), t + 1.0);
}

TEST_F(NrtTest, BatchInferenceCoverageAndFreshness) {
  EmbeddingStore store;
  EXPECT_EQ(run_batch_inference(inference(), ctx_->by_user, {}, ctx_->cutoff, store), 0u);
  std::vector<UserId> all(ctx_->world.users.size());
  std::iota(all.begin(), all.end(), 0u);
  const UserId fresh = ctx_->established.front();
  store.put(rep_of(fresh, 1, ctx_->cutoff + 5.0, 0.0));
  const auto written = run_batch_inference(inference(), ctx_->by_user, all, ctx_->cutoff, store);
  EXPECT_EQ(written, ctx_->established.size() - 1);
  EXPECT_EQ(store.count(model_->batch_id()), ctx_->established.size());
  EXPECT_EQ(*store.as_of(fresh, model_->batch_id()), ctx_->cutoff + 5.0);
}

TEST_F(NrtTest, ReplayDeterministicMonotoneAndIdempotent) {
  const auto [history, future] = synth::split_log(ctx_->log, ctx_->cutoff);
  const auto by_user = synth::index_by_user(history, ctx_->world.users.size());
  std::vector<UserId> seeded = ctx_->established;
  const auto r = urep::testing::run_nrt_suite(inference(), by_user, seeded, future.events, 17);
  EXPECT_GT(r.events, 100u);
  EXPECT_TRUE(r.same_entries);
  EXPECT_LE(r.replay_diff, 1e-12);
  EXPECT_LE(r.parallel_diff, 1e-12);
  EXPECT_LE(r.duplicate_diff, 1e-12);
  EXPECT_EQ(r.as_of_regressions, 0u);
  EXPECT_GE(r.duplicates_seen, r.events);
}

TEST(ProtocolTest, FrameIsLengthPrefixed) {
  const auto f = frame("abc");
  ASSERT_EQ(f.size(), 7u);
  EXPECT_EQ(f.substr(0, 4), std::string("\0\0\0\3", 4));
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  write_frame(fds[0], "hello");
  write_frame(fds[0], "");
  ::close(fds[0]);
  EXPECT_EQ(*read_frame(fds[1]), "hello");
  EXPECT_EQ(*read_frame(fds[1]), "");
  EXPECT_FALSE(read_frame(fds[1]));
  ::close(fds[1]);
}

TEST(ProtocolTest, RequestResponses) {
  using nlohmann::ordered_json;
  EmbeddingStore s;
  s.put(rep_of(4, 1, 3.0, 0.25));
  auto ok = ordered_json::parse(handle_request(s, "userrep", nullptr, R"({"user":4})"));
  EXPECT_TRUE(ok["ok"].get<bool>());
  EXPECT_EQ(ok["z"][0].get<double>(), 0.25);
  EXPECT_EQ(ok["as_of"].get<double>(), 3.0);
  EXPECT_EQ(ordered_json::parse(handle_request(s, "userrep", nullptr, R"({"user":5})"))["error"], "not_found");
  EXPECT_EQ(ordered_json::parse(handle_request(s, "userrep", nullptr, "{"))["error"], "bad_request");
  EXPECT_EQ(ordered_json::parse(handle_request(s, "userrep", nullptr, R"({"user":4,"policy":"x"})"))["error"],
            "bad_request");
}

TEST(ProtocolTest, ServerRoundTrip) {
  EmbeddingStore s;
  s.put(rep_of(4, 1, 3.0, 0.25));
  const auto path = std::filesystem::temp_directory_path() / ("urep_sock_" + std::to_string(::getpid()));
  RepServer server(path, [&](const std::string& req) { return handle_request(s, "userrep", nullptr, req); });
  server.start();
  const auto reply = nlohmann::ordered_json::parse(request(path, R"({"user":4})"));
  EXPECT_TRUE(reply["ok"].get<bool>());
  EXPECT_EQ(reply["batch"]["generation"].get<int>(), 1);
  server.stop();
  EXPECT_EQ(server.served(), 1u);
  EXPECT_THROW(request(path, R"({"user":4})"), IoError);
}

}  // namespace
}  // namespace urep::serving
