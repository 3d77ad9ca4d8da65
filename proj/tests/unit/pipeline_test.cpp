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

#include "urep/pipeline.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace urep::pipeline {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / (name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

TEST(PipelineConfigTest, JsonRoundTripAndValidation) {
  auto c = tiny_pipeline_config(4);
  c.ablations = {"onboarding"};
  const auto back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_EQ(back.experiment.seed, 4u);
  EXPECT_THROW(PipelineConfig::from_json(R"({"suites":["speed"]})"), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json(R"({"ablations":["colour"]})"), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json("{"), ConfigError);
  EXPECT_NE(tiny_pipeline_config(1).fingerprint(), tiny_pipeline_config(2).fingerprint());
}

TEST(PipelineTest, TinyRunCompletesThenSkipsAndVerifies) {
  const auto root = fresh_dir("urep_pipeline");
  const auto config = tiny_pipeline_config(2);
  const auto t0 = std::chrono::steady_clock::now();
  const auto first = run_pipeline(root, config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(seconds, 60.0);
  ASSERT_EQ(first.stages.size(), stage_names().size());
  for (const auto& s : first.stages) EXPECT_FALSE(s.skipped) << s.name;
  EXPECT_GT(first.metrics.count("established.rep.auc"), 0u);

  const auto second = run_pipeline(root, config);
  for (const auto& s : second.stages) EXPECT_TRUE(s.skipped) << s.name;

  Workspace ws(root, config);
  EXPECT_TRUE(verify_workspace(ws).empty());
  for (const auto& n : ws.graph().topological_order()) {
    EXPECT_EQ(ws.graph().node(n).status, lineage::Status::kLive) << n;
  }
  fs::remove_all(root);
}

TEST(PipelineTest, ChangedConfigReruns) {
  const auto root = fresh_dir("urep_pipeline_rerun");
  auto config = tiny_pipeline_config(2);
  run_pipeline(root, config);
  config.suites = {"established"};
  const auto again = run_pipeline(root, config);
  EXPECT_TRUE(again.stages.front().skipped);
  EXPECT_FALSE(again.stages.back().skipped);
  fs::remove_all(root);
}

TEST(PipelineTest, MissingWorldDirFailsAtFirstStage) {
  const auto root = fresh_dir("urep_pipeline_missing");
  auto config = tiny_pipeline_config(2);
  config.world_dir = root / "does-not-exist";
  try {
    run_pipeline(root, config);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), stage_names().front());
    EXPECT_THROW(std::rethrow_exception(e.cause()), IoError);
  }
  fs::remove_all(root);
}

TEST(PipelineTest, RotationDemoServesLegacyAndEndsAligned) {
  const auto root = fresh_dir("urep_pipeline_demo");
  const auto config = tiny_pipeline_config(3);
  run_pipeline(root, config);
  Workspace ws(root, config);
  const auto demo = demo_rotation(ws);
  EXPECT_TRUE(demo.aligned);
  EXPECT_EQ(demo.unavailable, 0u);
  EXPECT_GT(demo.legacy_served, 0u);
  EXPECT_GT(demo.requests, demo.legacy_served);
  bool saw_legacy_line = false;
  for (const auto& line : demo.transcript) saw_legacy_line |= line.find("legacy") != std::string::npos;
  EXPECT_TRUE(saw_legacy_line);
  EXPECT_TRUE(verify_workspace(ws).empty());
  fs::remove_all(root);
}

TEST(PipelineTest, RetrainCascadeOrder) {
  const auto root = fresh_dir("urep_pipeline_cascade");
  const auto config = tiny_pipeline_config(4);
  run_pipeline(root, config);
  Workspace ws(root, config);
  const auto before = ws.graph().node("userrep").current->generation;
  const auto outcomes = retrain_cascade(ws, "collab", config.experiment.world.horizon);
  ASSERT_EQ(outcomes.size(), 3u);
  EXPECT_EQ(outcomes[0].batch.model, "collab");
  EXPECT_EQ(outcomes[1].batch.model, "userrep");
  EXPECT_EQ(outcomes[2].batch.model, kDownstreamModel);
  EXPECT_EQ(ws.graph().node("userrep").current->generation, before + 1);
  EXPECT_TRUE(verify_workspace(ws).empty());
  fs::remove_all(root);
}

// CLI smoke test through the built binary.
int run_cli(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = std::string(UREP_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  std::string text;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) text += buf;
  const int status = ::pclose(pipe);
  if (out) *out = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, SmokeRunStatusAndErrors) {
  const auto root = fresh_dir("urep_cli");
  const std::string ws = "-w " + root.string() + " --preset tiny";
  std::string out;
  EXPECT_EQ(run_cli(ws + " run-all", &out), 0) << out;
  EXPECT_EQ(run_cli(ws + " lineage status", &out), 0) << out;
  EXPECT_NE(out.find("userrep"), std::string::npos);
  EXPECT_EQ(run_cli(ws + " lineage verify", &out), 0) << out;
  EXPECT_EQ(run_cli(ws + " get-rep --user 1", &out), 0) << out;
  EXPECT_EQ(run_cli(ws + " get-rep --user 999999", &out), 6) << out;
  EXPECT_EQ(run_cli(ws + " get-rep --user 1 --policy newest", &out), 2) << out;
  EXPECT_EQ(run_cli("-w " + (root / "nowhere").string() + " lineage status", &out), 3) << out;
  EXPECT_EQ(run_cli(ws + " demo-rotation", &out), 0) << out;
  EXPECT_TRUE(fs::exists(root / "reports" / "demo_rotation.txt"));
  fs::remove_all(root);
}

}  // namespace
}  // namespace urep::pipeline
