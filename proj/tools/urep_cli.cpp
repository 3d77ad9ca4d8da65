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

// urep command line. Every command works on a workspace directory; the
// pipeline config is taken from --config, else the workspace's saved
// config.json, else the chosen preset.
//
// Exit codes: 0 ok, 1 other, 2 config, 3 io/path, 4 training/shape,
// 5 batch consistency/lineage, 6 not found.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "urep/pipeline.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace urep;

std::atomic<bool> g_interrupted{false};
void on_signal(int) { g_interrupted = true; }

struct Global {
  std::string workspace;
  std::string config;
  std::string preset = "default";
  std::uint64_t seed = 0;
};

pipeline::PipelineConfig resolve_config(const Global& g) {
  pipeline::PipelineConfig c;
  const std::filesystem::path saved = std::filesystem::path(g.workspace) / "config.json";
  if (!g.config.empty()) {
    c = pipeline::PipelineConfig::load(g.config);
  } else if (std::filesystem::exists(saved)) {
    c = pipeline::PipelineConfig::load(saved);
  } else if (g.preset == "tiny") {
    c = pipeline::tiny_pipeline_config(g.seed ? g.seed : 1);
  } else if (g.preset != "default") {
    throw ConfigError("unknown preset '" + g.preset + "'");
  }
  if (g.seed) c.experiment.seed = g.seed;
  return c;
}

void save_config(const pipeline::Workspace& ws) {
  std::filesystem::create_directories(ws.root());
  write_text_file(ws.root() / "config.json", json::parse(ws.config().to_json()).dump(2));
}

int exit_code_for(std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const pipeline::StageError& s) {
    return s.cause() ? exit_code_for(s.cause()) : 1;
  } catch (const ConfigError&) {
    return 2;
  } catch (const IoError&) {
    return 3;
  } catch (const TrainingError&) {
    return 4;
  } catch (const ShapeError&) {
    return 4;
  } catch (const LayoutError&) {
    return 4;
  } catch (const BatchConsistencyError&) {
    return 5;
  } catch (const LineageError&) {
    return 5;
  } catch (const NotFoundError&) {
    return 6;
  } catch (...) {
    return 1;
  }
}

void print_rep(const userrep::UserRepresentation& r) {
  json z = json::array();
  for (Eigen::Index i = 0; i < r.z.size(); ++i) z.push_back(r.z[i]);
  std::cout << json{{"user", r.user_id},
                    {"batch", r.model_batch.str()},
                    {"as_of", r.as_of},
                    {"source", userrep::source_name(r.source)},
                    {"z", z}}
                   .dump()
            << "\n";
}

// Replays logged events after the cutoff through event-triggered inference
// into the current user-representation batch.
int simulate_events(pipeline::Workspace& ws, double rate, std::size_t limit, std::size_t workers,
                    bool duplicate) {
  auto& g = ws.graph();
  const auto& node = g.node(experiment::kUserRepModel);
  if (!node.current) throw LineageError("no user representation batch; run the pipeline first");
  const auto& ctx = ws.context_for(node.pins);
  const auto& rep = ws.userrep(node.current->generation);
  serving::InferenceContext ic{&ctx.world, &ctx.space, &rep.model, rep.layout};
  auto& store = ws.store();
  serving::NrtProcessor nrt(ic, store, {workers, 0.0});
  for (std::size_t u = 0; u < ctx.by_user.size(); ++u) {
    synth::UserEvents seen;
    const auto& ev = ctx.by_user[u];
    if (ev.registration && *ev.registration <= ctx.cutoff) seen.registration = ev.registration;
    if (ev.onboarding_time && *ev.onboarding_time <= ctx.cutoff) {
      seen.onboarding_time = ev.onboarding_time;
      seen.onboarding = ev.onboarding;
    }
    for (const auto& l : ev.listens) {
      if (l.timestamp <= ctx.cutoff) seen.listens.push_back(l);
    }
    nrt.seed(UserId(u), seen);
  }
  std::size_t sent = 0;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& e : ctx.log.events) {
    if (e.timestamp <= ctx.cutoff) continue;
    if ((limit && sent >= limit) || g_interrupted) break;
    if (rate > 0) {
      std::this_thread::sleep_until(start + std::chrono::duration<double>(double(sent) / rate));
    }
    const auto t = serving::TriggerEvent::from(e);
    nrt.submit(t);
    if (duplicate) nrt.submit(t);
    ++sent;
  }
  nrt.drain();
  nrt.flush();
  ws.save_store();
  const auto s = nrt.stats();
  std::cout << json{{"events", s.events},     {"duplicates", s.duplicates}, {"writes", s.writes},
                    {"debounced", s.debounced}, {"errors", s.errors},
                    {"store_entries", store.count(*node.current)}}
                   .dump()
            << "\n";
  return s.errors ? 1 : 0;
}

int serve(pipeline::Workspace& ws, const std::string& socket, double duration) {
  auto& store = ws.store();
  auto& g = ws.graph();
  std::mutex mu;  // the graph is not shared-safe; requests are serialized on it
  serving::RepServer server(socket, [&](const std::string& req) {
    std::lock_guard<std::mutex> lock(mu);
    return serving::handle_request(store, experiment::kUserRepModel, &g, req);
  });
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  std::cerr << "serving " << store.size() << " representations on " << socket << "\n";
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (duration > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= duration) {
      break;
    }
  }
  server.stop();
  std::cerr << "served " << server.served() << " requests\n";
  return 0;
}

int train_downstream(pipeline::Workspace& ws, const std::string& task) {
  if (task == "future-listen") {
    auto& g = ws.graph();
    if (g.node(pipeline::kDownstreamModel).current) {
      const auto out = pipeline::retrain(ws, pipeline::kDownstreamModel,
                                         ws.config().experiment.world.horizon, &std::cerr);
      std::cout << (out.completed ? "rotated to " + out.batch.str() : "invalidated: " + out.reason) << "\n";
      return out.completed ? 0 : 5;
    }
    pipeline::run_stage(ws, "train-downstream", &std::cerr);
    std::cout << "trained " << g.node(pipeline::kDownstreamModel).current->str() << "\n";
    return 0;
  }
  const auto& node = ws.graph().node(experiment::kUserRepModel);
  if (!node.current) throw LineageError("no user representation batch; run the pipeline first");
  const auto& ctx = ws.context_for(node.pins);
  const auto& rep = ws.userrep(node.current->generation);
  json out;
  if (task == "artist-pref") {
    const auto r = experiment::artist_preference(ctx, rep);
    downstream::save_classifier(r.classifier, ws.downstream_file("artist_pref", node.current->generation));
    out = {{"task", task},
           {"rep_auc", r.rep_auc},
           {"raw_auc", r.raw_auc},
           {"rep_accuracy", r.rep_accuracy},
           {"raw_accuracy", r.raw_accuracy},
           {"rep_inputs", r.rep_inputs},
           {"raw_inputs", r.raw_inputs},
           {"test_examples", r.test_examples}};
  } else if (task == "two-tower") {
    const auto r = experiment::two_tower_task(ctx, rep);
    downstream::save_two_tower(r.model, ws.downstream_file("two_tower", node.current->generation));
    out = {{"task", task},
           {"auc", r.auc},
           {"in_archetype_score", r.in_archetype_score},
           {"out_archetype_score", r.out_archetype_score}};
  } else {
    throw ConfigError("unknown task '" + task + "'");
  }
  std::filesystem::create_directories(ws.root() / "reports");
  write_text_file(ws.report_file(task), out.dump(2));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int eval_suite(pipeline::Workspace& ws, const std::string& suite) {
  const auto& node = ws.graph().node(experiment::kUserRepModel);
  if (!node.current) throw LineageError("no user representation batch; run the pipeline first");
  const auto& ctx = ws.context_for(node.pins);
  const auto& rep = ws.userrep(node.current->generation);
  experiment::MetricReport m;
  if (suite == "ablation") {
    experiment::EvalOptions o;
    o.baselines = false;
    o.coldstart = false;
    m = experiment::evaluate(ctx, rep, o);
    auto masks = ws.config().ablations;
    if (masks.empty()) masks = {"onboarding", "modality", "static"};
    for (const auto& a : experiment::run_ablations(ctx, m, masks)) {
      for (const auto& [k, v] : a.delta) m["ablation." + a.mask + ".delta." + k] = v;
    }
  } else {
    experiment::EvalOptions o;
    o.established = suite == "established" || suite == "all";
    o.coldstart = suite == "coldstart" || suite == "all";
    o.clusters = suite == "clusters" || suite == "all";
    if (!o.established && !o.coldstart && !o.clusters) throw ConfigError("unknown suite '" + suite + "'");
    m = experiment::evaluate(ctx, rep, o);
  }
  std::filesystem::create_directories(ws.root() / "reports");
  const auto text = experiment::report_json(m, ws.config().fingerprint());
  write_text_file(ws.report_file(suite), text);
  std::cout << text << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"User representation platform: data, training, serving and lineage."};
  app.require_subcommand(1);
  Global g;
  const char* env_ws = std::getenv("UREP_WORKSPACE");
  g.workspace = env_ws ? env_ws : "urep-work";
  if (const char* env_cfg = std::getenv("UREP_CONFIG")) g.config = env_cfg;
  app.add_option("-w,--workspace", g.workspace, "Workspace directory (env UREP_WORKSPACE)");
  app.add_option("-c,--config", g.config, "Pipeline config JSON (env UREP_CONFIG)");
  app.add_option("--preset", g.preset, "Config preset when no config exists: default or tiny");
  app.add_option("--seed", g.seed, "Override the experiment seed");

  std::map<std::string, CLI::App*> stages;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"gen-data", "Generate (or import) the synthetic world and event log"},
           {"train-encoders", "Train the audio and collaborative encoders"},
           {"assemble-features", "Assemble user feature vectors at the cutoff"},
           {"train-userrep", "Train the user representation autoencoder"},
           {"register-batches", "Register models in the lineage graph and rotate first batches"},
           {"batch-inference", "Batch inference at the cutoff, then stream later events"}}) {
    stages[name] = app.add_subcommand(name, help);
  }

  auto* run_all = app.add_subcommand("run-all", "Run every stage, skipping those up to date");
  std::string out_dir;
  run_all->add_option("--out", out_dir, "Workspace directory (same as --workspace)");

  auto* serve_cmd = app.add_subcommand("serve", "Serve representations on a Unix socket");
  std::string socket = "urep.sock";
  double duration = 0.0;
  serve_cmd->add_option("--socket", socket, "Socket path");
  serve_cmd->add_option("--duration", duration, "Stop after this many seconds (0: until signalled)");

  auto* sim = app.add_subcommand("simulate-events", "Replay post-cutoff events through NRT inference");
  double rate = 0.0;
  std::size_t limit = 0, workers = 0;
  bool duplicate = false;
  sim->add_option("--rate", rate, "Events per second (0: as fast as possible)");
  sim->add_option("--limit", limit, "Stop after this many events (0: all)");
  sim->add_option("--workers", workers, "Worker threads (0: inline)");
  sim->add_flag("--duplicate", duplicate, "Deliver every event twice");

  auto* get_rep = app.add_subcommand("get-rep", "Look up one user's representation");
  UserId user = 0;
  std::string policy = "current", rep_socket;
  get_rep->add_option("--user", user, "User id")->required();
  get_rep->add_option("--policy", policy, "current, legacy, consumer:<name> or generation:<n>");
  get_rep->add_option("--socket", rep_socket, "Ask a running server instead of the workspace store");

  auto* lin = app.add_subcommand("lineage", "Inspect and drive the model lineage graph");
  lin->require_subcommand(1);
  auto* lin_status = lin->add_subcommand("status", "Print every node's status and batches");
  auto* lin_retrain = lin->add_subcommand("retrain", "Retrain one model");
  std::string model;
  bool cascade = false;
  lin_retrain->add_option("model", model, "audio, collab, userrep or downstream")->required();
  lin_retrain->add_flag("--cascade", cascade, "Then retrain every stale descendant in order");
  auto* lin_verify = lin->add_subcommand("verify", "Check the provenance chain of the workspace");

  auto* ds = app.add_subcommand("train-downstream", "Train a downstream consumer");
  std::string task = "future-listen";
  ds->add_option("--task", task, "future-listen, artist-pref or two-tower")
      ->check(CLI::IsMember({"future-listen", "artist-pref", "two-tower"}));

  auto* ev = app.add_subcommand("eval", "Evaluate the current user representation");
  std::string suite = "all";
  ev->add_option("--suite", suite, "established, coldstart, clusters, ablation or all")
      ->check(CLI::IsMember({"established", "coldstart", "clusters", "ablation", "all"}));

  auto* demo = app.add_subcommand("demo-rotation", "Scripted retrain cascade with live requests");

  CLI11_PARSE(app, argc, argv);
  if (!out_dir.empty()) g.workspace = out_dir;

  try {
    pipeline::Workspace ws(g.workspace, resolve_config(g));
    for (const auto& [name, cmd] : stages) {
      if (cmd->parsed()) {
        save_config(ws);
        pipeline::run_stage(ws, name, &std::cerr);
        return 0;
      }
    }
    if (run_all->parsed()) {
      const auto report = pipeline::run_pipeline(ws.root(), ws.config(), &std::cerr);
      for (const auto& [k, v] : report.metrics) std::cout << k << " " << v << "\n";
      return 0;
    }
    const bool remote = get_rep->parsed() && !rep_socket.empty();
    if (!remote && !std::filesystem::exists(ws.ledger_file())) {
      throw IoError("no pipeline workspace at " + ws.root().string() + "; run run-all first");
    }
    if (serve_cmd->parsed()) return serve(ws, socket, duration);
    if (sim->parsed()) return simulate_events(ws, rate, limit, workers, duplicate);
    if (get_rep->parsed()) {
      if (!rep_socket.empty()) {
        const auto resp = json::parse(serving::request(rep_socket, json{{"user", user}, {"policy", policy}}.dump()));
        std::cout << resp.dump() << "\n";
        if (resp.value("ok", false)) return 0;
        const auto code = resp.value("error", std::string());
        return code == "not_found" ? 6 : code == "unavailable" ? 5 : code == "bad_request" ? 2 : 1;
      }
      print_rep(serving::get_representation(ws.store(), user, experiment::kUserRepModel,
                                            serving::BatchPolicy::parse(policy), &ws.graph()));
      return 0;
    }
    if (lin_status->parsed()) {
      std::cout << ws.graph().status_table();
      return 0;
    }
    if (lin_retrain->parsed()) {
      const SimTime now = ws.config().experiment.world.horizon;
      const auto outs = cascade ? pipeline::retrain_cascade(ws, model, now, &std::cerr)
                                : std::vector<lineage::RetrainOutcome>{pipeline::retrain(ws, model, now, &std::cerr)};
      for (const auto& o : outs) {
        std::cout << (o.completed ? "rotated " + o.batch.str() : "invalidated: " + o.reason) << "\n";
      }
      std::cout << ws.graph().status_table();
      return 0;
    }
    if (lin_verify->parsed()) {
      const auto problems = pipeline::verify_workspace(ws);
      for (const auto& p : problems) std::cout << "problem: " << p << "\n";
      std::cout << (problems.empty() ? "provenance ok" : "provenance broken") << "\n";
      return problems.empty() ? 0 : 5;
    }
    if (ds->parsed()) return train_downstream(ws, task);
    if (ev->parsed()) return eval_suite(ws, suite);
    if (demo->parsed()) {
      const auto r = pipeline::demo_rotation(ws, &std::cout);
      std::string text;
      for (const auto& line : r.transcript) text += line + "\n";
      std::filesystem::create_directories(ws.root() / "reports");
      write_text_file(ws.root() / "reports" / "demo_rotation.txt", text);
      return r.aligned && r.unavailable == 0 ? 0 : 5;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(std::current_exception());
  }
  return 1;
}
