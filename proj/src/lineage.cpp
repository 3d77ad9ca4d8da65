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

#include "urep/lineage.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json_util.hpp"

namespace urep::lineage {

using detail::json;

const char* status_name(Status s) {
  switch (s) {
    case Status::kLive:
      return "live";
    case Status::kStale:
      return "stale";
    case Status::kRetraining:
      return "retraining";
  }
  return "unknown";
}

namespace {

json pins_json(const Pins& pins) {
  json j = json::object();
  for (const auto& [up, b] : pins) j[up] = detail::to_json(b);
  return j;
}

Pins pins_from(const json& j) {
  Pins p;
  for (const auto& [up, b] : j.items()) p[up] = detail::batch_from(b);
  return p;
}

// A retraining node keeps serving its current batch, but only counts as
// fresh if it was live when the retrain began and nothing upstream changed.
bool serves(const ModelNode& n) {
  if (!n.current) return false;
  return n.status == Status::kLive ||
         (n.status == Status::kRetraining && n.resume_status == Status::kLive);
}

// Marks a node stale; a running retrain finishes but resumes as stale.
bool invalidate(ModelNode& n) {
  if (n.status == Status::kLive) {
    n.status = Status::kStale;
    return true;
  }
  if (n.status == Status::kRetraining) n.resume_status = Status::kStale;
  return false;
}

bool retains(const ModelNode& n, const BatchId& b) {
  return (n.current && *n.current == b) || (n.legacy && *n.legacy == b);
}

}  // namespace

const ModelNode& LineageGraph::at(const std::string& name) const {
  const auto it = nodes_.find(name);
  if (it == nodes_.end()) throw NotFoundError("unknown model '" + name + "'");
  return it->second;
}

ModelNode& LineageGraph::at(const std::string& name) {
  const auto it = nodes_.find(name);
  if (it == nodes_.end()) throw NotFoundError("unknown model '" + name + "'");
  return it->second;
}

const ModelNode& LineageGraph::node(const std::string& name) const { return at(name); }

std::vector<std::string> LineageGraph::names() const { return order_; }

void LineageGraph::register_model(const std::string& name,
                                  const std::vector<std::string>& upstreams) {
  if (name.empty()) throw LineageError("model name is empty");
  if (nodes_.count(name)) throw LineageError("model '" + name + "' already registered");
  std::set<std::string> seen;
  for (const auto& up : upstreams) {
    if (up == name) throw LineageError("model '" + name + "' would depend on itself");
    if (!nodes_.count(up)) {
      throw LineageError("upstream '" + up + "' of '" + name + "' is not registered");
    }
    if (!seen.insert(up).second) throw LineageError("duplicate upstream '" + up + "'");
  }
  ModelNode n;
  n.name = name;
  n.upstreams = upstreams;
  nodes_[name] = std::move(n);
  order_.push_back(name);
  append(json{{"op", "register"}, {"name", name}, {"upstreams", upstreams}}.dump());
}

// Upstreams must exist before a node is registered, so registration order is
// already a topological order and no edge can close a cycle.
std::vector<std::string> LineageGraph::topological_order() const { return order_; }

std::vector<std::string> LineageGraph::consumers(const std::string& name) const {
  at(name);
  std::vector<std::string> out;
  for (const auto& n : order_) {
    const auto& ups = nodes_.at(n).upstreams;
    if (std::find(ups.begin(), ups.end(), name) != ups.end()) out.push_back(n);
  }
  return out;
}

std::vector<std::string> LineageGraph::descendants(const std::string& name) const {
  at(name);
  std::set<std::string> reached{name};
  std::vector<std::string> out;
  for (const auto& n : order_) {
    const auto& ups = nodes_.at(n).upstreams;
    if (std::any_of(ups.begin(), ups.end(), [&](const std::string& u) { return reached.count(u); })) {
      reached.insert(n);
      out.push_back(n);
    }
  }
  return out;
}

bool LineageGraph::can_begin_retrain(const std::string& name, std::string* reason) const {
  const auto& n = at(name);
  auto refuse = [&](const std::string& why) {
    if (reason) *reason = why;
    return false;
  };
  if (n.status == Status::kRetraining) return refuse(name + " is already retraining");
  for (const auto& up : n.upstreams) {
    if (!at(up).current) return refuse("upstream " + up + " has no batch yet");
  }
  if (n.legacy) {
    for (const auto& c : consumers(name)) {
      const auto& cn = at(c);
      const auto it = cn.pins.find(name);
      if (cn.current && it != cn.pins.end() && it->second == *n.legacy) {
        return refuse(c + " still reads " + n.legacy->str());
      }
    }
  }
  return true;
}

Pins LineageGraph::begin_retrain(const std::string& name, SimTime now) {
  std::string reason;
  if (!can_begin_retrain(name, &reason)) throw LineageError("cannot retrain " + name + ": " + reason);
  auto& n = at(name);
  Pins pins;
  for (const auto& up : n.upstreams) pins[up] = *at(up).current;
  n.resume_status = n.status;
  n.status = Status::kRetraining;
  n.training_pins = pins;
  append(json{{"op", "begin"}, {"name", name}, {"at", now}}.dump());
  return pins;
}

void LineageGraph::abort_retrain(const std::string& name) {
  auto& n = at(name);
  if (n.status != Status::kRetraining) throw LineageError(name + " is not retraining");
  n.status = n.resume_status == Status::kLive && aligned(n) ? Status::kLive : Status::kStale;
  n.training_pins.reset();
  if (n.status == Status::kStale) {
    for (const auto& d : descendants(name)) invalidate(at(d));
  }
  append(json{{"op", "abort"}, {"name", name}}.dump());
}

RetrainOutcome LineageGraph::complete_retrain(const std::string& name, const Pins& trained_against,
                                              SimTime now, const std::string& fingerprint) {
  auto& n = at(name);
  if (n.status != Status::kRetraining || !n.training_pins) {
    throw LineageError(name + " is not retraining");
  }
  if (trained_against != *n.training_pins) {
    throw LineageError(name + " trained against batches other than those pinned at start");
  }
  append(json{{"op", "complete"},
              {"name", name},
              {"pins", pins_json(trained_against)},
              {"at", now},
              {"fingerprint", fingerprint}}
             .dump());

  RetrainOutcome out;
  for (const auto& [up, b] : trained_against) {
    if (!retains(at(up), b)) {
      out.reason = up + " no longer retains " + b.str();
      n.status = Status::kStale;
      n.training_pins.reset();
      for (const auto& d : descendants(name)) invalidate(at(d));
      return out;
    }
  }

  BatchId batch{name, n.current ? n.current->generation + 1 : 1, now, fingerprint};
  n.legacy = n.current;
  n.legacy_pins = n.pins;
  n.current = batch;
  n.pins = trained_against;
  n.training_pins.reset();

  n.status = aligned(n) ? Status::kLive : Status::kStale;

  out.completed = true;
  out.batch = batch;
  for (const auto& d : descendants(name)) {
    if (invalidate(at(d))) out.cascaded.push_back(d);
  }
  return out;
}

bool LineageGraph::aligned(const ModelNode& n) const {
  for (const auto& up : n.upstreams) {
    const auto& un = at(up);
    const auto it = n.pins.find(up);
    if (!serves(un) || it == n.pins.end() || !(*un.current == it->second)) return false;
  }
  return true;
}

std::vector<std::string> LineageGraph::mark_stale_cascade(const std::string& name) {
  auto desc = descendants(name);
  for (const auto& d : desc) {
    auto& dn = at(d);
    invalidate(dn);
    if (dn.status != Status::kRetraining) dn.status = Status::kStale;
  }
  append(json{{"op", "stale"}, {"name", name}}.dump());
  return desc;
}

BatchId LineageGraph::serving_batch(const std::string& consumer, const std::string& upstream) const {
  const auto& c = at(consumer);
  if (std::find(c.upstreams.begin(), c.upstreams.end(), upstream) == c.upstreams.end()) {
    throw LineageError(upstream + " is not an upstream of " + consumer);
  }
  if (!c.current) throw LineageError(consumer + " has no trained batch");
  const BatchId& pin = c.pins.at(upstream);
  if (!retains(at(upstream), pin)) {
    throw LineageError(upstream + " no longer retains " + pin.str() + " needed by " + consumer);
  }
  return pin;
}

BatchId LineageGraph::resolve(const std::string& name, bool legacy) const {
  const auto& n = at(name);
  const auto& b = legacy ? n.legacy : n.current;
  if (!b) throw LineageError(name + " has no " + (legacy ? "legacy" : "current") + " batch");
  return *b;
}

void LineageGraph::attach_ledger(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  ledger_ = file;
}

void LineageGraph::append(const std::string& line) {
  if (!ledger_) return;
  std::ofstream out(*ledger_, std::ios::app);
  if (!out) throw IoError("cannot append to ledger " + ledger_->string());
  out << line << '\n';
  if (!out) throw IoError("write failed on ledger " + ledger_->string());
}

LineageGraph LineageGraph::replay(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open ledger " + file.string());
  LineageGraph g;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto op = j.at("op").get<std::string>();
      const auto name = j.at("name").get<std::string>();
      if (op == "register") {
        g.register_model(name, j.at("upstreams").get<std::vector<std::string>>());
      } else if (op == "begin") {
        g.begin_retrain(name, j.value("at", 0.0));
      } else if (op == "complete") {
        g.complete_retrain(name, pins_from(j.at("pins")), j.value("at", 0.0),
                           j.value("fingerprint", std::string()));
      } else if (op == "abort") {
        g.abort_retrain(name);
      } else if (op == "stale") {
        g.mark_stale_cascade(name);
      } else {
        throw ConfigError("unknown op '" + op + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return g;
}

std::string LineageGraph::status_table() const {
  std::ostringstream ss;
  for (const auto& name : order_) {
    const auto& n = nodes_.at(name);
    ss << name << "  " << status_name(n.status) << "  current=" << (n.current ? n.current->str() : "-")
       << "  legacy=" << (n.legacy ? n.legacy->str() : "-");
    if (!n.pins.empty()) {
      ss << "  pins=";
      bool first = true;
      for (const auto& [up, b] : n.pins) {
        ss << (first ? "" : ",") << b.str();
        first = false;
      }
    }
    ss << '\n';
  }
  return ss.str();
}

}  // namespace urep::lineage
