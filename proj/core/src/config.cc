/**
 * Copyright 2026 The ccsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ccsim/config.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ccsim {

namespace {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<Diagnostic> &diags) : diags_(diags) {}

  void error(const std::string &field, const std::string &msg) { diags_.push_back({"error", field, msg}); }
  void warning(const std::string &field, const std::string &msg) { diags_.push_back({"warning", field, msg}); }

  /// Warns about keys of `obj` not in `known`.
  void known_keys(const json &obj, const std::string &path, std::initializer_list<const char *> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char *k : known) ok = ok || it.key() == k;
      if (!ok) warning(join(path, it.key()), "unknown key ignored");
    }
  }

  template <typename T>
  void read(const json &obj, const std::string &path, const char *key, T &out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception &) {
      error(join(path, key), std::string("expected ") + type_name<T>());
    }
  }

  static std::string join(const std::string &path, const std::string &key) { return path.empty() ? key : path + "." + key; }

 private:
  template <typename T>
  static const char *type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  std::vector<Diagnostic> &diags_;
};

std::optional<json> read_json_file(const std::string &path, const std::string &field, Reader &r) {
  std::ifstream in(path);
  if (!in) {
    r.error(field, "cannot open file '" + path + "'");
    return std::nullopt;
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    r.error(field, "'" + path + "' is not valid JSON: " + e.what());
    return std::nullopt;
  }
}

std::string resolve(const std::string &base_dir, const std::string &file) {
  std::filesystem::path p(file);
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  return p.string();
}

void parse_topology(const json &j, const std::string &path, Reader &r, ClosSpec &spec) {
  if (!j.is_object()) {
    r.error(path, "expected an object");
    return;
  }
  r.known_keys(j, path, {"hosts", "gpus_per_host", "nics_per_host", "leaves", "spines", "link_gbps", "link_delay_ns",
                         "nvlink_gbps", "nvlink_delay_ns", "rail_map", "cpu_proxy_count"});
  r.read(j, path, "hosts", spec.hosts);
  r.read(j, path, "gpus_per_host", spec.gpus_per_host);
  r.read(j, path, "nics_per_host", spec.nics_per_host);
  r.read(j, path, "leaves", spec.leaves);
  r.read(j, path, "spines", spec.spines);
  r.read(j, path, "cpu_proxy_count", spec.cpu_proxy_count);
  double gbps = spec.link_bps / 1e9;
  r.read(j, path, "link_gbps", gbps);
  spec.link_bps = gbps * 1e9;
  double nv = spec.nvlink_bps / 1e9;
  r.read(j, path, "nvlink_gbps", nv);
  spec.nvlink_bps = nv * 1e9;
  int64_t delay = spec.link_delay.count();
  r.read(j, path, "link_delay_ns", delay);
  spec.link_delay = SimTime(delay);
  int64_t nv_delay = spec.nvlink_delay.count();
  r.read(j, path, "nvlink_delay_ns", nv_delay);
  spec.nvlink_delay = SimTime(nv_delay);
  std::string map = spec.rail_map == RailMap::kBlock ? "block" : "modulo";
  r.read(j, path, "rail_map", map);
  if (map == "block") {
    spec.rail_map = RailMap::kBlock;
  } else if (map == "modulo") {
    spec.rail_map = RailMap::kModulo;
  } else {
    r.error(Reader::join(path, "rail_map"), "expected 'block' or 'modulo'");
  }
  auto positive = [&](int v, const char *key) {
    if (v < 1) r.error(Reader::join(path, key), "must be >= 1");
  };
  positive(spec.hosts, "hosts");
  positive(spec.gpus_per_host, "gpus_per_host");
  positive(spec.nics_per_host, "nics_per_host");
  positive(spec.leaves, "leaves");
  positive(spec.spines, "spines");
  if (spec.link_bps <= 0) r.error(Reader::join(path, "link_gbps"), "must be positive");
  if (spec.link_delay.count() < 0) r.error(Reader::join(path, "link_delay_ns"), "must be >= 0");
}

void parse_faults(const json &j, const std::string &path, Reader &r, std::vector<FaultSpec> &out) {
  if (!j.is_array()) {
    r.error(path, "expected a list of fault entries");
    return;
  }
  for (size_t i = 0; i < j.size(); ++i) {
    std::string p = path + "[" + std::to_string(i) + "]";
    const json &e = j[i];
    if (!e.is_object()) {
      r.error(p, "expected an object");
      continue;
    }
    r.known_keys(e, p, {"at_s", "at_ns", "port", "state"});
    FaultSpec f;
    double at_s = -1;
    int64_t at_ns = -1;
    r.read(e, p, "at_s", at_s);
    r.read(e, p, "at_ns", at_ns);
    if (at_ns >= 0) {
      f.at = SimTime(at_ns);
    } else if (at_s >= 0) {
      f.at = SimTime::s(at_s);
    } else {
      r.error(p, "needs a non-negative 'at_s' or 'at_ns'");
    }
    r.read(e, p, "port", f.port);
    if (f.port.empty()) r.error(Reader::join(p, "port"), "missing port name");
    std::string state;
    r.read(e, p, "state", state);
    if (state == "down") {
      f.state = LinkState::kDown;
    } else if (state == "up") {
      f.state = LinkState::kUp;
    } else {
      r.error(Reader::join(p, "state"), "expected 'down' or 'up'");
    }
    out.push_back(f);
  }
}

void parse_workload(const json &j, const std::string &path, Reader &r, WorkloadSpec &w) {
  if (!j.is_object()) {
    r.error(path, "expected an object");
    return;
  }
  r.known_keys(j, path, {"kind", "message_bytes", "iterations", "chunk_bytes", "mode", "ranks", "workers",
                         "microbatches", "fwd_ms", "bwd_ms", "p2p_ms"});
  r.read(j, path, "kind", w.kind);
  r.read(j, path, "message_bytes", w.message_bytes);
  r.read(j, path, "iterations", w.iterations);
  r.read(j, path, "chunk_bytes", w.chunk_bytes);
  r.read(j, path, "mode", w.mode);
  r.read(j, path, "ranks", w.ranks);
  r.read(j, path, "workers", w.workers);
  r.read(j, path, "microbatches", w.microbatches);
  r.read(j, path, "fwd_ms", w.fwd_ms);
  r.read(j, path, "bwd_ms", w.bwd_ms);
  r.read(j, path, "p2p_ms", w.p2p_ms);
  static const std::set<std::string> kinds{"p2p", "allreduce", "reducescatter", "allgather", "alltoall", "pipeline"};
  if (!kinds.count(w.kind)) r.error(Reader::join(path, "kind"), "unknown workload kind '" + w.kind + "'");
  static const std::set<std::string> modes{"zero_copy", "staged_copy", "offloaded", "kernel_based"};
  if (!modes.count(w.mode)) r.error(Reader::join(path, "mode"), "unknown mode '" + w.mode + "'");
  if (w.message_bytes < 0) r.error(Reader::join(path, "message_bytes"), "must be >= 0");
  if (w.iterations < 1) r.error(Reader::join(path, "iterations"), "must be >= 1");
  if (w.chunk_bytes < 1) r.error(Reader::join(path, "chunk_bytes"), "must be >= 1");
  if (w.workers < 1) r.error(Reader::join(path, "workers"), "must be >= 1");
  if (w.microbatches < 1) r.error(Reader::join(path, "microbatches"), "must be >= 1");
  if (w.fwd_ms <= 0) r.error(Reader::join(path, "fwd_ms"), "must be positive");
  if (w.bwd_ms <= 0) r.error(Reader::join(path, "bwd_ms"), "must be positive");
  if (w.p2p_ms < 0) r.error(Reader::join(path, "p2p_ms"), "must be >= 0");
}

void parse_transport(const json &j, const std::string &path, Reader &r, TransportSettings &t) {
  if (!j.is_object()) {
    r.error(path, "expected an object");
    return;
  }
  r.known_keys(j, path, {"ib_timeout", "ib_retry_cnt", "qp_per_connection", "channels", "window", "failover",
                         "probe_period_ms"});
  r.read(j, path, "ib_timeout", t.ib_timeout);
  r.read(j, path, "ib_retry_cnt", t.ib_retry_cnt);
  r.read(j, path, "qp_per_connection", t.qp_per_connection);
  r.read(j, path, "channels", t.channels);
  r.read(j, path, "window", t.window);
  r.read(j, path, "failover", t.failover);
  r.read(j, path, "probe_period_ms", t.probe_period_ms);
  if (t.ib_timeout < 0 || t.ib_timeout > 31) r.error(Reader::join(path, "ib_timeout"), "must lie in [0, 31]");
  if (t.ib_retry_cnt < 0 || t.ib_retry_cnt > 7) r.error(Reader::join(path, "ib_retry_cnt"), "must lie in [0, 7]");
  if (t.qp_per_connection < 1) r.error(Reader::join(path, "qp_per_connection"), "must be >= 1");
  if (t.channels < 1) r.error(Reader::join(path, "channels"), "must be >= 1");
  if (t.window < 1) r.error(Reader::join(path, "window"), "must be >= 1");
  if (t.probe_period_ms <= 0) r.error(Reader::join(path, "probe_period_ms"), "must be positive");
}

}  // namespace

std::vector<Diagnostic> parse_config(const std::string &text, const std::string &base_dir, RunConfig &out) {
  std::vector<Diagnostic> diags;
  Reader r(diags);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    r.error("", std::string("not valid JSON: ") + e.what());
    return diags;
  }
  if (!j.is_object()) {
    r.error("", "top level must be an object");
    return diags;
  }
  r.known_keys(j, "", {"scenario", "seed", "topology", "faults", "workload", "transport", "monitor", "trials", "out_dir"});
  r.read(j, "", "scenario", out.scenario);
  r.read(j, "", "seed", out.seed);
  r.read(j, "", "trials", out.trials);
  r.read(j, "", "out_dir", out.out_dir);
  if (out.trials < 1) r.error("trials", "must be >= 1");

  if (auto it = j.find("topology"); it != j.end()) {
    if (it->is_object() && it->contains("file")) {
      std::string file = resolve(base_dir, (*it)["file"].is_string() ? (*it)["file"].get<std::string>() : "");
      if (auto t = read_json_file(file, "topology.file", r)) parse_topology(*t, "topology.file", r, out.topology);
    } else {
      parse_topology(*it, "topology", r, out.topology);
    }
  }
  if (auto it = j.find("faults"); it != j.end()) {
    if (it->is_object() && it->contains("file")) {
      std::string file = resolve(base_dir, (*it)["file"].is_string() ? (*it)["file"].get<std::string>() : "");
      if (auto f = read_json_file(file, "faults.file", r)) {
        if (f->is_object() && f->contains("faults")) {
          parse_faults((*f)["faults"], "faults.file", r, out.faults);
        } else {
          parse_faults(*f, "faults.file", r, out.faults);
        }
      }
    } else {
      parse_faults(*it, "faults", r, out.faults);
    }
  }
  if (auto it = j.find("workload"); it != j.end()) parse_workload(*it, "workload", r, out.workload);
  if (auto it = j.find("transport"); it != j.end()) parse_transport(*it, "transport", r, out.transport);
  if (auto it = j.find("monitor"); it != j.end()) {
    if (!it->is_object()) {
      r.error("monitor", "expected an object");
    } else {
      r.known_keys(*it, "monitor", {"window_sizes"});
      r.read(*it, "monitor", "window_sizes", out.window_sizes);
    }
  }
  for (const Diagnostic &d : check_config(out)) diags.push_back(d);
  return diags;
}

std::vector<Diagnostic> check_config(const RunConfig &cfg) {
  std::vector<Diagnostic> diags;
  Reader r(diags);
  if (cfg.window_sizes.empty()) r.error("monitor.window_sizes", "at least one window size is required");
  for (size_t i = 0; i < cfg.window_sizes.size(); ++i) {
    if (cfg.window_sizes[i] < 1) r.error("monitor.window_sizes[" + std::to_string(i) + "]", "window size must be ≥ 1");
  }
  Topology topo;
  try {
    topo = Topology::rail_clos(cfg.topology);
  } catch (const Error &e) {
    r.error("topology", e.what());
    return diags;
  }
  for (const std::string &msg : topo.validate()) r.error("topology", msg);
  std::vector<FaultSpec> known;
  for (size_t i = 0; i < cfg.faults.size(); ++i) {
    const FaultSpec &f = cfg.faults[i];
    auto node = topo.find_node(f.port);
    if (!node || topo.node(*node).kind != NodeKind::kNicPort) {
      r.error("faults[" + std::to_string(i) + "].port", "unknown NIC port '" + f.port + "'");
    } else {
      known.push_back(f);
    }
  }
  for (const std::string &msg : to_fault_script(known, topo).validate(topo)) r.error("faults", msg);
  for (size_t i = 0; i < cfg.workload.ranks.size(); ++i) {
    auto node = topo.find_node(cfg.workload.ranks[i]);
    if (!node || topo.node(*node).kind != NodeKind::kGpu) {
      r.error("workload.ranks[" + std::to_string(i) + "]", "unknown GPU '" + cfg.workload.ranks[i] + "'");
    }
  }
  return diags;
}

std::vector<Diagnostic> validate_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) return {Diagnostic{"error", "", "cannot open config file '" + path + "'"}};
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  return parse_config(ss.str(), std::filesystem::path(path).parent_path().string(), cfg);
}

bool has_errors(const std::vector<Diagnostic> &diags) {
  for (const Diagnostic &d : diags) {
    if (d.severity == "error") return true;
  }
  return false;
}

RunConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  auto diags = parse_config(ss.str(), std::filesystem::path(path).parent_path().string(), cfg);
  if (has_errors(diags)) {
    std::string msg = "invalid config '" + path + "'";
    for (const Diagnostic &d : diags) {
      if (d.severity == "error") msg += "\n  " + d.str();
    }
    throw Error(ErrorCode::kConfigError, msg);
  }
  return cfg;
}

std::vector<Diagnostic> apply_env_overrides(RunConfig &cfg) {
  std::vector<Diagnostic> diags;
  auto read_int = [&](const char *name, int lo, int hi, auto apply) {
    const char *v = std::getenv(name);
    if (v == nullptr) return;
    char *end = nullptr;
    long x = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || x < lo || x > hi) {
      diags.push_back({"error", name, "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"});
      return;
    }
    apply(static_cast<int>(x));
  };
  read_int("CCSIM_IB_TIMEOUT", 0, 31, [&](int x) { cfg.transport.ib_timeout = x; });
  read_int("CCSIM_IB_RETRY_CNT", 0, 7, [&](int x) { cfg.transport.ib_retry_cnt = x; });
  read_int("CCSIM_WINDOW_SIZE", 1, 1 << 20, [&](int x) { cfg.window_sizes = {x}; });
  return diags;
}

FaultScript to_fault_script(const std::vector<FaultSpec> &faults, const Topology &topo) {
  FaultScript script;
  for (const FaultSpec &f : faults) {
    auto node = topo.find_node(f.port);
    if (!node) throw Error(ErrorCode::kUnknownPort, "unknown port '" + f.port + "'");
    script.entries.push_back(FaultEntry{f.at, *node, f.state});
  }
  return script;
}

}  // namespace ccsim
