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

#ifndef CCSIM_CONFIG_H_
#define CCSIM_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/network.h"
#include "ccsim/topology.h"

namespace ccsim {

struct Diagnostic {
  std::string severity;  // "error" or "warning"
  std::string field;     // dotted path, e.g. "monitor.window_sizes[0]"
  std::string message;

  std::string str() const { return severity + ": " + field + ": " + message; }
};

struct FaultSpec {
  SimTime at;
  std::string port;
  LinkState state = LinkState::kDown;
};

struct WorkloadSpec {
  std::string kind = "allreduce";  // p2p, allreduce, reducescatter, alltoall, pipeline
  Bytes message_bytes = 4 * GiB;
  int iterations = 1;
  Bytes chunk_bytes = 4 * MiB;
  std::string mode = "zero_copy";  // zero_copy or staged_copy (p2p), offloaded or kernel_based (pipeline)
  std::vector<std::string> ranks;  // GPU names; empty selects GPU 0 of every host
  int workers = 4;
  int microbatches = 8;
  double fwd_ms = 1.0;
  double bwd_ms = 2.0;
  double p2p_ms = 0.0;
};

struct TransportSettings {
  int ib_timeout = 18;
  int ib_retry_cnt = 7;
  int qp_per_connection = 2;
  int channels = 32;
  int window = 4;
  bool failover = true;
  double probe_period_ms = 500.0;
};

struct RunConfig {
  std::string scenario = "custom";
  ClosSpec topology;
  std::vector<FaultSpec> faults;
  WorkloadSpec workload;
  TransportSettings transport;
  std::vector<int> window_sizes{8};
  uint64_t seed = 1;
  int trials = 1000;
  std::string out_dir;
};

/// Parses JSON config text; relative "file" references resolve against `base_dir`.
/// Returns diagnostics; `out` is filled as far as parsing got.
std::vector<Diagnostic> parse_config(const std::string &text, const std::string &base_dir, RunConfig &out);
/// Parses and cross-checks the file without running anything.
std::vector<Diagnostic> validate_config(const std::string &path);
/// Throws Error(kConfigError) listing every error diagnostic.
RunConfig load_config(const std::string &path);
/// Cross-checks of an assembled config (window sizes, fault ports against the topology).
std::vector<Diagnostic> check_config(const RunConfig &cfg);

/// CCSIM_IB_TIMEOUT, CCSIM_IB_RETRY_CNT and CCSIM_WINDOW_SIZE override the matching settings.
std::vector<Diagnostic> apply_env_overrides(RunConfig &cfg);

bool has_errors(const std::vector<Diagnostic> &diags);
FaultScript to_fault_script(const std::vector<FaultSpec> &faults, const Topology &topo);

}  // namespace ccsim

#endif  // CCSIM_CONFIG_H_
