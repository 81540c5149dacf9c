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

#ifndef CCSIM_SCENARIOS_H_
#define CCSIM_SCENARIOS_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/config.h"
#include "ccsim/monitor.h"

namespace ccsim {

struct ScenarioInfo {
  std::string name;
  std::string description;
};

struct PhaseStat {
  std::string name;
  SimTime start;
  SimTime end;
  double throughput = 0;  // bytes per second
};

struct OutputFile {
  std::string name;
  std::string contents;
};

struct RunSummary {
  std::string scenario;
  bool completed = false;
  std::string reason;  // abort reason when not completed
  SimTime makespan;
  std::vector<PhaseStat> phases;
  std::optional<bool> checksum_ok;
  std::map<int, SeriesStats> monitor;
  std::map<std::string, double> metrics;
  std::vector<OutputFile> files;  // written next to summary.json

  std::string to_json() const;
};

std::vector<ScenarioInfo> list_scenarios();
/// Defaults of a builtin scenario (Table 5 transport settings, window sizes, seed).
RunConfig scenario_defaults(const std::string &name);
/// Runs `cfg.scenario` (a builtin name or "custom"). Writes trace.csv, summary.json and the
/// scenario's series files to cfg.out_dir when it is set. Throws Error(kConfigError) for
/// unknown scenarios.
RunSummary run_scenario(const RunConfig &cfg);
/// Writes summary.json and all files of `s` into `dir`; returns the written paths.
std::vector<std::string> write_outputs(const RunSummary &s, const std::string &dir);

/// Failure-detection cases: a sender retry-exhaustion, a receiver timeout over a dead link,
/// and a receiver timeout while the link is up but the sender has nothing to send.
enum class TriggerCase { kSenderRetry, kReceiverTimeout, kInnocentStall };

struct TriggerOutcome {
  bool sender_retry_exceeded = false;
  bool cts_probe = false;
  bool cts_ok = false;
  bool cts_fail = false;
  bool switched = false;
  bool probe_before_switch = false;
  bool completed = false;
  bool intact = false;  // digests equal, delivered indices 0..N-1 in order
  SimTime switch_time;
};

TriggerOutcome run_trigger_case(TriggerCase which, uint64_t seed);

struct FuzzTrial {
  uint64_t seed = 0;
  Bytes bytes = 0;
  bool eligible = false;      // some QP path is alive once the fault script ends
  bool double_fault = false;  // both paths were down at the same time
  bool completed = false;
  bool intact = false;
  bool prefix_ok = false;  // delivered indices are 0..k-1 without gaps or repeats
  int switches = 0;
  std::string failure;
};

FuzzTrial run_fuzz_trial(uint64_t seed);

}  // namespace ccsim

#endif  // CCSIM_SCENARIOS_H_
