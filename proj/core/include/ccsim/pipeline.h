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

#ifndef CCSIM_PIPELINE_H_
#define CCSIM_PIPELINE_H_

#include <map>
#include <string>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/transport.h"

namespace ccsim {

enum class OpKind { kGemm, kP2PSend, kP2PRecv, kEventRecord, kEventWait, kHostFuncWait, kHostFuncBarrier };
enum class StreamKind { kCompute, kCommunication };
enum class P2PMode { kKernelBased, kOffloaded };

const char *to_string(OpKind k);
const char *to_string(P2PMode m);

/// Fractions of a device's SMs held by running communication kernels.
class SmPool {
 public:
  explicit SmPool(int total_sm = 132) : total_sm_(total_sm) {}

  void reserve(int holder, double fraction);
  void release(int holder) { reservations_.erase(holder); }
  double reserved() const;
  double available() const { return 1.0 - reserved(); }
  int total_sm() const { return total_sm_; }

 private:
  int total_sm_;
  std::map<int, double> reservations_;
};

/// base / (1 - reserved). Throws Error(kNoSmAvailable) when nothing is left.
SimTime gemm_duration(SimTime base, const SmPool &pool);

struct StreamOp {
  OpKind kind = OpKind::kGemm;
  SimTime duration;  // Gemm base time or host-function overhead
  int event = -1;    // EventRecord / EventWait / HostFuncWait
  int transfer = -1;  // P2PSend / P2PRecv pair on the same id
  double sm_fraction = 0;  // held on the stream's device while a P2P op transfers
  std::string label;
  int microbatch = -1;
};

struct Stream {
  StreamKind kind = StreamKind::kCompute;
  int device = 0;
  std::string name;
  std::vector<StreamOp> ops;
};

struct ExecutionEntry {
  int stream = 0;
  int device = 0;
  OpKind kind = OpKind::kGemm;
  std::string label;
  int microbatch = -1;
  SimTime start;
  SimTime end;
};

struct ExecutionTrace {
  std::vector<ExecutionEntry> entries;
  std::vector<SimTime> event_time;  // per event id; SimTime::max() if never recorded
  SimTime makespan;
};

/// Executes streams in FIFO order honoring events and P2P rendezvous (a transfer runs once
/// both its send and receive ops are reached). GEMMs progress at the available SM fraction
/// of their device. Throws Error(kDependencyCycle) when no op can make progress.
ExecutionTrace enforce_order(const std::vector<Stream> &streams, const std::vector<SimTime> &transfer_time);

struct PipelineConfig {
  int workers = 4;
  int microbatches = 8;
  SimTime fwd_time = SimTime::ms(1);
  SimTime bwd_time = SimTime::ms(2);
  Bytes p2p_bytes = 0;
  SimTime p2p_time;  // nonzero overrides the transport-derived duration
  P2PMode mode = P2PMode::kOffloaded;
  double p2p_sm_fraction = 0.032;
  SimTime host_func_overhead;
  TransportConfig transport;  // used to time a p2p_bytes transfer between two hosts
};

/// One logical operation of the 1F1B DAG, independent of how it is lowered onto streams.
struct DagOp {
  std::string name;  // e.g. "F(1,3)", "act(0->1,3)"
  int worker = 0;
  int microbatch = 0;
};

struct Dag {
  std::vector<DagOp> ops;
  std::vector<std::pair<int, int>> edges;  // op index -> op index
};

struct TimelineEntry {
  int worker = 0;
  std::string op_kind;
  int microbatch = -1;
  SimTime start;
  SimTime end;
};

struct PipelineResult {
  P2PMode mode = P2PMode::kOffloaded;
  SimTime makespan;
  SimTime p2p_time;
  SimTime bubble;  // idle compute time on the worker that finishes last
  std::vector<TimelineEntry> timeline;
  std::vector<int> max_inflight_forwards;  // per worker
  Dag dag;
  std::map<std::string, std::pair<SimTime, SimTime>> dag_times;  // op name -> [start, end]
  ExecutionTrace trace;

  std::string timeline_csv() const;
};

/// Compute order of one worker: warmup forwards, then one-forward-one-backward, then the
/// remaining backwards. Pairs are ('F'|'B', microbatch).
std::vector<std::pair<char, int>> one_f_one_b_order(int workers, int worker, int microbatches);
Dag build_1f1b_dag(int workers, int microbatches);
/// Time of one p2p_bytes transfer between two hosts with the given transport mode.
SimTime measure_p2p(Bytes bytes, PipelineMode mode, const TransportConfig &base);
PipelineResult run_1f1b(const PipelineConfig &cfg);
double training_throughput_proxy(const PipelineResult &r, double work_per_microbatch, int microbatches);

}  // namespace ccsim

#endif  // CCSIM_PIPELINE_H_
