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

#include "ccsim/pipeline.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ccsim/topology.h"

namespace ccsim {

const char *to_string(OpKind k) {
  switch (k) {
    case OpKind::kGemm: return "gemm";
    case OpKind::kP2PSend: return "p2p_send";
    case OpKind::kP2PRecv: return "p2p_recv";
    case OpKind::kEventRecord: return "event_record";
    case OpKind::kEventWait: return "event_wait";
    case OpKind::kHostFuncWait: return "host_func_wait";
    case OpKind::kHostFuncBarrier: return "host_func_barrier";
  }
  return "?";
}

const char *to_string(P2PMode m) { return m == P2PMode::kKernelBased ? "kernel_based" : "offloaded"; }

void SmPool::reserve(int holder, double fraction) {
  if (fraction < 0 || fraction > 1) throw Error(ErrorCode::kInvalidConfig, "SM fraction must lie in [0, 1]");
  reservations_[holder] = fraction;
}

double SmPool::reserved() const {
  double sum = 0;
  for (const auto &[h, f] : reservations_) sum += f;
  return sum;
}

SimTime gemm_duration(SimTime base, const SmPool &pool) {
  double a = pool.available();
  if (a <= 0) throw Error(ErrorCode::kNoSmAvailable, "no SMs left for computation");
  return SimTime(static_cast<int64_t>(std::llround(static_cast<double>(base.count()) / a)));
}

namespace {

enum class Phase { kIdle, kPosted, kRunning };

struct StreamState {
  size_t idx = 0;
  Phase phase = Phase::kIdle;
  double start = 0;
  double end = 0;        // timed ops
  double remaining = 0;  // GEMM base nanoseconds left
  double rate = 0;
};

}  // namespace

ExecutionTrace enforce_order(const std::vector<Stream> &streams, const std::vector<SimTime> &transfer_time) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  ExecutionTrace trace;
  int events = 0;
  int devices = 0;
  for (const Stream &s : streams) {
    devices = std::max(devices, s.device + 1);
    for (const StreamOp &op : s.ops) {
      events = std::max(events, op.event + 1);
      if ((op.kind == OpKind::kP2PSend || op.kind == OpKind::kP2PRecv) &&
          (op.transfer < 0 || op.transfer >= static_cast<int>(transfer_time.size()))) {
        throw Error(ErrorCode::kInvalidConfig, "P2P op names an unknown transfer");
      }
    }
  }
  std::vector<double> recorded(events, kInf);
  std::vector<SmPool> pools(devices);
  std::vector<StreamState> st(streams.size());
  std::vector<int> send_at(transfer_time.size(), -1), recv_at(transfer_time.size(), -1);
  double now = 0;

  auto ns = [](double t) { return SimTime(static_cast<int64_t>(std::llround(t))); };
  auto complete = [&](size_t i) {
    const StreamOp &op = streams[i].ops[st[i].idx];
    trace.entries.push_back(ExecutionEntry{static_cast<int>(i), streams[i].device, op.kind, op.label, op.microbatch,
                                           ns(st[i].start), ns(now)});
    pools[streams[i].device].release(static_cast<int>(i));
    ++st[i].idx;
    st[i].phase = Phase::kIdle;
  };
  auto begin_timed = [&](size_t i, double duration) {
    st[i].phase = Phase::kRunning;
    st[i].start = now;
    st[i].end = now + duration;
  };

  for (;;) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t i = 0; i < streams.size(); ++i) {
        StreamState &s = st[i];
        if (s.idx >= streams[i].ops.size()) continue;
        const StreamOp &op = streams[i].ops[s.idx];
        if (s.phase == Phase::kIdle) {
          switch (op.kind) {
            case OpKind::kEventRecord:
              recorded.at(op.event) = now;
              s.start = now;
              complete(i);
              changed = true;
              continue;
            case OpKind::kEventWait:
              if (recorded.at(op.event) > now) continue;
              s.start = now;
              complete(i);
              changed = true;
              continue;
            case OpKind::kHostFuncWait:
              if (recorded.at(op.event) > now) continue;
              begin_timed(i, static_cast<double>(op.duration.count()));
              break;
            case OpKind::kHostFuncBarrier:
              begin_timed(i, static_cast<double>(op.duration.count()));
              break;
            case OpKind::kGemm:
              s.phase = Phase::kRunning;
              s.start = now;
              s.remaining = static_cast<double>(op.duration.count());
              break;
            case OpKind::kP2PSend:
            case OpKind::kP2PRecv: {
              s.phase = Phase::kPosted;
              (op.kind == OpKind::kP2PSend ? send_at : recv_at)[op.transfer] = static_cast<int>(i);
              int a = send_at[op.transfer];
              int b = recv_at[op.transfer];
              if (a >= 0 && b >= 0) {
                double d = static_cast<double>(transfer_time[op.transfer].count());
                for (int k : {a, b}) {
                  begin_timed(k, d);
                  const StreamOp &p = streams[k].ops[st[k].idx];
                  if (p.sm_fraction > 0) pools[streams[k].device].reserve(k, p.sm_fraction);
                }
              }
              break;
            }
          }
          changed = true;
        }
        if (s.phase == Phase::kRunning && op.kind != OpKind::kGemm && s.end <= now) {
          complete(i);
          changed = true;
        } else if (s.phase == Phase::kRunning && op.kind == OpKind::kGemm && s.remaining <= 0) {
          complete(i);
          changed = true;
        }
      }
    }
    bool all_done = true;
    double next = kInf;
    for (size_t i = 0; i < streams.size(); ++i) {
      StreamState &s = st[i];
      if (s.idx >= streams[i].ops.size()) continue;
      all_done = false;
      if (s.phase != Phase::kRunning) continue;
      if (streams[i].ops[s.idx].kind == OpKind::kGemm) {
        s.rate = pools[streams[i].device].available();
        if (s.rate <= 1e-12) throw Error(ErrorCode::kNoSmAvailable, "GEMM on device " + std::to_string(streams[i].device) + " has no SMs");
        next = std::min(next, now + s.remaining / s.rate);
      } else {
        next = std::min(next, s.end);
      }
    }
    if (all_done) break;
    if (next == kInf) {
      std::string stuck;
      for (size_t i = 0; i < streams.size(); ++i) {
        if (st[i].idx >= streams[i].ops.size()) continue;
        const StreamOp &op = streams[i].ops[st[i].idx];
        stuck += " " + streams[i].name + ":" + to_string(op.kind) + (op.label.empty() ? "" : "(" + op.label + ")");
      }
      throw Error(ErrorCode::kDependencyCycle, "no stream can make progress; blocked:" + stuck);
    }
    for (size_t i = 0; i < streams.size(); ++i) {
      StreamState &s = st[i];
      if (s.idx < streams[i].ops.size() && s.phase == Phase::kRunning &&
          streams[i].ops[s.idx].kind == OpKind::kGemm) {
        s.remaining -= (next - now) * s.rate;
        if (s.remaining < 1e-3) s.remaining = 0;
      }
    }
    now = next;
  }
  trace.event_time.reserve(events);
  for (double t : recorded) trace.event_time.push_back(t == kInf ? SimTime::max() : ns(t));
  for (const ExecutionEntry &e : trace.entries) trace.makespan = std::max(trace.makespan, e.end);
  return trace;
}

std::vector<std::pair<char, int>> one_f_one_b_order(int workers, int worker, int microbatches) {
  std::vector<std::pair<char, int>> order;
  int warmup = std::min(workers - worker - 1, microbatches);
  for (int m = 0; m < warmup; ++m) order.emplace_back('F', m);
  for (int m = warmup; m < microbatches; ++m) {
    order.emplace_back('F', m);
    order.emplace_back('B', m - warmup);
  }
  for (int m = microbatches - warmup; m < microbatches; ++m) order.emplace_back('B', m);
  return order;
}

namespace {

std::string op_name(char kind, int w, int m) {
  return std::string(1, kind) + "(" + std::to_string(w) + "," + std::to_string(m) + ")";
}

std::string act_name(int w, int m) { return "act(" + std::to_string(w) + "->" + std::to_string(w + 1) + "," + std::to_string(m) + ")"; }

std::string grad_name(int w, int m) {
  return "grad(" + std::to_string(w) + "->" + std::to_string(w - 1) + "," + std::to_string(m) + ")";
}

}  // namespace

Dag build_1f1b_dag(int workers, int microbatches) {
  Dag dag;
  std::map<std::string, int> index;
  auto add = [&](const std::string &name, int w, int m) {
    index[name] = static_cast<int>(dag.ops.size());
    dag.ops.push_back(DagOp{name, w, m});
  };
  for (int w = 0; w < workers; ++w) {
    for (int m = 0; m < microbatches; ++m) {
      add(op_name('F', w, m), w, m);
      add(op_name('B', w, m), w, m);
      if (w + 1 < workers) add(act_name(w, m), w, m);
      if (w > 0) add(grad_name(w, m), w, m);
    }
  }
  auto edge = [&](const std::string &a, const std::string &b) { dag.edges.emplace_back(index.at(a), index.at(b)); };
  for (int w = 0; w < workers; ++w) {
    for (int m = 0; m < microbatches; ++m) {
      edge(op_name('F', w, m), op_name('B', w, m));
      if (w + 1 < workers) {
        edge(op_name('F', w, m), act_name(w, m));
        edge(act_name(w, m), op_name('F', w + 1, m));
      }
      if (w > 0) {
        edge(op_name('B', w, m), grad_name(w, m));
        edge(grad_name(w, m), op_name('B', w - 1, m));
      }
    }
  }
  return dag;
}

SimTime measure_p2p(Bytes bytes, PipelineMode mode, const TransportConfig &base) {
  if (bytes <= 0) return SimTime();
  ClosSpec spec;
  spec.hosts = 2;
  spec.gpus_per_host = 1;
  spec.nics_per_host = 1;
  spec.leaves = 1;
  spec.spines = 1;
  Topology topo = Topology::rail_clos(spec);
  EventLoop loop;
  Network net(loop, topo);
  Verbs verbs(loop, net);
  Transport transport(verbs);
  TransportConfig cfg = base;
  cfg.mode = mode;
  NodeId a = topo.gpu(HostId(0), 0);
  NodeId b = topo.gpu(HostId(1), 0);
  Connection &c = transport.connect(a, b, cfg);
  SimTime end;
  c.recv_message(transport.register_buffer(b, bytes), bytes);
  c.send_message(transport.register_buffer(a, bytes), bytes, 1, [&] {
    end = loop.now();
    loop.stop();
  });
  loop.run();
  return end;
}

namespace {

struct Lowered {
  std::vector<Stream> streams;
  std::vector<SimTime> transfers;
};

Lowered lower_1f1b(const PipelineConfig &cfg, SimTime p2p) {
  const int W = cfg.workers;
  const int M = cfg.microbatches;
  const bool offloaded = cfg.mode == P2PMode::kOffloaded;
  const double sm = offloaded ? 0.0 : cfg.p2p_sm_fraction;
  Lowered out;
  std::map<std::string, int> transfer;
  std::map<std::string, int> event;
  auto transfer_id = [&](const std::string &n) {
    auto [it, fresh] = transfer.emplace(n, static_cast<int>(out.transfers.size()));
    if (fresh) out.transfers.push_back(p2p);
    return it->second;
  };
  auto event_id = [&](const std::string &n) {
    auto [it, fresh] = event.emplace(n, static_cast<int>(event.size()));
    return it->second;
  };
  for (int w = 0; w < W; ++w) {
    Stream compute{StreamKind::kCompute, w, "w" + std::to_string(w) + ".compute", {}};
    Stream send{StreamKind::kCommunication, w, "w" + std::to_string(w) + ".send", {}};
    Stream recv{StreamKind::kCommunication, w, "w" + std::to_string(w) + ".recv", {}};
    for (auto [kind, m] : one_f_one_b_order(W, w, M)) {
      bool fwd = kind == 'F';
      bool has_in = fwd ? w > 0 : w + 1 < W;
      bool has_out = fwd ? w + 1 < W : w > 0;
      std::string in = fwd ? act_name(w - 1, m) : grad_name(w + 1, m);
      std::string out_name = fwd ? act_name(w, m) : grad_name(w, m);
      std::string name = op_name(kind, w, m);
      if (has_in) {
        recv.ops.push_back(StreamOp{OpKind::kP2PRecv, SimTime(), -1, transfer_id(in), sm, in, m});
        recv.ops.push_back(StreamOp{OpKind::kEventRecord, SimTime(), event_id("arrived " + in), -1, 0, in, m});
        compute.ops.push_back(StreamOp{OpKind::kEventWait, SimTime(), event_id("arrived " + in), -1, 0, in, m});
      }
      compute.ops.push_back(StreamOp{OpKind::kGemm, fwd ? cfg.fwd_time : cfg.bwd_time, -1, -1, 0, name, m});
      if (!has_out) continue;
      if (offloaded) {
        int e = event_id("done " + name);
        compute.ops.push_back(StreamOp{OpKind::kEventRecord, SimTime(), e, -1, 0, name, m});
        send.ops.push_back(StreamOp{OpKind::kHostFuncWait, cfg.host_func_overhead, e, -1, 0, out_name, m});
        send.ops.push_back(StreamOp{OpKind::kP2PSend, SimTime(), -1, transfer_id(out_name), 0, out_name, m});
        send.ops.push_back(StreamOp{OpKind::kHostFuncBarrier, cfg.host_func_overhead, -1, -1, 0, out_name, m});
      } else {
        compute.ops.push_back(StreamOp{OpKind::kP2PSend, SimTime(), -1, transfer_id(out_name), sm, out_name, m});
      }
    }
    out.streams.push_back(std::move(compute));
    out.streams.push_back(std::move(send));
    out.streams.push_back(std::move(recv));
  }
  return out;
}

std::string timeline_kind(const ExecutionEntry &e) {
  bool act = e.label.rfind("act", 0) == 0;
  switch (e.kind) {
    case OpKind::kGemm: return e.label[0] == 'F' ? "forward" : "backward";
    case OpKind::kP2PSend: return act ? "send_act" : "send_grad";
    case OpKind::kP2PRecv: return act ? "recv_act" : "recv_grad";
    case OpKind::kHostFuncWait: return "host_func_wait";
    case OpKind::kHostFuncBarrier: return "host_func_barrier";
    default: return "";
  }
}

}  // namespace

PipelineResult run_1f1b(const PipelineConfig &cfg) {
  if (cfg.workers < 1 || cfg.microbatches < 1) {
    throw Error(ErrorCode::kInvalidConfig, "pipeline needs at least one worker and one microbatch");
  }
  if (cfg.fwd_time.count() <= 0 || cfg.bwd_time.count() <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "forward and backward times must be positive");
  }
  if (cfg.p2p_sm_fraction < 0 || cfg.p2p_sm_fraction >= 1) {
    throw Error(ErrorCode::kInvalidConfig, "p2p SM fraction must lie in [0, 1)");
  }
  PipelineResult r;
  r.mode = cfg.mode;
  r.p2p_time = cfg.p2p_time.count() > 0
                   ? cfg.p2p_time
                   : measure_p2p(cfg.p2p_bytes,
                                 cfg.mode == P2PMode::kOffloaded ? PipelineMode::kZeroCopy : PipelineMode::kStagedCopy,
                                 cfg.transport);
  Lowered lowered = lower_1f1b(cfg, r.p2p_time);
  r.trace = enforce_order(lowered.streams, lowered.transfers);
  r.makespan = r.trace.makespan;
  r.dag = build_1f1b_dag(cfg.workers, cfg.microbatches);

  std::vector<std::vector<const ExecutionEntry *>> gemms(cfg.workers);
  for (const ExecutionEntry &e : r.trace.entries) {
    std::string kind = timeline_kind(e);
    if (kind.empty()) continue;
    r.timeline.push_back(TimelineEntry{e.device, kind, e.microbatch, e.start, e.end});
    if (e.kind == OpKind::kGemm) {
      gemms[e.device].push_back(&e);
      r.dag_times[e.label] = {e.start, e.end};
    } else if (e.kind == OpKind::kP2PSend) {
      r.dag_times[e.label] = {e.start, e.end};
    }
  }
  std::stable_sort(r.timeline.begin(), r.timeline.end(), [](const TimelineEntry &a, const TimelineEntry &b) {
    return a.worker != b.worker ? a.worker < b.worker : a.start < b.start;
  });
  SimTime last_end;
  int critical = 0;
  for (int w = 0; w < cfg.workers; ++w) {
    auto &g = gemms[w];
    std::stable_sort(g.begin(), g.end(), [](auto *a, auto *b) { return a->start < b->start; });
    int live = 0;
    int peak = 0;
    for (const ExecutionEntry *e : g) {
      live += e->label[0] == 'F' ? 1 : -1;
      peak = std::max(peak, live);
    }
    r.max_inflight_forwards.push_back(peak);
    if (!g.empty() && g.back()->end >= last_end) {
      last_end = g.back()->end;
      critical = w;
    }
  }
  SimTime busy;
  for (const ExecutionEntry *e : gemms[critical]) busy += e->end - e->start;
  r.bubble = r.makespan - busy;
  return r;
}

std::string PipelineResult::timeline_csv() const {
  std::ostringstream os;
  os << "worker,op_kind,microbatch,start_ns,end_ns\n";
  for (const TimelineEntry &e : timeline) {
    os << e.worker << ',' << e.op_kind << ',' << e.microbatch << ',' << e.start.count() << ',' << e.end.count() << '\n';
  }
  return os.str();
}

double training_throughput_proxy(const PipelineResult &r, double work_per_microbatch, int microbatches) {
  if (r.makespan.count() <= 0) throw Error(ErrorCode::kNonPositiveDuration, "makespan must be positive");
  return microbatches * work_per_microbatch / r.makespan.seconds();
}

}  // namespace ccsim
