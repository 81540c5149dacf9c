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

#include <set>

#include "ccsim/collectives.h"
#include "ccsim/config.h"
#include "ccsim/monitor.h"
#include "ccsim/network.h"
#include "ccsim/pipeline.h"
#include "ccsim/transport.h"
#include "ccsim/verbs.h"
#include "scenario_util.h"

namespace ccsim::detail {
namespace {

TransportConfig transport_config(const RunConfig &cfg) {
  TransportConfig tc;
  tc.chunk_size = cfg.workload.chunk_bytes;
  tc.window = cfg.transport.window;
  tc.timeout_exponent = cfg.transport.ib_timeout;
  tc.retry_count = cfg.transport.ib_retry_cnt;
  tc.failover = cfg.transport.failover;
  tc.probe_period = SimTime::ms(cfg.transport.probe_period_ms);
  tc.mode = cfg.workload.mode == "staged_copy" ? PipelineMode::kStagedCopy : PipelineMode::kZeroCopy;
  return tc;
}

std::vector<NodeId> pick_ranks(const RunConfig &cfg, const Topology &topo) {
  std::vector<NodeId> ranks;
  for (const std::string &name : cfg.workload.ranks) {
    auto n = topo.find_node(name);
    if (!n || topo.node(*n).kind != NodeKind::kGpu) throw Error(ErrorCode::kConfigError, "unknown rank '" + name + "'");
    ranks.push_back(*n);
  }
  if (ranks.empty()) {
    for (const Host &h : topo.hosts()) ranks.push_back(h.gpus.at(0));
  }
  return ranks;
}

void add_monitor(RunSummary &s, const RunConfig &cfg, const MonitorRecorder &rec) {
  for (int w : std::set<int>(cfg.window_sizes.begin(), cfg.window_sizes.end())) {
    auto series = sample_series(rec.records(), w);
    s.monitor[w] = series_stats(series);
    s.files.push_back({"series_w" + std::to_string(w) + ".csv", samples_csv(series)});
  }
}

RunSummary custom_pipeline(const RunConfig &cfg) {
  RunSummary s;
  PipelineConfig pc;
  pc.workers = cfg.workload.workers;
  pc.microbatches = cfg.workload.microbatches;
  pc.fwd_time = SimTime::ms(cfg.workload.fwd_ms);
  pc.bwd_time = SimTime::ms(cfg.workload.bwd_ms);
  pc.p2p_bytes = cfg.workload.message_bytes;
  if (cfg.workload.p2p_ms > 0) pc.p2p_time = SimTime::ms(cfg.workload.p2p_ms);
  pc.mode = cfg.workload.mode == "kernel_based" ? P2PMode::kKernelBased : P2PMode::kOffloaded;
  pc.transport = transport_config(cfg);
  PipelineResult r = run_1f1b(pc);
  s.completed = true;
  s.makespan = r.makespan;
  s.metrics["p2p_ns"] = static_cast<double>(r.p2p_time.count());
  s.metrics["bubble_ns"] = static_cast<double>(r.bubble.count());
  for (size_t w = 0; w < r.max_inflight_forwards.size(); ++w) {
    s.metrics["max_inflight_forwards@" + std::to_string(w)] = r.max_inflight_forwards[w];
  }
  s.files.push_back({"timeline.csv", r.timeline_csv()});
  return s;
}

}  // namespace

RunSummary run_custom(const RunConfig &cfg, Context &ctx) {
  if (cfg.workload.kind == "pipeline") return custom_pipeline(cfg);

  RunSummary s;
  Topology topo = Topology::rail_clos(cfg.topology);
  EventLoop loop;
  ctx.attach(loop);
  Network net(loop, topo);
  Verbs verbs(loop, net);
  Transport transport(verbs);
  MonitorRecorder rec;
  verbs.add_observer(&rec);
  net.apply_script(to_fault_script(cfg.faults, topo));
  const std::vector<NodeId> ranks = pick_ranks(cfg, topo);
  const TransportConfig tc = transport_config(cfg);
  const int iterations = std::max(1, cfg.workload.iterations);

  if (cfg.workload.kind == "p2p") {
    if (ranks.size() < 2) throw Error(ErrorCode::kConfigError, "p2p needs two ranks");
    Connection &c = transport.connect(ranks[0], ranks[1], tc);
    std::string failure;
    transport.set_failure_handler([&](ConnId, const std::string &why) {
      failure = why;
      loop.stop();
    });
    const Bytes n = cfg.workload.message_bytes;
    int left = 2 * iterations;
    auto done = [&] {
      if (--left == 0) loop.stop();
    };
    for (int i = 0; i < iterations; ++i) {
      c.recv_message(transport.register_buffer(ranks[1], n), n, done);
      c.send_message(transport.register_buffer(ranks[0], n), n, cfg.seed + static_cast<uint64_t>(i), done);
    }
    loop.run();
    bool intact = true;
    for (size_t i = 0; i < c.sent_message_count(); ++i) {
      MessageDigest d = c.digest(i);
      intact = intact && d.sender_done && d.receiver_done && d.sent == d.received;
    }
    s.completed = left == 0;
    s.reason = s.completed ? "" : (failure.empty() ? "transfer stalled" : failure);
    s.checksum_ok = intact;
    s.makespan = loop.now();
    s.metrics["switches"] = c.switch_count();
    s.metrics["bytes_per_s"] = static_cast<double>(n) * iterations / loop.now().seconds();
  } else {
    static const std::map<std::string, CollectiveKind> kinds{{"allreduce", CollectiveKind::kAllReduce},
                                                             {"allgather", CollectiveKind::kAllGather},
                                                             {"reducescatter", CollectiveKind::kReduceScatter},
                                                             {"alltoall", CollectiveKind::kAllToAll}};
    auto kind = kinds.find(cfg.workload.kind);
    if (kind == kinds.end()) throw Error(ErrorCode::kConfigError, "unknown workload kind '" + cfg.workload.kind + "'");
    CollectiveConfig cc;
    cc.channels = cfg.transport.channels;
    cc.qp_per_connection = cfg.transport.qp_per_connection;
    cc.transport = tc;
    Communicator comm(transport, ranks, cc);
    bool correct = true;
    s.completed = true;
    for (int i = 0; i < iterations && s.completed; ++i) {
      CollectiveResult r = comm.run(kind->second, cfg.workload.message_bytes);
      s.completed = r.completed;
      s.reason = r.failure;
      correct = correct && r.correct;
      s.phases.push_back({cfg.workload.kind + "#" + std::to_string(i), r.start, r.end,
                          static_cast<double>(r.nbytes) / (r.end - r.start).seconds()});
      if (i == 0) s.files.push_back({"collective.json", r.to_json(topo) + "\n"});
    }
    int switches = 0;
    for (Connection *c : comm.connections()) switches += c->switch_count();
    s.checksum_ok = correct;
    s.makespan = loop.now();
    s.metrics["switches"] = switches;
  }
  add_monitor(s, cfg, rec);
  return s;
}

}  // namespace ccsim::detail
