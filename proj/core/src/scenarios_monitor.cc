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

#include <cmath>
#include <set>

#include "ccsim/monitor.h"
#include "ccsim/network.h"
#include "ccsim/verbs.h"
#include "scenario_util.h"

namespace ccsim::detail {
namespace {

struct MonitorRun {
  std::vector<MessageRecord> records;
  std::vector<SimTime> wc_times;
};

// Back-to-back 64KiB sends h0 -> h1, one outstanding; a competing flow h2 -> h1
// starts at `disturb_at` and halves the bottleneck share.
MonitorRun steady_flow(Context *ctx, SimTime disturb_at, SimTime end, bool record) {
  ClosSpec spec;
  spec.hosts = 3;
  spec.gpus_per_host = 1;
  spec.nics_per_host = 1;
  spec.leaves = 1;
  spec.spines = 1;
  spec.link_delay = SimTime::ns(5);
  Topology topo = Topology::rail_clos(spec);
  EventLoop loop;
  if (ctx) ctx->attach(loop);
  Network net(loop, topo);
  Verbs verbs(loop, net);
  MonitorRecorder recorder;

  const Bytes msg = 64 * KiB;
  NodeId a = topo.nic(HostId(0), 0), b = topo.nic(HostId(1), 0), c = topo.nic(HostId(2), 0);
  CqId scq = verbs.create_cq(), rcq = verbs.create_cq();
  QpId sqp = verbs.create_qp({a, b, QpRole::kPrimary, scq});
  QpId rqp = verbs.create_qp({b, a, QpRole::kPrimary, rcq});
  verbs.connect(sqp, rqp);
  if (record) {
    recorder.watch(sqp);
    verbs.add_observer(&recorder);
  }
  MrId src = verbs.register_region(topo.gpu(HostId(0), 0), msg);
  MrId dst = verbs.register_region(topo.gpu(HostId(1), 0), msg);

  MonitorRun run;
  auto post_send = [&] {
    WorkRequest wr;
    wr.wr_id = verbs.next_wr_id();
    wr.region = src;
    wr.length = msg;
    verbs.post_send(sqp, wr);
  };
  auto post_recv = [&] {
    WorkRequest wr;
    wr.wr_id = verbs.next_wr_id();
    wr.direction = WrDirection::kRecv;
    wr.region = dst;
    wr.length = msg;
    verbs.post_recv(rqp, wr);
  };
  verbs.set_cq_handler(scq, [&] {
    for (const WorkCompletion &wc : verbs.poll_cq(scq, 64)) {
      run.wc_times.push_back(wc.completion_time);
      if (wc.status == WcStatus::kSuccess && loop.now() < end) post_send();
    }
  });
  verbs.set_cq_handler(rcq, [&] {
    for (const WorkCompletion &wc : verbs.poll_cq(rcq, 64)) {
      if (wc.status == WcStatus::kSuccess) post_recv();
    }
  });
  for (int i = 0; i < 4; ++i) post_recv();
  post_send();
  loop.schedule(disturb_at, [&] {
    loop.trace().record(loop.now(), "disturbance", topo.node(c).name, topo.node(b).name);
    net.start_flow(topo.route(c, b)->links, Bytes{1} << 50, nullptr);
  });
  loop.run_until(end);
  run.records = recorder.records();
  return run;
}

}  // namespace

RunSummary run_monitor_figure11(const RunConfig &cfg, Context &ctx) {
  RunSummary s;
  const SimTime disturb_at = SimTime::us(100);
  const SimTime end = SimTime::us(300);
  const SimTime warmup = SimTime::us(10);
  const double cap = 400e9 / 8;

  MonitorRun run = steady_flow(&ctx, disturb_at, end, true);
  MonitorRun bare = steady_flow(nullptr, disturb_at, end, false);

  std::set<int> windows(cfg.window_sizes.begin(), cfg.window_sizes.end());
  windows.insert({1, 8, 32});
  std::map<int, std::vector<ThroughputSample>> series;
  for (int w : windows) {
    series[w] = sample_series(run.records, w);
    s.monitor[w] = series_stats(series[w]);
    s.files.push_back({"series_w" + std::to_string(w) + ".csv", samples_csv(series[w])});
    auto grid = resample(series[w], SimTime(), end, SimTime::us(1));
    s.files.push_back({"resampled_w" + std::to_string(w) + ".csv", samples_csv(grid)});
  }

  double lo = INFINITY, hi = 0;
  for (const ThroughputSample &x : series[8]) {
    if (x.time < warmup || x.time >= disturb_at) continue;
    lo = std::min(lo, x.value / cap);
    hi = std::max(hi, x.value / cap);
  }
  int reach = -1, k = 0;
  for (const ThroughputSample &x : series[8]) {
    if (x.time <= disturb_at) continue;
    ++k;
    if (std::abs(x.value - cap / 2) <= 0.05 * cap / 2) {
      reach = k;
      break;
    }
  }
  auto transition_variance = [&](int w) {
    std::vector<ThroughputSample> part;
    for (const ThroughputSample &x : series[w]) {
      if (x.time >= disturb_at - SimTime::us(50) && x.time < disturb_at + SimTime::us(150)) part.push_back(x);
    }
    return series_stats(part).variance;
  };
  const double v1 = transition_variance(1), v8 = transition_variance(8), v32 = transition_variance(32);

  s.completed = true;
  s.makespan = end;
  s.metrics["capacity_bytes_per_s"] = cap;
  s.metrics["messages"] = static_cast<double>(run.records.size());
  s.metrics["steady_w8_min_ratio"] = lo;
  s.metrics["steady_w8_max_ratio"] = hi;
  s.metrics["reach_samples_w8"] = reach;
  s.metrics["var_w1"] = v1;
  s.metrics["var_w8"] = v8;
  s.metrics["var_w32"] = v32;
  s.metrics["variance_ordered"] = v1 >= v8 && v8 >= v32 ? 1 : 0;
  s.metrics["monitor_transparent"] = run.wc_times == bare.wc_times ? 1 : 0;
  s.phases.push_back({"steady", SimTime(), disturb_at, lo * cap});
  s.phases.push_back({"disturbed", disturb_at, end, cap / 2});
  return s;
}

}  // namespace ccsim::detail
