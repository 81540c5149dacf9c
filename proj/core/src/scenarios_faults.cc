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

// Fault-driven scenarios: the failover timeline, trigger discrimination and the
// randomized exactly-once fuzz.

#include <algorithm>
#include <random>
#include <set>

#include "ccsim/collectives.h"
#include "ccsim/network.h"
#include "ccsim/transport.h"
#include "ccsim/verbs.h"
#include "scenario_util.h"

namespace ccsim {
namespace {

Topology dual_rail_pair(SimTime link_delay = SimTime::ns(500)) {
  ClosSpec spec;
  spec.hosts = 2;
  spec.gpus_per_host = 2;
  spec.nics_per_host = 2;
  spec.leaves = 2;
  spec.spines = 1;
  spec.link_delay = link_delay;
  return Topology::rail_clos(spec);
}

// Bytes per second over [a, b) from a time-sorted list of (time, bytes) samples.
double rate_between(const std::vector<std::pair<SimTime, Bytes>> &acks, SimTime a, SimTime b) {
  if (b <= a) return 0;
  Bytes sum = 0;
  for (const auto &[t, n] : acks) {
    if (t >= a && t < b) sum += n;
  }
  return static_cast<double>(sum) / (b - a).seconds();
}

}  // namespace

namespace detail {

RunSummary run_failover_figure10(const RunConfig &cfg, Context &ctx) {
  RunSummary s;
  const SimTime fault_at = SimTime::s(4);
  const SimTime up_at = SimTime::s(19);
  const SimTime horizon = SimTime::s(25);
  const SimTime bin = SimTime::ms(100);
  const Bytes nbytes = 4 * GiB;

  Topology topo = dual_rail_pair();
  EventLoop loop;
  ctx.attach(loop);
  Network net(loop, topo);
  Verbs verbs(loop, net);
  Transport transport(verbs);

  NodeId g0 = topo.gpu(HostId(0), 0);
  NodeId g1 = topo.gpu(HostId(1), 0);
  NodeId p0 = topo.primary_nic(g0);
  NodeId b0 = topo.backup_nic(g0);
  NodeId b1 = topo.backup_nic(g1);

  // Long-lived cross traffic on the backup rail so the backup path gets half of a link.
  for (auto [a, b] : {std::pair{b0, b1}, std::pair{b1, b0}}) {
    net.start_flow(topo.route(a, b)->links, Bytes{1} << 52, nullptr);
  }

  CollectiveConfig cc;
  cc.channels = 1;
  cc.qp_per_connection = 1;
  cc.transport.chunk_size = 16 * MiB;
  cc.transport.window = std::max(1, cfg.transport.window);
  cc.transport.timeout_exponent = cfg.transport.ib_timeout;
  cc.transport.retry_count = cfg.transport.ib_retry_cnt;
  cc.transport.failover = cfg.transport.failover;
  cc.transport.probe_period = SimTime::ms(cfg.transport.probe_period_ms);
  Communicator comm(transport, {g0, g1}, cc);

  std::vector<std::pair<SimTime, Bytes>> acks;
  std::optional<ConnId> watched;
  transport.set_ack_listener([&](ConnId c, Bytes n, SimTime at) {
    if (!watched) {
      for (Connection *conn : comm.connections()) {
        if (conn->src() == g0) watched = conn->id();
      }
    }
    if (watched && c == *watched) acks.emplace_back(at, n);
  });
  SimTime to_backup = SimTime::max(), to_primary = SimTime::max();
  transport.set_switch_listener([&](ConnId c, Side target, SimTime at) {
    if (!watched || c != *watched) return;
    if (target == Side::kBackup && to_backup == SimTime::max()) to_backup = at;
    if (target == Side::kPrimary && to_backup != SimTime::max() && to_primary == SimTime::max()) to_primary = at;
  });

  net.apply_fault(p0, LinkState::kDown, fault_at);
  net.apply_fault(p0, LinkState::kUp, up_at);

  int iterations = 0;
  bool correct = true;
  std::string failure;
  SimTime abort_at;
  std::function<void()> next = [&] {
    comm.start(CollectiveKind::kAllReduce, nbytes, [&](const CollectiveResult &r) {
      if (!r.completed) {
        failure = r.failure;
        abort_at = loop.now();
        loop.stop();
        return;
      }
      ++iterations;
      correct = correct && r.correct;
      if (loop.now() < horizon) loop.schedule_after(SimTime(), next);
    });
  };
  next();
  loop.run_until(horizon);

  s.completed = failure.empty();
  s.reason = failure;
  s.makespan = s.completed ? horizon : abort_at;
  s.checksum_ok = correct;

  std::string csv = "time_s,bytes_per_s\n";
  const auto nbins = static_cast<size_t>(s.makespan.count() / bin.count());
  std::vector<Bytes> bins(nbins, 0);
  for (const auto &[t, n] : acks) {
    auto i = static_cast<size_t>(t.count() / bin.count());
    if (i < nbins) bins[i] += n;
  }
  for (size_t i = 0; i < nbins; ++i) {
    csv += format_double(static_cast<double>(i) * bin.seconds()) + "," +
           format_double(static_cast<double>(bins[i]) / bin.seconds()) + "\n";
  }
  s.files.push_back({"throughput.csv", csv});

  const double link_rate = 400e9 / 8;
  const SimTime rt = Verbs::retry_timeout(cfg.transport.ib_timeout, cfg.transport.ib_retry_cnt);
  s.metrics["fault_s"] = fault_at.seconds();
  s.metrics["link_up_s"] = up_at.seconds();
  s.metrics["retry_timeout_s"] = rt.seconds();
  s.metrics["link_rate"] = link_rate;
  s.metrics["backup_share"] = link_rate / 2;
  s.metrics["iterations"] = iterations;
  s.metrics["primary_rate"] = rate_between(acks, SimTime::s(1), fault_at);
  s.phases.push_back({"primary", SimTime(), fault_at, s.metrics["primary_rate"]});
  if (!s.completed) {
    s.metrics["abort_s"] = abort_at.seconds();
    return s;
  }
  const SimTime backup_end = std::min(to_primary, horizon);
  s.metrics["switch_to_backup_s"] = to_backup == SimTime::max() ? -1 : to_backup.seconds();
  s.metrics["switch_to_primary_s"] = to_primary == SimTime::max() ? -1 : to_primary.seconds();
  s.metrics["retry_gap_s"] = to_backup == SimTime::max() ? -1 : (to_backup - fault_at).seconds();
  s.metrics["retry_rate"] = rate_between(acks, fault_at + SimTime::ms(1), std::min(to_backup, horizon));
  // Skip the first bin of each later phase: it holds the breakpoint catch-up.
  s.metrics["backup_rate"] = rate_between(acks, to_backup + bin, backup_end);
  s.metrics["restored_rate"] = rate_between(acks, backup_end + bin, horizon);
  s.phases.push_back({"retry", fault_at, std::min(to_backup, horizon), s.metrics["retry_rate"]});
  s.phases.push_back({"backup", std::min(to_backup, horizon), backup_end, s.metrics["backup_rate"]});
  s.phases.push_back({"restored", backup_end, horizon, s.metrics["restored_rate"]});
  return s;
}

}  // namespace detail

namespace {

bool delivered_in_order(const Connection &c, int64_t chunks) {
  const std::vector<int64_t> &d = c.delivered();
  if (static_cast<int64_t>(d.size()) != chunks) return false;
  for (int64_t i = 0; i < chunks; ++i) {
    if (d[static_cast<size_t>(i)] != i) return false;
  }
  return true;
}

bool message_intact(const Connection &c, int64_t chunks) {
  MessageDigest d = c.digest(0);
  return d.sender_done && d.receiver_done && d.sent == d.received && delivered_in_order(c, chunks);
}

}  // namespace

TriggerOutcome run_trigger_case(TriggerCase which, uint64_t seed) {
  std::mt19937_64 rng(seed);
  TransportConfig tc;
  tc.chunk_size = 1 * MiB;
  const Bytes size = std::uniform_int_distribution<Bytes>(1 * MiB, 64 * MiB)(rng);

  Topology topo = dual_rail_pair();
  EventLoop loop;
  loop.trace().set_retain(true);
  Network net(loop, topo);
  Verbs verbs(loop, net);
  Transport transport(verbs);
  transport.set_logging(true);
  NodeId g0 = topo.gpu(HostId(0), 0);
  NodeId g1 = topo.gpu(HostId(1), 0);
  Connection &c = transport.connect(g0, g1, tc);
  const SimTime rt = Verbs::retry_timeout(tc.timeout_exponent, tc.retry_count);
  const SimTime delta = c.delta();

  SimTime send_at;
  switch (which) {
    case TriggerCase::kSenderRetry: {
      SimTime wire = serialization_time(size, 400e9);
      send_at = SimTime();
      SimTime f = SimTime(std::uniform_int_distribution<int64_t>(1000, std::max<int64_t>(1001, wire.count() / 2))(rng));
      net.apply_fault(topo.primary_nic(g0), LinkState::kDown, f);
      break;
    }
    case TriggerCase::kReceiverTimeout: {
      // Sender stays idle well past the receiver's probe and its retry budget.
      send_at = (delta + rt) * 2 + SimTime::s(1);
      SimTime f = SimTime(std::uniform_int_distribution<int64_t>(1000, delta.count() / 2)(rng));
      net.apply_fault(topo.primary_nic(g1), LinkState::kDown, f);
      break;
    }
    case TriggerCase::kInnocentStall: {
      // Sender is blocked upstream past one delta, but well before a second probe.
      send_at = delta + SimTime(std::uniform_int_distribution<int64_t>(1, delta.count() / 2)(rng));
      break;
    }
  }

  int done = 0;
  auto finished = [&] {
    if (++done == 2) loop.stop();
  };
  c.recv_message(transport.register_buffer(g1, size), size, finished);
  MrId src = transport.register_buffer(g0, size);
  loop.schedule(send_at, [&] { c.send_message(src, size, seed, finished); });
  loop.run_until(send_at + SimTime::s(30));

  TriggerOutcome out;
  out.completed = done == 2;
  out.intact = out.completed && message_intact(c, chunk_count(size, tc.chunk_size));
  const std::string sender_qp = "qp" + std::to_string(c.qp(Role::kSender, Side::kPrimary).value);
  for (const std::string &line : loop.trace().lines()) {
    if (line.find(",retry_exceeded," + sender_qp + ",") != std::string::npos) out.sender_retry_exceeded = true;
  }
  SimTime first_probe = SimTime::max();
  for (const TransferEvent &e : transport.events()) {
    if (e.event == "cts_probe") {
      out.cts_probe = true;
      first_probe = std::min(first_probe, e.time);
    }
    if (e.event == "cts_ok") out.cts_ok = true;
    if (e.event == "cts_fail") out.cts_fail = true;
    if (e.event == "switch_to_backup" && !out.switched) {
      out.switched = true;
      out.switch_time = e.time;
    }
  }
  out.probe_before_switch = out.switched && first_probe < out.switch_time;
  return out;
}

FuzzTrial run_fuzz_trial(uint64_t seed) {
  std::mt19937_64 rng(seed);
  FuzzTrial t;
  t.seed = seed;
  t.bytes = std::uniform_int_distribution<Bytes>(1 * KiB, 64 * MiB)(rng);

  TransportConfig tc;
  tc.chunk_size = 1 * MiB;
  tc.timeout_exponent = 10;
  tc.retry_count = 7;
  tc.probe_period = SimTime::ms(5);
  tc.path_wait = SimTime::s(1);

  Topology topo = dual_rail_pair();
  EventLoop loop;
  Network net(loop, topo);
  Verbs verbs(loop, net);
  Transport transport(verbs);
  NodeId g0 = topo.gpu(HostId(0), 0);
  NodeId g1 = topo.gpu(HostId(1), 0);

  // Up to two non-overlapping down intervals per port, all inside the transfer's lifetime.
  const SimTime span = SimTime(serialization_time(t.bytes, 400e9).count() * 3 / 2) + SimTime::us(10);
  struct Interval {
    SimTime from, to;
  };
  const NodeId primary[2] = {topo.primary_nic(g0), topo.primary_nic(g1)};
  const NodeId backup[2] = {topo.backup_nic(g0), topo.backup_nic(g1)};
  std::vector<Interval> primary_down, backup_down;
  for (NodeId port : {primary[0], backup[0], primary[1], backup[1]}) {
    int n = std::uniform_int_distribution<int>(0, 2)(rng);
    std::vector<Interval> iv;
    for (int i = 0; i < n; ++i) {
      SimTime from(std::uniform_int_distribution<int64_t>(0, span.count())(rng));
      SimTime len(std::uniform_int_distribution<int64_t>(100'000, 100'000'000)(rng));
      iv.push_back({from, from + len});
    }
    std::sort(iv.begin(), iv.end(), [](const Interval &a, const Interval &b) { return a.from < b.from; });
    if (iv.size() == 2 && iv[1].from <= iv[0].to) iv.pop_back();
    bool is_primary = port == primary[0] || port == primary[1];
    for (const Interval &i : iv) {
      net.apply_fault(port, LinkState::kDown, i.from);
      net.apply_fault(port, LinkState::kUp, i.to);
      (is_primary ? primary_down : backup_down).push_back(i);
    }
  }
  // Every interval closes with an Up, so both paths end alive.
  t.eligible = true;
  for (const Interval &p : primary_down) {
    for (const Interval &b : backup_down) {
      if (p.from <= b.to && b.from <= p.to) t.double_fault = true;
    }
  }

  Connection &c = transport.connect(g0, g1, tc);
  transport.set_failure_handler([&](ConnId, const std::string &why) {
    t.failure = why;
    loop.stop();
  });
  int done = 0;
  auto finished = [&] {
    if (++done == 2) loop.stop();
  };
  c.recv_message(transport.register_buffer(g1, t.bytes), t.bytes, finished);
  c.send_message(transport.register_buffer(g0, t.bytes), t.bytes, seed, finished);
  loop.run_until(SimTime::s(10));

  const int64_t chunks = chunk_count(t.bytes, tc.chunk_size);
  t.completed = done == 2;
  t.intact = t.completed && message_intact(c, chunks);
  const std::vector<int64_t> &d = c.delivered();
  t.prefix_ok = static_cast<int64_t>(d.size()) <= chunks;
  for (size_t i = 0; i < d.size() && t.prefix_ok; ++i) t.prefix_ok = d[i] == static_cast<int64_t>(i);
  t.switches = c.switch_count();
  if (!t.completed && t.failure.empty()) t.failure = "did not finish by the horizon";
  return t;
}

namespace detail {

RunSummary run_trigger_cases(const RunConfig &cfg, Context &ctx) {
  RunSummary s;
  const int runs = std::max(1, cfg.trials);
  int retry_pass = 0, timeout_pass = 0, stall_pass = 0;
  std::string csv = "case,seed,retry_exceeded,cts_probe,cts_ok,cts_fail,switched,switch_ns,completed,intact\n";
  auto row = [&](const char *name, uint64_t seed, const TriggerOutcome &o) {
    csv += std::string(name) + "," + std::to_string(seed) + "," + std::to_string(o.sender_retry_exceeded) + "," +
           std::to_string(o.cts_probe) + "," + std::to_string(o.cts_ok) + "," + std::to_string(o.cts_fail) + "," +
           std::to_string(o.switched) + "," + std::to_string(o.switch_time.count()) + "," +
           std::to_string(o.completed) + "," + std::to_string(o.intact) + "\n";
  };
  for (int i = 0; i < runs; ++i) {
    const uint64_t seed = cfg.seed * 1000003ULL + static_cast<uint64_t>(i);
    TriggerOutcome a = run_trigger_case(TriggerCase::kSenderRetry, seed);
    TriggerOutcome b = run_trigger_case(TriggerCase::kReceiverTimeout, seed);
    TriggerOutcome c = run_trigger_case(TriggerCase::kInnocentStall, seed);
    row("sender_retry", seed, a);
    row("receiver_timeout", seed, b);
    row("innocent_stall", seed, c);
    // The receiver may already be probing; the switch must still come from the sender side.
    retry_pass += a.sender_retry_exceeded && a.switched && !a.cts_fail && a.intact;
    timeout_pass += !b.sender_retry_exceeded && b.cts_probe && b.cts_fail && b.switched && b.intact;
    stall_pass += c.cts_probe && c.cts_ok && !c.cts_fail && !c.switched && c.intact;
  }
  ctx.trace << "0,trigger_cases,summary," << retry_pass << "/" << timeout_pass << "/" << stall_pass << "\n";
  s.completed = true;
  s.checksum_ok = retry_pass == runs && timeout_pass == runs && stall_pass == runs;
  s.metrics["runs"] = runs;
  s.metrics["sender_retry_pass"] = retry_pass;
  s.metrics["receiver_timeout_pass"] = timeout_pass;
  s.metrics["innocent_stall_pass"] = stall_pass;
  s.files.push_back({"cases.csv", csv});
  return s;
}

RunSummary run_fuzz_failover(const RunConfig &cfg, Context &ctx) {
  RunSummary s;
  const int trials = std::max(1, cfg.trials);
  int eligible = 0, eligible_completed = 0, eligible_intact = 0, completed_intact = 0, completed = 0;
  int ineligible = 0, double_fault = 0, double_fault_intact = 0, prefix_ok = 0, switches = 0;
  std::string csv = "seed,bytes,eligible,double_fault,completed,intact,prefix_ok,switches,failure\n";
  for (int i = 0; i < trials; ++i) {
    FuzzTrial t = run_fuzz_trial(cfg.seed * 1000003ULL + static_cast<uint64_t>(i));
    csv += std::to_string(t.seed) + "," + std::to_string(t.bytes) + "," + std::to_string(t.eligible) + "," +
           std::to_string(t.double_fault) + "," + std::to_string(t.completed) + "," + std::to_string(t.intact) + "," + std::to_string(t.prefix_ok) + "," +
           std::to_string(t.switches) + "," + t.failure + "\n";
    completed += t.completed;
    completed_intact += t.completed && t.intact;
    prefix_ok += t.prefix_ok;
    switches += t.switches;
    if (t.eligible) {
      ++eligible;
      eligible_completed += t.completed;
      eligible_intact += t.intact;
    } else {
      ++ineligible;
    }
    double_fault += t.double_fault;
    double_fault_intact += t.double_fault && t.intact;
  }
  ctx.trace << "0,fuzz_failover,summary," << eligible_intact << "/" << eligible << "\n";
  s.completed = true;
  // Every finished transfer must be exact; no trial may deliver out of order.
  s.checksum_ok = eligible_intact == eligible && completed_intact == completed && prefix_ok == trials;
  if (eligible_intact != eligible) s.reason = "an eligible trial lost or duplicated data";
  s.metrics["trials"] = trials;
  s.metrics["eligible"] = eligible;
  s.metrics["eligible_completed"] = eligible_completed;
  s.metrics["eligible_intact"] = eligible_intact;
  s.metrics["completed"] = completed;
  s.metrics["completed_intact"] = completed_intact;
  s.metrics["prefix_ok"] = prefix_ok;
  s.metrics["ineligible"] = ineligible;
  s.metrics["double_fault"] = double_fault;
  s.metrics["double_fault_intact"] = double_fault_intact;
  s.metrics["total_switches"] = switches;
  s.files.push_back({"trials.csv", csv});
  return s;
}

}  // namespace detail
}  // namespace ccsim
