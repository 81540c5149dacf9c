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

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ccsim/network.h"
#include "ccsim/scenarios.h"
#include "ccsim/transport.h"
#include "ccsim/verbs.h"

namespace ccsim {
namespace {

// Two hosts, two GPUs and two NICs each, one rail per leaf.
struct Rig {
  Topology topo;
  EventLoop loop;
  std::unique_ptr<Network> net;
  std::unique_ptr<Verbs> verbs;
  std::unique_ptr<Transport> transport;
  NodeId g0, g1;

  Rig() {
    ClosSpec spec;
    spec.hosts = 2;
    spec.gpus_per_host = 2;
    spec.nics_per_host = 2;
    spec.leaves = 2;
    spec.spines = 1;
    topo = Topology::rail_clos(spec);
    net = std::make_unique<Network>(loop, topo);
    verbs = std::make_unique<Verbs>(loop, *net);
    transport = std::make_unique<Transport>(*verbs);
    g0 = topo.gpu(HostId(0), 0);
    g1 = topo.gpu(HostId(1), 0);
  }

  // Sends one message and runs until both sides finish or `horizon`.
  bool transfer(Connection &c, Bytes bytes, SimTime horizon = SimTime::s(60)) {
    int done = 0;
    auto fin = [&] {
      if (++done == 2) loop.stop();
    };
    c.recv_message(transport->register_buffer(g1, bytes), bytes, fin);
    c.send_message(transport->register_buffer(g0, bytes), bytes, 99, fin);
    loop.run_until(horizon);
    return done == 2;
  }
};

bool intact(const Connection &c, int64_t chunks) {
  MessageDigest d = c.digest(0);
  if (!(d.sender_done && d.receiver_done && d.sent == d.received)) return false;
  if (static_cast<int64_t>(c.delivered().size()) != chunks) return false;
  for (int64_t i = 0; i < chunks; ++i) {
    if (c.delivered()[static_cast<size_t>(i)] != i) return false;
  }
  return true;
}

TEST(Breakpoint, RetreatMatchesWorkedExample) {
  ReceiverPointers r{10, 8, 6};
  SenderPointers s{10, 9, 5};
  retreat_to_breakpoint(r, s);
  EXPECT_EQ(r.received, 6);
  EXPECT_EQ(r.done, 6);
  EXPECT_EQ(s.acked, 6);
  EXPECT_EQ(s.transmitted, 6);
  EXPECT_EQ(s.posted, 6);
}

TEST(Breakpoint, CompletedTransferHasNothingToResend) {
  ReceiverPointers r{8, 8, 8};
  SenderPointers s{8, 8, 7};
  retreat_to_breakpoint(r, s);
  EXPECT_EQ(s.posted, 8);
  EXPECT_EQ(s.acked, 8);
}

TEST(Transport, ChunkArithmetic) {
  EXPECT_EQ(chunk_count(1 * GiB, 4 * MiB), 256);
  EXPECT_EQ(chunk_count(4 * MiB + 1, 4 * MiB), 2);
  EXPECT_EQ(chunk_count(1, 4 * MiB), 1);
}

TEST(Transport, GigabyteCompletesWithAllPointersAtEnd) {
  Rig rig;
  TransportConfig tc;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, tc);
  ASSERT_TRUE(rig.transfer(c, 1 * GiB));
  TransferState s = c.state();
  EXPECT_TRUE(s.check().empty());
  EXPECT_EQ(s.sender.posted, 256);
  EXPECT_EQ(s.sender.transmitted, 256);
  EXPECT_EQ(s.sender.acked, 256);
  EXPECT_EQ(s.receiver.done, 256);
  EXPECT_TRUE(intact(c, 256));
}

TEST(Transport, ZeroLengthRejected) {
  Rig rig;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, TransportConfig{});
  try {
    c.send_message(rig.transport->register_buffer(rig.g0, 1), 0, 1);
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroLengthMessage);
  }
}

TEST(Transport, ZeroCopyBeatsStagedCopyByClosedForm) {
  // Staged chunk cycle = copy + wire with copy a quarter of it; zero-copy cycle = wire.
  // The steady-state ratio is wire / (copy + wire) = 0.75, so zero-copy time <= 0.8 x staged.
  TransportConfig tc;
  const SimTime wire = serialization_time(tc.chunk_size, 400e9);
  tc.costs.buffer_copy.fixed = SimTime(wire.count() / 3);
  SimTime t[2];
  for (PipelineMode mode : {PipelineMode::kStagedCopy, PipelineMode::kZeroCopy}) {
    Rig rig;
    tc.mode = mode;
    Connection &c = rig.transport->connect(rig.g0, rig.g1, tc);
    ASSERT_TRUE(rig.transfer(c, 1 * GiB));
    t[mode == PipelineMode::kZeroCopy] = rig.loop.now();
  }
  double ratio = static_cast<double>(t[1].count()) / static_cast<double>(t[0].count());
  EXPECT_LE(ratio, 0.8);
  EXPECT_NEAR(ratio, 0.75, 0.02);
}

TEST(Transport, SenderWcContract) {
  Rig rig;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, TransportConfig{});
  struct Capture : VerbsObserver {
    QpId qp;
    std::vector<uint64_t> ids;
    void on_post(QpId q, const WorkRequest &wr) override {
      if (q == qp && wr.direction == WrDirection::kSend) ids.push_back(wr.wr_id);
    }
  } cap;
  cap.qp = c.qp(Role::kSender, Side::kPrimary);
  rig.verbs->add_observer(&cap);
  ASSERT_TRUE(rig.transfer(c, 8 * MiB));
  ASSERT_EQ(cap.ids.size(), 2u);
  WorkCompletion dup;
  dup.wr_id = cap.ids[1];
  dup.qp = cap.qp;
  try {
    c.on_sender_wc(dup);
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownWr);
  }
  WorkCompletion bad = dup;
  bad.status = WcStatus::kRetryExceeded;
  EXPECT_EQ(c.on_sender_wc(bad), Action::kTriggerSwitch);
}

TEST(Transport, ReceiverTimeoutBelowDeltaDoesNothing) {
  Rig rig;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, TransportConfig{});
  c.recv_message(rig.transport->register_buffer(rig.g1, 1 * MiB), 1 * MiB);
  EXPECT_EQ(c.delta(), Verbs::retry_timeout(18, 7) + rig.verbs->path_delay(c.qp(Role::kReceiver, Side::kPrimary)) * 2);
  rig.loop.run_until(c.delta() - SimTime::ns(1));
  EXPECT_EQ(c.check_receiver_timeout(rig.loop.now()), Action::kNone);
  EXPECT_TRUE(rig.transport->events().empty() || rig.transport->events().back().event != "cts_probe");
}

TEST(Transport, TriggerCasesDiscriminate) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    TriggerOutcome a = run_trigger_case(TriggerCase::kSenderRetry, seed);
    EXPECT_TRUE(a.sender_retry_exceeded && a.switched && !a.cts_fail && a.intact) << seed;
    TriggerOutcome b = run_trigger_case(TriggerCase::kReceiverTimeout, seed);
    EXPECT_TRUE(!b.sender_retry_exceeded && b.cts_probe && b.cts_fail && b.switched && b.intact) << seed;
    TriggerOutcome c = run_trigger_case(TriggerCase::kInnocentStall, seed);
    EXPECT_TRUE(c.cts_probe && c.cts_ok && !c.cts_fail && !c.switched && c.intact) << seed;
  }
}

TEST(Transport, ProbeReturnsToPrimaryWithinOnePeriod) {
  Rig rig;
  TransportConfig tc;
  tc.timeout_exponent = 10;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, tc);
  std::vector<std::pair<Side, SimTime>> switches;
  rig.transport->set_switch_listener([&](ConnId, Side s, SimTime at) { switches.emplace_back(s, at); });
  NodeId port = rig.topo.primary_nic(rig.g0);
  rig.net->apply_fault(port, LinkState::kDown, SimTime::us(100));
  rig.net->apply_fault(port, LinkState::kUp, SimTime::s(19));
  ASSERT_TRUE(rig.transfer(c, 256 * MiB));
  EXPECT_TRUE(intact(c, 64));
  rig.loop.run_until(SimTime::s(20));
  ASSERT_EQ(switches.size(), 2u);
  EXPECT_EQ(switches[0].first, Side::kBackup);
  EXPECT_EQ(switches[1].first, Side::kPrimary);
  EXPECT_GT(switches[1].second, SimTime::s(19));
  EXPECT_LE(switches[1].second, SimTime::ms(19500));
}

TEST(Transport, NeverRestoredStaysOnBackup) {
  Rig rig;
  TransportConfig tc;
  tc.timeout_exponent = 10;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, tc);
  rig.net->apply_fault(rig.topo.primary_nic(rig.g1), LinkState::kDown, SimTime::us(50));
  ASSERT_TRUE(rig.transfer(c, 64 * MiB));
  rig.loop.run_until(rig.loop.now() + SimTime::s(2));
  EXPECT_EQ(c.switch_count(), 1);
  EXPECT_EQ(c.receiver_active(), Side::kBackup);
  EXPECT_EQ(c.sender_active(), Side::kBackup);
  EXPECT_TRUE(intact(c, 16));
}

TEST(Transport, FailoverDisabledFailsConnection) {
  Rig rig;
  TransportConfig tc;
  tc.timeout_exponent = 10;
  tc.failover = false;
  Connection &c = rig.transport->connect(rig.g0, rig.g1, tc);
  std::string why;
  rig.transport->set_failure_handler([&](ConnId, const std::string &w) { why = w; });
  rig.net->apply_fault(rig.topo.primary_nic(rig.g0), LinkState::kDown, SimTime::us(50));
  EXPECT_FALSE(rig.transfer(c, 64 * MiB, SimTime::s(1)));
  EXPECT_EQ(c.status(), ConnStatus::kFailed);
  EXPECT_FALSE(why.empty());
}

TEST(Transport, IntraHostConnectionHasNoBackup) {
  Rig rig;
  Connection &c = rig.transport->connect(rig.g0, rig.topo.gpu(HostId(0), 1), TransportConfig{});
  EXPECT_FALSE(c.has_backup());
}

// Property: under random faults the pointer invariants hold at every sampled instant and
// every finished transfer is exact.
TEST(TransportProperty, PointersStayOrderedUnderFaults) {
  for (uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    Rig rig;
    TransportConfig tc;
    tc.chunk_size = 1 * MiB;
    tc.timeout_exponent = 8;
    tc.probe_period = SimTime::ms(2);
    tc.path_wait = SimTime::s(1);
    Connection &c = rig.transport->connect(rig.g0, rig.g1, tc);
    const Bytes bytes = std::uniform_int_distribution<Bytes>(1 * MiB, 48 * MiB)(rng);
    for (int k = 0; k < 3; ++k) {
      NodeId port = rig.topo.nic(HostId(static_cast<int>(rng() % 2)), static_cast<int>(rng() % 2));
      SimTime from(std::uniform_int_distribution<int64_t>(0, 1'000'000)(rng));
      rig.net->apply_fault(port, LinkState::kDown, from + SimTime::ns(k));
      rig.net->apply_fault(port, LinkState::kUp, from + SimTime::ns(k) + SimTime::ms(5));
    }
    std::vector<std::string> problems;
    std::function<void()> sample = [&] {
      for (const std::string &p : c.state().check()) problems.push_back(p);
      if (rig.loop.now() < SimTime::ms(200)) rig.loop.schedule_after(SimTime::us(3), sample);
    };
    rig.loop.schedule(SimTime(), sample);
    ASSERT_TRUE(rig.transfer(c, bytes, SimTime::s(5))) << seed << " " << c.failure();
    EXPECT_TRUE(problems.empty()) << seed << ": " << problems.front();
    EXPECT_TRUE(intact(c, chunk_count(bytes, tc.chunk_size))) << seed;
  }
}

}  // namespace
}  // namespace ccsim
