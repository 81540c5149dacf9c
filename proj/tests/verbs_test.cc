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

#include <vector>

#include <gtest/gtest.h>

#include "ccsim/network.h"
#include "ccsim/verbs.h"

namespace ccsim {
namespace {

// Two hosts on one leaf: NIC -> leaf -> NIC, 1us per link.
struct Rig {
  Topology topo;
  EventLoop loop;
  std::unique_ptr<Network> net;
  std::unique_ptr<Verbs> verbs;
  CqId scq, rcq;
  QpId sqp, rqp;
  MrId src, dst;

  explicit Rig(int exponent = 18, int retries = 7) {
    ClosSpec spec;
    spec.hosts = 2;
    spec.gpus_per_host = 1;
    spec.nics_per_host = 1;
    spec.leaves = 1;
    spec.spines = 0;
    spec.link_delay = SimTime::us(1);
    topo = Topology::rail_clos(spec);
    net = std::make_unique<Network>(loop, topo);
    verbs = std::make_unique<Verbs>(loop, *net);
    scq = verbs->create_cq();
    rcq = verbs->create_cq();
    NodeId a = topo.nic(HostId(0), 0), b = topo.nic(HostId(1), 0);
    sqp = verbs->create_qp({a, b, QpRole::kPrimary, scq, exponent, retries});
    rqp = verbs->create_qp({b, a, QpRole::kPrimary, rcq, exponent, retries});
    verbs->connect(sqp, rqp);
    src = verbs->register_region(topo.gpu(HostId(0), 0), 64 * MiB);
    dst = verbs->register_region(topo.gpu(HostId(1), 0), 64 * MiB);
  }

  WorkRequest send(Bytes len, uint64_t imm = 0) {
    WorkRequest wr;
    wr.wr_id = verbs->next_wr_id();
    wr.region = src;
    wr.length = len;
    wr.imm = imm;
    verbs->post_send(sqp, wr);
    return wr;
  }
  WorkRequest recv(Bytes len) {
    WorkRequest wr;
    wr.wr_id = verbs->next_wr_id();
    wr.direction = WrDirection::kRecv;
    wr.region = dst;
    wr.length = len;
    verbs->post_recv(rqp, wr);
    return wr;
  }
};

TEST(RetryTimeout, Formula) {
  // (4.096us * 2^e) * (r + 1), in nanoseconds.
  auto oracle = [](int e, int r) { return SimTime(4096LL * (1LL << e) * (r + 1)); };
  EXPECT_EQ(Verbs::retry_timeout(18, 7), oracle(18, 7));
  EXPECT_EQ(Verbs::retry_timeout(18, 7), SimTime::ns(8'589'934'592));
  EXPECT_EQ(Verbs::retry_timeout(0, 0), SimTime::ns(4096));
  EXPECT_EQ(Verbs::retry_timeout(18, 0), SimTime::ns(1'073'741'824));
  Rig rig(14, 3);
  EXPECT_EQ(rig.verbs->retry_timeout(rig.sqp), oracle(14, 3));
}

TEST(Verbs, SendCompletionIncludesRoundTrip) {
  Rig rig;
  rig.recv(4 * MiB);
  WorkRequest wr = rig.send(4 * MiB);
  rig.loop.run();
  auto wcs = rig.verbs->poll_cq(rig.scq, 8);
  ASSERT_EQ(wcs.size(), 1u);
  EXPECT_EQ(wcs[0].status, WcStatus::kSuccess);
  EXPECT_EQ(wcs[0].wr_id, wr.wr_id);
  // 4MiB on 400Gb/s plus one path delay out and one back (2us each way).
  const double oracle_ns = 4.0 * 1048576 * 8 / 400e9 * 1e9 + 2 * 2000;
  EXPECT_NEAR(static_cast<double>((wcs[0].completion_time - wcs[0].post_time).count()), oracle_ns, 2.0);
  EXPECT_NEAR(oracle_ns / 1000, 87.9, 0.05);
}

TEST(Verbs, ReceivesMatchInFifoOrder) {
  Rig rig;
  WorkRequest r1 = rig.recv(1 * MiB);
  WorkRequest r2 = rig.recv(1 * MiB);
  rig.send(1 * MiB, 11);
  rig.send(1 * MiB, 22);
  rig.loop.run();
  auto wcs = rig.verbs->poll_cq(rig.rcq, 8);
  ASSERT_EQ(wcs.size(), 2u);
  EXPECT_EQ(wcs[0].wr_id, r1.wr_id);
  EXPECT_EQ(wcs[0].imm, 11u);
  EXPECT_EQ(wcs[1].wr_id, r2.wr_id);
  EXPECT_EQ(wcs[1].imm, 22u);
}

TEST(Verbs, PollReturnsAtMostMaxInOrder) {
  Rig rig;
  for (int i = 0; i < 3; ++i) rig.recv(1 * KiB);
  for (int i = 0; i < 3; ++i) rig.send(1 * KiB, i);
  rig.loop.run();
  auto first = rig.verbs->poll_cq(rig.rcq, 2);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].imm, 0u);
  EXPECT_EQ(first[1].imm, 1u);
  EXPECT_EQ(rig.verbs->poll_cq(rig.rcq, 2).size(), 1u);
  EXPECT_TRUE(rig.verbs->poll_cq(rig.rcq, 2).empty());
}

TEST(Verbs, DeadLinkYieldsRetryExceededAfterBudget) {
  Rig rig(2, 1);
  rig.recv(1 * MiB);
  rig.net->set_port_state(rig.topo.nic(HostId(0), 0), LinkState::kDown);
  WorkRequest wr = rig.send(1 * MiB);
  rig.loop.run_until(Verbs::retry_timeout(2, 1) - SimTime::ns(1));
  EXPECT_EQ(rig.verbs->cq_depth(rig.scq), 0u);
  rig.loop.run();
  auto wcs = rig.verbs->poll_cq(rig.scq, 8);
  ASSERT_EQ(wcs.size(), 1u);
  EXPECT_EQ(wcs[0].status, WcStatus::kRetryExceeded);
  EXPECT_EQ(wcs[0].wr_id, wr.wr_id);
  EXPECT_EQ(wcs[0].completion_time, Verbs::retry_timeout(2, 1));
  EXPECT_EQ(rig.verbs->state(rig.sqp), QpState::kError);
}

TEST(Verbs, PostOnErrorQpThrows) {
  Rig rig;
  rig.verbs->to_error(rig.sqp);
  try {
    rig.send(1 * KiB);
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kQpInErrorState);
  }
}

TEST(Verbs, UnregisteredRegionThrows) {
  Rig rig;
  rig.verbs->deregister_region(rig.src);
  try {
    rig.send(1 * KiB);
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnregisteredRegion);
  }
}

TEST(Verbs, FlushProducesFlushedCompletions) {
  Rig rig;
  WorkRequest r = rig.recv(1 * KiB);
  rig.verbs->to_error(rig.rqp);
  rig.loop.run();
  auto wcs = rig.verbs->poll_cq(rig.rcq, 8);
  ASSERT_EQ(wcs.size(), 1u);
  EXPECT_EQ(wcs[0].status, WcStatus::kFlushed);
  EXPECT_EQ(wcs[0].wr_id, r.wr_id);
  rig.verbs->reset(rig.rqp);
  EXPECT_EQ(rig.verbs->state(rig.rqp), QpState::kConnected);
}

TEST(Verbs, ControlMessageArrivesOrIsLost) {
  Rig rig;
  SimTime arrived = SimTime::max();
  bool lost = false;
  rig.verbs->send_control(rig.sqp, [&] { arrived = rig.loop.now(); }, [&] { lost = true; });
  rig.loop.run();
  EXPECT_EQ(arrived, SimTime::us(2));
  EXPECT_FALSE(lost);
  rig.net->set_port_state(rig.topo.nic(HostId(1), 0), LinkState::kDown);
  rig.verbs->send_control(rig.sqp, [&] { arrived = SimTime(); }, [&] { lost = true; });
  EXPECT_TRUE(lost);
  rig.loop.run();
  EXPECT_EQ(arrived, SimTime::us(2));
}

}  // namespace
}  // namespace ccsim
