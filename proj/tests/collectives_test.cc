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

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "ccsim/collectives.h"
#include "ccsim/network.h"

namespace ccsim {
namespace {

Topology clos(int hosts, int gpus, int leaves, int spines = 1) {
  ClosSpec spec;
  spec.hosts = hosts;
  spec.gpus_per_host = gpus;
  spec.nics_per_host = gpus;
  spec.leaves = leaves;
  spec.spines = leaves > 1 ? spines : 0;
  return Topology::rail_clos(spec);
}

std::vector<NodeId> all_gpus(const Topology &t) {
  std::vector<NodeId> out;
  for (const Host &h : t.hosts()) out.insert(out.end(), h.gpus.begin(), h.gpus.end());
  return out;
}

const RingEdge *edge_from(const RingChannel &ring, const Topology &t, const std::string &from) {
  for (const RingEdge &e : ring.edges) {
    if (t.node(e.from).name == from) return &e;
  }
  return nullptr;
}

TEST(Ring, TwoByTwoHopCounts) {
  Topology t = clos(2, 2, 2);
  auto ranks = all_gpus(t);
  RingChannel def = build_ring(ranks, t, RingMode::kDefault);
  const RingEdge *e = edge_from(def, t, "h0.gpu1");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(t.node(e->to).name, "h1.gpu0");
  EXPECT_EQ(e->hop_count, 3);
  RingChannel aware = build_ring(ranks, t, RingMode::kTopologyAware);
  e = edge_from(aware, t, "h0.gpu1");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(t.node(e->to).name, "h1.gpu1");
  EXPECT_EQ(e->hop_count, 1);
}

TEST(Ring, SingleServerUsesOnlyNvlink) {
  Topology t = clos(1, 8, 1);
  RingChannel ring = build_ring(all_gpus(t), t, RingMode::kTopologyAware);
  EXPECT_TRUE(ring.inter_host_edges(t).empty());
  for (const RingEdge &e : ring.edges) EXPECT_EQ(e.hop_count, 0);
}

// Property: every ring is a Hamiltonian cycle whose hop counts agree with routing, and
// topology-aware rings keep inter-server edges on one rail.
TEST(RingProperty, HamiltonianAndRailAligned) {
  for (int hosts : {2, 3, 4, 5}) {
    for (int gpus : {2, 4, 8}) {
      Topology t = clos(hosts, gpus, 2, 2);
      auto ranks = all_gpus(t);
      for (RingMode mode : {RingMode::kDefault, RingMode::kTopologyAware}) {
        RingChannel ring = build_ring(ranks, t, mode);
        ASSERT_EQ(ring.order.size(), ranks.size());
        EXPECT_EQ(std::set<NodeId>(ring.order.begin(), ring.order.end()).size(), ranks.size());
        ASSERT_EQ(ring.edges.size(), ranks.size());
        for (size_t i = 0; i < ring.edges.size(); ++i) {
          EXPECT_EQ(ring.edges[i].from, ring.order[i]);
          EXPECT_EQ(ring.edges[i].to, ring.order[(i + 1) % ring.order.size()]);
          EXPECT_EQ(ring.edges[i].hop_count, t.gpu_route(ring.edges[i].from, ring.edges[i].to)->hop_count);
        }
        if (mode == RingMode::kTopologyAware && hosts % 2 == 0) {
          for (const RingEdge &e : ring.inter_host_edges(t)) {
            EXPECT_EQ(t.node(e.from).index, t.node(e.to).index);
            EXPECT_EQ(e.hop_count, 1);
          }
        }
      }
      auto def = build_ring(ranks, t, RingMode::kDefault).inter_host_edges(t);
      EXPECT_TRUE(std::any_of(def.begin(), def.end(), [](const RingEdge &e) { return e.hop_count == 3; }));
    }
  }
}

TEST(Hostfile, GroupsByFirstAppearance) {
  std::vector<HostfileEntry> in{{"h1", "T2"}, {"h2", "T1"}, {"h3", "T2"}, {"h4", "T1"}};
  std::vector<HostfileEntry> want{{"h1", "T2"}, {"h3", "T2"}, {"h2", "T1"}, {"h4", "T1"}};
  EXPECT_EQ(sort_hostfile(in), want);
  EXPECT_EQ(sort_hostfile(want), want);
  std::vector<HostfileEntry> same{{"a", "T"}, {"b", "T"}, {"c", "T"}};
  EXPECT_EQ(sort_hostfile(same), same);
}

// Property over 10^4 random hostfiles: permutation, same-ToR adjacency, stable order
// within a ToR, ToR blocks in first-appearance order, idempotence.
TEST(HostfileProperty, RandomHostfiles) {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 10000; ++trial) {
    int n = std::uniform_int_distribution<int>(0, 40)(rng);
    int tors = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<HostfileEntry> in;
    for (int i = 0; i < n; ++i) {
      in.push_back({"h" + std::to_string(i), "T" + std::to_string(std::uniform_int_distribution<int>(0, tors - 1)(rng))});
    }
    auto out = sort_hostfile(in);
    auto key = [](const HostfileEntry &e) { return e.host + "@" + e.tor; };
    std::multiset<std::string> a, b;
    for (const auto &e : in) a.insert(key(e));
    for (const auto &e : out) b.insert(key(e));
    ASSERT_EQ(a, b) << trial;
    std::vector<std::string> first_seen;
    for (const auto &e : in) {
      if (std::find(first_seen.begin(), first_seen.end(), e.tor) == first_seen.end()) first_seen.push_back(e.tor);
    }
    std::vector<std::string> blocks;
    for (size_t i = 0; i < out.size(); ++i) {
      if (i == 0 || out[i].tor != out[i - 1].tor) blocks.push_back(out[i].tor);
    }
    ASSERT_EQ(blocks, first_seen) << trial;  // adjacency and block order in one check
    std::map<std::string, std::vector<std::string>> in_order, out_order;
    for (const auto &e : in) in_order[e.tor].push_back(e.host);
    for (const auto &e : out) out_order[e.tor].push_back(e.host);
    ASSERT_EQ(in_order, out_order) << trial;
    ASSERT_EQ(sort_hostfile(out), out) << trial;
  }
}

struct Cluster {
  Topology topo;
  EventLoop loop;
  std::unique_ptr<Network> net;
  std::unique_ptr<Verbs> verbs;
  std::unique_ptr<Transport> transport;
  std::unique_ptr<Communicator> comm;

  Cluster(Topology t, CollectiveConfig cfg, std::vector<NodeId> ranks = {}) : topo(std::move(t)) {
    net = std::make_unique<Network>(loop, topo);
    verbs = std::make_unique<Verbs>(loop, *net);
    transport = std::make_unique<Transport>(*verbs);
    if (ranks.empty()) ranks = all_gpus(topo);
    comm = std::make_unique<Communicator>(*transport, ranks, cfg);
  }
};

TEST(Collectives, AllReduceTwoRanksMovesOneGigabyteEach) {
  Cluster c(clos(2, 1, 1), CollectiveConfig{});
  CollectiveResult r = c.comm->run(CollectiveKind::kAllReduce, 1 * GiB);
  ASSERT_TRUE(r.completed);
  EXPECT_TRUE(r.correct);
  for (const RankResult &rr : r.ranks) {
    EXPECT_EQ(rr.sent, 2 * (2 - 1) * GiB / 2);
    EXPECT_EQ(rr.received, 1 * GiB);
  }
}

TEST(Collectives, AllReduceFourRanksMatchesRingClosedForm) {
  const Bytes nbytes = 256 * MiB;
  const int n = 4;
  Cluster c(clos(n, 1, 1), CollectiveConfig{});
  CollectiveResult r = c.comm->run(CollectiveKind::kAllReduce, nbytes);
  ASSERT_TRUE(r.completed && r.correct);
  for (const RankResult &rr : r.ranks) EXPECT_EQ(rr.sent, 2 * (n - 1) * nbytes / n);
  const double oracle_s = 2.0 * (n - 1) / n * static_cast<double>(nbytes) / (400e9 / 8);
  EXPECT_NEAR((r.end - r.start).seconds() / oracle_s, 1.0, 0.05);
}

TEST(Collectives, AllGatherReceivesOthersShares) {
  const Bytes s = 8 * MiB;
  Cluster c(clos(4, 1, 1), CollectiveConfig{});
  CollectiveResult r = c.comm->run(CollectiveKind::kAllGather, 4 * s);
  ASSERT_TRUE(r.completed && r.correct);
  for (const RankResult &rr : r.ranks) EXPECT_EQ(rr.received, 3 * s);
}

TEST(Collectives, ReduceScatterPlusAllGatherEqualsAllReduceTraffic) {
  const Bytes nbytes = 64 * MiB;
  std::vector<Bytes> composed(4, 0), direct(4, 0);
  {
    Cluster c(clos(4, 1, 1), CollectiveConfig{});
    for (CollectiveKind k : {CollectiveKind::kReduceScatter, CollectiveKind::kAllGather}) {
      CollectiveResult r = c.comm->run(k, nbytes);
      ASSERT_TRUE(r.completed && r.correct);
      for (int i = 0; i < 4; ++i) composed[i] += r.ranks[i].sent;
    }
  }
  Cluster c(clos(4, 1, 1), CollectiveConfig{});
  CollectiveResult r = c.comm->run(CollectiveKind::kAllReduce, nbytes);
  for (int i = 0; i < 4; ++i) direct[i] = r.ranks[i].sent;
  EXPECT_EQ(composed, direct);
}

TEST(Collectives, BroadcastRelaysAlongRing) {
  const Bytes nbytes = 16 * MiB;
  Cluster c(clos(3, 1, 1), CollectiveConfig{});
  CollectiveResult r = c.comm->run(CollectiveKind::kBroadcast, nbytes, 0);
  ASSERT_TRUE(r.completed && r.correct);
  std::vector<Bytes> sent;
  for (const RankResult &rr : r.ranks) sent.push_back(rr.sent);
  std::sort(sent.begin(), sent.end());
  EXPECT_EQ(sent, (std::vector<Bytes>{0, nbytes, nbytes}));
  EXPECT_EQ(r.ranks[0].sent, nbytes);
  EXPECT_EQ(r.ranks[0].received, 0);
}

TEST(Collectives, AllToAllEdgeCases) {
  Cluster c(clos(2, 1, 1), CollectiveConfig{});
  CollectiveResult empty = c.comm->run(CollectiveKind::kAllToAll, 0);
  EXPECT_TRUE(empty.completed);
  EXPECT_EQ(empty.end, empty.start);
  CollectiveResult two = c.comm->run(CollectiveKind::kAllToAll, 4 * MiB);
  ASSERT_TRUE(two.completed && two.correct);
  for (const RankResult &rr : two.ranks) {
    EXPECT_EQ(rr.sent, 4 * MiB);
    EXPECT_EQ(rr.received, 4 * MiB);
  }
}

TEST(Collectives, GroupTooSmall) {
  Cluster single(clos(1, 2, 1), CollectiveConfig{}, {NodeId(0)});
  try {
    single.comm->run(CollectiveKind::kAllReduce, 1 * MiB);
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kGroupTooSmall);
  }
}

TEST(Collectives, FailoverKeepsAllReduceAlive) {
  for (bool failover : {true, false}) {
    CollectiveConfig cfg;
    cfg.transport.timeout_exponent = 10;
    cfg.transport.failover = failover;
    Topology t = clos(2, 2, 2);
    NodeId port = t.nic(HostId(0), 0);
    Cluster c(std::move(t), cfg, {});
    c.net->apply_fault(port, LinkState::kDown, SimTime::us(200));
    CollectiveResult r = c.comm->run(CollectiveKind::kAllReduce, 256 * MiB);
    if (failover) {
      EXPECT_TRUE(r.completed && r.correct);
    } else {
      EXPECT_FALSE(r.completed);
      EXPECT_GE(r.end, SimTime::us(200) + Verbs::retry_timeout(10, 7));
    }
  }
}

// Property: topology-aware rings never put more bytes on spine links than default rings.
TEST(CollectivesProperty, TopologyAwareSavesSpineTraffic) {
  for (int hosts : {2, 4}) {
    for (int gpus : {2, 4}) {
      Bytes spine[2];
      for (RingMode mode : {RingMode::kDefault, RingMode::kTopologyAware}) {
        CollectiveConfig cfg;
        cfg.ring_mode = mode;
        Cluster c(clos(hosts, gpus, 2, 2), cfg);
        CollectiveResult r = c.comm->run(CollectiveKind::kAllReduce, 32 * MiB);
        ASSERT_TRUE(r.completed && r.correct);
        spine[mode == RingMode::kTopologyAware] = r.spine_bytes;
      }
      EXPECT_LT(spine[1], spine[0]) << hosts << "x" << gpus;
    }
  }
}

}  // namespace
}  // namespace ccsim
