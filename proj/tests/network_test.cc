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
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ccsim/network.h"
#include "ccsim/topology.h"

namespace ccsim {
namespace {

std::vector<double> allocate(const std::vector<std::vector<int>> &paths, const std::vector<double> &cap) {
  std::vector<std::vector<LinkId>> p;
  for (const auto &path : paths) {
    p.emplace_back();
    for (int l : path) p.back().push_back(LinkId(l));
  }
  return allocate_bandwidth(p, cap);
}

TEST(AllocateBandwidth, SoleFlowGetsLinkCapacity) {
  auto r = allocate({{0}}, {400e9});
  EXPECT_DOUBLE_EQ(r[0], 400e9);
}

TEST(AllocateBandwidth, TwoFlowsSplitEvenly) {
  auto r = allocate({{0}, {0}}, {400e9});
  EXPECT_DOUBLE_EQ(r[0], 200e9);
  EXPECT_DOUBLE_EQ(r[1], 200e9);
}

TEST(AllocateBandwidth, WaterFillingWithRemoteBottleneck) {
  // Hand water-filling: raise all three to 100G, link 1 (100G) saturates and freezes flow 0;
  // the remaining 300G of link 0 is split between flows 1 and 2.
  const double frozen = 100e9;
  const double rest = (400e9 - frozen) / 2;
  auto r = allocate({{0, 1}, {0}, {0}}, {400e9, 100e9});
  EXPECT_NEAR(r[0], frozen, 1);
  EXPECT_NEAR(r[1], rest, 1);
  EXPECT_NEAR(r[2], rest, 1);
}

TEST(AllocateBandwidth, EmptySetAndPathlessFlows) {
  EXPECT_TRUE(allocate({}, {400e9}).empty());
  std::vector<std::vector<LinkId>> paths{{}};
  std::vector<double> cap{1};
  EXPECT_DOUBLE_EQ(allocate_bandwidth(paths, cap, 7.0)[0], 7.0);
}

// Property: the allocation is feasible and every flow has a saturated bottleneck link on
// which no other flow gets more (the max-min characterization).
TEST(AllocateBandwidthProperty, FeasibleAndMaxMinFair) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    int links = std::uniform_int_distribution<int>(1, 6)(rng);
    int flows = std::uniform_int_distribution<int>(1, 10)(rng);
    std::vector<double> cap;
    for (int l = 0; l < links; ++l) cap.push_back(std::uniform_int_distribution<int>(1, 8)(rng) * 50e9);
    std::vector<std::vector<int>> paths;
    for (int f = 0; f < flows; ++f) {
      std::vector<int> path;
      for (int l = 0; l < links; ++l) {
        if (std::bernoulli_distribution(0.4)(rng)) path.push_back(l);
      }
      if (path.empty()) path.push_back(std::uniform_int_distribution<int>(0, links - 1)(rng));
      paths.push_back(path);
    }
    auto rate = allocate(paths, cap);
    std::vector<double> load(links, 0);
    for (int f = 0; f < flows; ++f) {
      for (int l : paths[f]) load[l] += rate[f];
    }
    for (int l = 0; l < links; ++l) EXPECT_LE(load[l], cap[l] * (1 + 1e-9)) << trial;
    for (int f = 0; f < flows; ++f) {
      EXPECT_GT(rate[f], 0);
      bool has_bottleneck = false;
      for (int l : paths[f]) {
        if (load[l] < cap[l] * (1 - 1e-9)) continue;
        bool largest = true;
        for (int g = 0; g < flows; ++g) {
          if (std::count(paths[g].begin(), paths[g].end(), l) && rate[g] > rate[f] * (1 + 1e-9)) largest = false;
        }
        has_bottleneck = has_bottleneck || largest;
      }
      EXPECT_TRUE(has_bottleneck) << "trial " << trial << " flow " << f;
    }
  }
}

struct Pair {
  Topology topo;
  NodeId a, b;
  Pair() {
    ClosSpec spec;
    spec.hosts = 2;
    spec.gpus_per_host = 1;
    spec.nics_per_host = 1;
    spec.leaves = 1;
    spec.spines = 0;
    topo = Topology::rail_clos(spec);
    a = topo.nic(HostId(0), 0);
    b = topo.nic(HostId(1), 0);
  }
};

TEST(Network, FlowCompletesAfterSerialization) {
  Pair p;
  EventLoop loop;
  Network net(loop, p.topo);
  SimTime done;
  net.start_flow(p.topo.route(p.a, p.b)->links, 1 * MiB, [&] { done = loop.now(); });
  loop.run();
  // 1MiB at 400Gb/s = 20971.52ns, rounded up to whole nanoseconds.
  EXPECT_EQ(done, SimTime::ns(20972));
}

TEST(Network, DownDropsProgressAndUpRestarts) {
  Pair p;
  EventLoop loop;
  Network net(loop, p.topo);
  SimTime done;
  net.start_flow(p.topo.route(p.a, p.b)->links, 1 * MiB, [&] { done = loop.now(); });
  net.apply_fault(p.a, LinkState::kDown, SimTime::us(10));
  net.apply_fault(p.a, LinkState::kUp, SimTime::us(30));
  loop.run();
  EXPECT_EQ(done, SimTime::us(30) + SimTime::ns(20972));
}

TEST(Network, DownWithoutFlowsOnlyChangesState) {
  Pair p;
  EventLoop loop;
  Network net(loop, p.topo);
  net.set_port_state(p.b, LinkState::kDown);
  EXPECT_EQ(net.port_state(p.b), LinkState::kDown);
  EXPECT_EQ(net.active_flow_count(), 0u);
  net.set_port_state(p.b, LinkState::kUp);
  EXPECT_EQ(net.port_state(p.b), LinkState::kUp);
}

TEST(Network, UnknownPortRejected) {
  Pair p;
  EventLoop loop;
  Network net(loop, p.topo);
  try {
    net.apply_fault(p.topo.gpu(HostId(0), 0), LinkState::kDown, SimTime::s(1));
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownPort);
  }
}

TEST(Network, CompetingFlowHalvesRate) {
  Pair p;
  EventLoop loop;
  Network net(loop, p.topo);
  auto path = p.topo.route(p.a, p.b)->links;
  FlowId f1 = net.start_flow(path, 1 * GiB, nullptr);
  loop.run_until(SimTime::ns(1));
  EXPECT_DOUBLE_EQ(net.flow_rate(f1), 400e9);
  net.start_flow(path, 1 * GiB, nullptr);
  loop.run_until(SimTime::ns(2));
  EXPECT_DOUBLE_EQ(net.flow_rate(f1), 200e9);
}

TEST(Topology, RailOptimizedHops) {
  ClosSpec spec;
  spec.hosts = 2;
  spec.gpus_per_host = 2;
  spec.nics_per_host = 2;
  spec.leaves = 2;
  spec.spines = 1;
  Topology t = Topology::rail_clos(spec);
  EXPECT_TRUE(t.validate().empty());
  EXPECT_EQ(t.gpu_route(t.gpu(HostId(0), 1), t.gpu(HostId(1), 1))->hop_count, 1);
  EXPECT_EQ(t.gpu_route(t.gpu(HostId(0), 1), t.gpu(HostId(1), 0))->hop_count, 3);
  EXPECT_EQ(t.gpu_route(t.gpu(HostId(0), 0), t.gpu(HostId(0), 1))->hop_count, 0);
  EXPECT_EQ(t.primary_nic(t.gpu(HostId(0), 1)), t.nic(HostId(0), 1));
  EXPECT_EQ(t.backup_nic(t.gpu(HostId(0), 1)), t.nic(HostId(0), 0));
}

}  // namespace
}  // namespace ccsim
