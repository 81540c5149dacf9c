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

#ifndef CCSIM_COLLECTIVES_H_
#define CCSIM_COLLECTIVES_H_

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/topology.h"
#include "ccsim/transport.h"

namespace ccsim {

enum class RingMode { kDefault, kTopologyAware };
/// Which servers get their GPU order reversed in TopologyAware rings.
enum class FlipPolicy { kOddHosts, kEvenHosts };
enum class CollectiveKind { kAllReduce, kAllGather, kReduceScatter, kBroadcast, kSendRecv, kAllToAll };

const char *to_string(RingMode m);
const char *to_string(CollectiveKind k);

struct RingEdge {
  NodeId from;
  NodeId to;
  int hop_count = 0;
};

struct RingChannel {
  std::vector<NodeId> order;  // cyclic
  std::vector<RingEdge> edges;

  /// Edges between different hosts.
  std::vector<RingEdge> inter_host_edges(const Topology &topo) const;
};

/// Ring over GPU nodes. Hosts keep their first-appearance order; GPUs of a host are
/// visited in index order, reversed on flipped hosts in TopologyAware mode.
/// Throws Error(kInfeasibleRing) when an edge has no route.
RingChannel build_ring(std::span<const NodeId> ranks, const Topology &topo, RingMode mode,
                       FlipPolicy flip = FlipPolicy::kOddHosts);

struct HostfileEntry {
  std::string host;
  std::string tor;

  bool operator==(const HostfileEntry &) const = default;
};

/// Stable grouping of hosts by ToR, ToR blocks in order of first appearance.
std::vector<HostfileEntry> sort_hostfile(std::span<const HostfileEntry> entries);

struct CollectiveConfig {
  RingMode ring_mode = RingMode::kTopologyAware;
  FlipPolicy flip = FlipPolicy::kOddHosts;
  int channels = 1;
  int qp_per_connection = 1;
  TransportConfig transport;
};

struct RankResult {
  NodeId gpu;
  SimTime start;
  SimTime end;
  Bytes sent = 0;
  Bytes received = 0;
  bool done = false;
};

struct CollectiveResult {
  CollectiveKind kind = CollectiveKind::kAllReduce;
  Bytes nbytes = 0;
  SimTime start;
  SimTime end;
  bool completed = false;
  bool correct = false;  // provenance tags and payload digests match the algorithm
  std::string failure;
  std::vector<RankResult> ranks;
  std::vector<Bytes> link_bytes;  // per directed link, this collective only
  Bytes spine_bytes = 0;          // bytes on links attached to spine switches

  std::string to_json(const Topology &topo) const;
};

/// Collective operations over a fixed group of GPUs. Connections persist across
/// operations so QP state (including failover) carries over.
class Communicator {
 public:
  using DoneCallback = std::function<void(const CollectiveResult &)>;

  Communicator(Transport &transport, std::vector<NodeId> ranks, CollectiveConfig config);
  ~Communicator();
  Communicator(const Communicator &) = delete;
  Communicator &operator=(const Communicator &) = delete;

  const RingChannel &ring() const { return ring_; }
  const std::vector<NodeId> &ranks() const { return ranks_; }
  const CollectiveConfig &config() const { return config_; }

  /// Starts an operation; `on_done` fires once every rank finished or a connection failed.
  /// For broadcast `root` is the rank index; for alltoall `nbytes` is per ordered pair.
  void start(CollectiveKind kind, Bytes nbytes, DoneCallback on_done, int root = 0);
  /// start() then run the event loop until the operation ends.
  CollectiveResult run(CollectiveKind kind, Bytes nbytes, int root = 0);
  bool busy() const { return op_ != nullptr; }

  /// Connections used so far (all channels and stripes).
  std::vector<Connection *> connections() const;

 private:
  struct Op;

  Connection &conn(int src, int dst, int channel, int sub);
  void send(int src, int dst, int channel, Bytes bytes, std::vector<bool> tag, std::function<void()> on_sent);
  void recv(int src, int dst, int channel, Bytes bytes, std::function<void(std::vector<bool>)> on_recv);
  void rank_progress(int rank);
  void finish(bool completed, const std::string &failure);

  void start_ring_steps(int steps, Bytes slice);
  void start_broadcast(Bytes per_channel, int root);
  void start_alltoall(Bytes per_pair);

  Transport &transport_;
  std::vector<NodeId> ranks_;
  CollectiveConfig config_;
  RingChannel ring_;
  std::vector<int> ring_pos_;  // rank index -> position in ring
  std::map<std::tuple<int, int, int, int>, Connection *> conns_;
  std::map<std::tuple<int, int, int>, std::deque<std::vector<bool>>> tags_in_flight_;
  std::unique_ptr<Op> op_;
};

}  // namespace ccsim

#endif  // CCSIM_COLLECTIVES_H_
