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

#ifndef CCSIM_TOPOLOGY_H_
#define CCSIM_TOPOLOGY_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ccsim/common.h"

namespace ccsim {

enum class NodeKind { kGpu, kNicPort, kNvSwitch, kLeaf, kSpine };

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::kGpu;
  std::string name;
  HostId host;     // invalid for switches
  int index = -1;  // GPU/NIC index within its host, or switch index within its tier
};

/// Directed link. Each cable contributes one Link per direction sharing a cable id.
struct Link {
  LinkId id;
  NodeId from;
  NodeId to;
  double capacity_bps = 0;
  SimTime delay;
  int cable = -1;
};

struct Host {
  HostId id;
  std::vector<NodeId> gpus;
  std::vector<NodeId> nic_ports;
  NodeId nvswitch;
  int cpu_proxy_count = 1;
};

struct Route {
  std::vector<LinkId> links;
  int hop_count = 0;  // leaf/spine switches traversed
  SimTime delay;
};

enum class RailMap { kBlock, kModulo };

/// Parameters of a rail-optimized two-tier CLOS fabric.
struct ClosSpec {
  int hosts = 2;
  int gpus_per_host = 8;
  int nics_per_host = 8;
  int leaves = 2;
  int spines = 2;
  double link_bps = 400e9;
  SimTime link_delay = SimTime::ns(500);
  double nvlink_bps = 3600e9;
  SimTime nvlink_delay = SimTime::ns(100);
  RailMap rail_map = RailMap::kBlock;
  int cpu_proxy_count = 1;
};

class Topology {
 public:
  static Topology rail_clos(const ClosSpec &spec);

  HostId add_host(int cpu_proxy_count = 1);
  NodeId add_gpu(HostId host, double nvlink_bps = 3600e9, SimTime nvlink_delay = SimTime::ns(100));
  NodeId add_nic_port(HostId host);
  NodeId add_switch(NodeKind tier);
  /// Adds a full-duplex cable; returns the a->b link (b->a is the next id).
  LinkId add_cable(NodeId a, NodeId b, double bps, SimTime delay);

  const std::vector<Node> &nodes() const { return nodes_; }
  const std::vector<Link> &links() const { return links_; }
  const std::vector<Host> &hosts() const { return hosts_; }
  const Node &node(NodeId id) const { return nodes_.at(id.value); }
  const Link &link(LinkId id) const { return links_.at(id.value); }
  const Host &host(HostId id) const { return hosts_.at(id.value); }
  int cable_count() const { return cables_; }

  NodeId gpu(HostId host, int index) const { return hosts_.at(host.value).gpus.at(index); }
  NodeId nic(HostId host, int index) const { return hosts_.at(host.value).nic_ports.at(index); }
  std::optional<NodeId> find_node(std::string_view name) const;

  /// Directed links of the cable attaching a NIC port (both directions).
  std::vector<LinkId> port_links(NodeId nic_port) const;
  /// Leaf switch a NIC port attaches to, if any.
  std::optional<NodeId> leaf_of(NodeId nic_port) const;
  bool touches_spine(LinkId id) const;

  /// Static shortest path (fewest links, lowest link id on ties). Empty when unreachable.
  std::optional<Route> route(NodeId src, NodeId dst) const;
  /// Route between two GPUs: NVLink inside a host, rail NICs across hosts.
  std::optional<Route> gpu_route(NodeId src_gpu, NodeId dst_gpu) const;

  /// PCIe-affinity distance between a GPU and a NIC of the same host.
  static int nic_distance(int gpu_index, int nic_index);
  /// Closest NIC to the GPU (index tie-break).
  NodeId primary_nic(NodeId gpu) const;
  /// Second closest NIC (index tie-break); equals primary when the host has one NIC.
  NodeId backup_nic(NodeId gpu) const;

  /// Structural diagnostics; empty means the topology is valid.
  std::vector<std::string> validate() const;

 private:
  NodeId add_node(NodeKind kind, HostId host, int index, std::string name);

  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<Host> hosts_;
  std::vector<std::vector<LinkId>> out_links_;
  int cables_ = 0;
  int leaves_ = 0;
  int spines_ = 0;
  mutable std::map<std::pair<int, int>, std::optional<Route>> route_cache_;
};

}  // namespace ccsim

#endif  // CCSIM_TOPOLOGY_H_
