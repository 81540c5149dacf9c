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

#include "ccsim/topology.h"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <limits>

namespace ccsim {

Topology Topology::rail_clos(const ClosSpec &spec) {
  if (spec.hosts < 1 || spec.gpus_per_host < 1 || spec.nics_per_host < 1 || spec.leaves < 1 || spec.spines < 0) {
    throw Error(ErrorCode::kInvalidTopology, "rail_clos requires at least one host, GPU, NIC and leaf");
  }
  if (spec.leaves > 1 && spec.spines < 1) {
    throw Error(ErrorCode::kInvalidTopology, "multiple leaves need at least one spine");
  }
  Topology topo;
  std::vector<NodeId> leaves;
  for (int i = 0; i < spec.leaves; ++i) leaves.push_back(topo.add_switch(NodeKind::kLeaf));
  std::vector<NodeId> spines;
  for (int i = 0; i < spec.spines; ++i) spines.push_back(topo.add_switch(NodeKind::kSpine));
  for (NodeId leaf : leaves) {
    for (NodeId spine : spines) topo.add_cable(leaf, spine, spec.link_bps, spec.link_delay);
  }
  for (int h = 0; h < spec.hosts; ++h) {
    HostId host = topo.add_host(spec.cpu_proxy_count);
    for (int g = 0; g < spec.gpus_per_host; ++g) topo.add_gpu(host, spec.nvlink_bps, spec.nvlink_delay);
    for (int n = 0; n < spec.nics_per_host; ++n) {
      NodeId port = topo.add_nic_port(host);
      int leaf = spec.rail_map == RailMap::kBlock ? n * spec.leaves / spec.nics_per_host : n % spec.leaves;
      topo.add_cable(port, leaves[leaf], spec.link_bps, spec.link_delay);
    }
  }
  return topo;
}

NodeId Topology::add_node(NodeKind kind, HostId host, int index, std::string name) {
  NodeId id(static_cast<int32_t>(nodes_.size()));
  nodes_.push_back(Node{id, kind, std::move(name), host, index});
  out_links_.emplace_back();
  route_cache_.clear();
  return id;
}

HostId Topology::add_host(int cpu_proxy_count) {
  HostId id(static_cast<int32_t>(hosts_.size()));
  Host host;
  host.id = id;
  host.cpu_proxy_count = cpu_proxy_count;
  hosts_.push_back(host);
  hosts_.back().nvswitch = add_node(NodeKind::kNvSwitch, id, 0, "h" + std::to_string(id.value) + ".nvs");
  return id;
}

NodeId Topology::add_gpu(HostId host, double nvlink_bps, SimTime nvlink_delay) {
  Host &h = hosts_.at(host.value);
  int index = static_cast<int>(h.gpus.size());
  NodeId id = add_node(NodeKind::kGpu, host, index, "h" + std::to_string(host.value) + ".gpu" + std::to_string(index));
  hosts_[host.value].gpus.push_back(id);
  add_cable(id, hosts_[host.value].nvswitch, nvlink_bps, nvlink_delay);
  return id;
}

NodeId Topology::add_nic_port(HostId host) {
  Host &h = hosts_.at(host.value);
  int index = static_cast<int>(h.nic_ports.size());
  NodeId id = add_node(NodeKind::kNicPort, host, index, "h" + std::to_string(host.value) + ".nic" + std::to_string(index));
  hosts_[host.value].nic_ports.push_back(id);
  return id;
}

NodeId Topology::add_switch(NodeKind tier) {
  int &count = tier == NodeKind::kLeaf ? leaves_ : spines_;
  std::string prefix = tier == NodeKind::kLeaf ? "leaf" : "spine";
  int index = count++;
  return add_node(tier, HostId(), index, prefix + std::to_string(index));
}

LinkId Topology::add_cable(NodeId a, NodeId b, double bps, SimTime delay) {
  if (bps <= 0) throw Error(ErrorCode::kInvalidTopology, "link capacity must be positive");
  if (delay < SimTime()) throw Error(ErrorCode::kInvalidTopology, "link delay must be non-negative");
  int cable = cables_++;
  LinkId fwd(static_cast<int32_t>(links_.size()));
  links_.push_back(Link{fwd, a, b, bps, delay, cable});
  LinkId rev(static_cast<int32_t>(links_.size()));
  links_.push_back(Link{rev, b, a, bps, delay, cable});
  out_links_.at(a.value).push_back(fwd);
  out_links_.at(b.value).push_back(rev);
  route_cache_.clear();
  return fwd;
}

std::optional<NodeId> Topology::find_node(std::string_view name) const {
  for (const Node &n : nodes_) {
    if (n.name == name) return n.id;
  }
  return std::nullopt;
}

std::vector<LinkId> Topology::port_links(NodeId nic_port) const {
  std::vector<LinkId> out;
  for (const Link &l : links_) {
    if (l.from == nic_port || l.to == nic_port) out.push_back(l.id);
  }
  return out;
}

std::optional<NodeId> Topology::leaf_of(NodeId nic_port) const {
  for (LinkId id : out_links_.at(nic_port.value)) {
    const Node &peer = node(link(id).to);
    if (peer.kind == NodeKind::kLeaf) return peer.id;
  }
  return std::nullopt;
}

bool Topology::touches_spine(LinkId id) const {
  const Link &l = link(id);
  return node(l.from).kind == NodeKind::kSpine || node(l.to).kind == NodeKind::kSpine;
}

std::optional<Route> Topology::route(NodeId src, NodeId dst) const {
  auto key = std::make_pair(src.value, dst.value);
  if (auto it = route_cache_.find(key); it != route_cache_.end()) return it->second;

  std::optional<Route> result;
  if (src == dst) {
    result = Route{};
  } else {
    std::vector<int32_t> via(nodes_.size(), -1);
    std::vector<bool> seen(nodes_.size(), false);
    std::deque<NodeId> frontier{src};
    seen[src.value] = true;
    while (!frontier.empty() && !seen[dst.value]) {
      NodeId cur = frontier.front();
      frontier.pop_front();
      for (LinkId lid : out_links_[cur.value]) {
        NodeId next = links_[lid.value].to;
        if (seen[next.value]) continue;
        // Hosts are endpoints: never route through a GPU or NIC port.
        NodeKind kind = nodes_[next.value].kind;
        if (next != dst && (kind == NodeKind::kGpu || kind == NodeKind::kNicPort)) continue;
        seen[next.value] = true;
        via[next.value] = lid.value;
        frontier.push_back(next);
      }
    }
    if (seen[dst.value]) {
      Route r;
      for (NodeId cur = dst; cur != src;) {
        const Link &l = links_[via[cur.value]];
        r.links.push_back(l.id);
        r.delay += l.delay;
        cur = l.from;
      }
      std::reverse(r.links.begin(), r.links.end());
      for (size_t i = 0; i + 1 < r.links.size(); ++i) {
        NodeKind k = nodes_[links_[r.links[i].value].to.value].kind;
        if (k == NodeKind::kLeaf || k == NodeKind::kSpine) ++r.hop_count;
      }
      result = std::move(r);
    }
  }
  route_cache_.emplace(key, result);
  return result;
}

std::optional<Route> Topology::gpu_route(NodeId src_gpu, NodeId dst_gpu) const {
  const Node &a = node(src_gpu);
  const Node &b = node(dst_gpu);
  if (a.host == b.host) return route(src_gpu, dst_gpu);
  return route(primary_nic(src_gpu), primary_nic(dst_gpu));
}

int Topology::nic_distance(int gpu_index, int nic_index) {
  if (gpu_index == nic_index) return 0;
  int a = gpu_index / 2;
  int b = nic_index / 2;
  if (a == b) return 1;
  return 2 + std::abs(a - b);
}

namespace {

NodeId closest_nic(const Topology &topo, NodeId gpu, std::optional<NodeId> exclude) {
  const Node &g = topo.node(gpu);
  const Host &h = topo.host(g.host);
  NodeId best;
  int best_distance = std::numeric_limits<int>::max();
  for (NodeId port : h.nic_ports) {
    if (exclude && port == *exclude) continue;
    int d = Topology::nic_distance(g.index, topo.node(port).index);
    if (d < best_distance) {
      best_distance = d;
      best = port;
    }
  }
  return best;
}

}  // namespace

NodeId Topology::primary_nic(NodeId gpu) const {
  NodeId nic = closest_nic(*this, gpu, std::nullopt);
  if (!nic.valid()) throw Error(ErrorCode::kInvalidTopology, node(gpu).name + " has no NIC");
  return nic;
}

NodeId Topology::backup_nic(NodeId gpu) const {
  NodeId primary = primary_nic(gpu);
  NodeId nic = closest_nic(*this, gpu, primary);
  return nic.valid() ? nic : primary;
}

std::vector<std::string> Topology::validate() const {
  std::vector<std::string> out;
  if (hosts_.empty()) out.push_back("topology has no hosts");
  for (const Host &h : hosts_) {
    std::string name = "h" + std::to_string(h.id.value);
    if (h.gpus.empty()) out.push_back(name + " has no GPUs");
    if (h.nic_ports.empty()) out.push_back(name + " has no NIC ports");
    for (NodeId port : h.nic_ports) {
      int leaves = 0;
      for (LinkId lid : out_links_[port.value]) {
        if (nodes_[links_[lid.value].to.value].kind == NodeKind::kLeaf) ++leaves;
      }
      if (leaves != 1) out.push_back(node(port).name + " attaches to " + std::to_string(leaves) + " leaf switches");
    }
  }
  // Rail consistency: NIC index i of every host lands on the same leaf.
  std::map<int, NodeId> rail;
  for (const Host &h : hosts_) {
    for (NodeId port : h.nic_ports) {
      auto leaf = leaf_of(port);
      if (!leaf) continue;
      auto [it, inserted] = rail.emplace(node(port).index, *leaf);
      if (!inserted && it->second != *leaf) {
        out.push_back("rail " + std::to_string(node(port).index) + " spans several leaves");
      }
    }
  }
  // Connectivity over the undirected graph.
  if (!nodes_.empty()) {
    std::vector<bool> seen(nodes_.size(), false);
    std::deque<int> frontier{0};
    seen[0] = true;
    while (!frontier.empty()) {
      int cur = frontier.front();
      frontier.pop_front();
      std::vector<int> next;
      for (LinkId lid : out_links_[cur]) next.push_back(links_[lid.value].to.value);
      // GPUs reach their host's NICs over PCIe, which is not modelled as a link.
      if (nodes_[cur].host.valid()) {
        const Host &h = hosts_[nodes_[cur].host.value];
        for (NodeId n : h.gpus) next.push_back(n.value);
        for (NodeId n : h.nic_ports) next.push_back(n.value);
        next.push_back(h.nvswitch.value);
      }
      for (int n : next) {
        if (!seen[n]) {
          seen[n] = true;
          frontier.push_back(n);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) out.push_back("topology graph is disconnected");
  }
  return out;
}

}  // namespace ccsim
