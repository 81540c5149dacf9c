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

#ifndef CCSIM_NETWORK_H_
#define CCSIM_NETWORK_H_

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/event_loop.h"
#include "ccsim/topology.h"

namespace ccsim {

enum class LinkState { kUp, kDown };

const char *to_string(LinkState s);

/// Max-min fair rates (bits/s) by progressive filling. `paths[i]` lists the links of flow i;
/// `capacity[l]` is the capacity of link l. Flows with an empty path get `unbounded_rate`.
std::vector<double> allocate_bandwidth(std::span<const std::vector<LinkId>> paths, std::span<const double> capacity,
                                       double unbounded_rate = std::numeric_limits<double>::infinity());

struct FaultEntry {
  SimTime at;
  NodeId port;
  LinkState state = LinkState::kDown;
};

/// Scripted NIC-port state changes, sorted by time, alternating Down/Up per port.
struct FaultScript {
  std::vector<FaultEntry> entries;

  std::vector<std::string> validate(const Topology &topo) const;
};

/// Fluid-model network: active flows share link capacity max-min fairly; rates are
/// recomputed whenever the flow set or a link state changes.
class Network {
 public:
  using FlowCallback = std::function<void()>;
  using PortListener = std::function<void(NodeId port, LinkState state)>;

  Network(EventLoop &loop, const Topology &topo);

  const Topology &topology() const { return topo_; }
  EventLoop &loop() { return loop_; }

  /// Starts moving `bytes` along `path`; `on_complete` fires once the last bit has left the path.
  FlowId start_flow(std::vector<LinkId> path, Bytes bytes, FlowCallback on_complete);
  void abort_flow(FlowId id);
  bool flow_active(FlowId id) const { return flows_.count(id.value) != 0; }
  double flow_rate(FlowId id) const;
  size_t active_flow_count() const { return flows_.size(); }

  LinkState link_state(LinkId id) const { return link_state_.at(id.value); }
  LinkState port_state(NodeId port) const;
  bool path_up(std::span<const LinkId> path) const;

  /// Immediately changes the state of the cable attached to `port`. Down drops in-flight progress.
  void set_port_state(NodeId port, LinkState state);
  /// Schedules a port state change at `at`. Throws Error(kUnknownPort).
  void apply_fault(NodeId port, LinkState state, SimTime at);
  void apply_script(const FaultScript &script);
  void add_port_listener(PortListener listener) { listeners_.push_back(std::move(listener)); }

  /// Bytes carried by each directed link, counted when flows complete.
  const std::vector<Bytes> &link_bytes() const { return link_bytes_; }
  Bytes delivered_bytes() const { return delivered_; }

  void set_trace_flows(bool on) { trace_flows_ = on; }

 private:
  struct Flow {
    std::vector<LinkId> path;
    Bytes bytes = 0;
    double remaining_bits = 0;
    double rate = 0;
    EventHandle completion;
    FlowCallback on_complete;
  };

  void advance();
  void mark_dirty();
  void reallocate();
  void complete(int64_t id);

  EventLoop &loop_;
  const Topology &topo_;
  std::vector<LinkState> link_state_;
  std::vector<double> capacity_;
  std::vector<Bytes> link_bytes_;
  std::map<int64_t, Flow> flows_;
  std::vector<PortListener> listeners_;
  int64_t next_flow_ = 0;
  SimTime last_advance_;
  bool realloc_pending_ = false;
  bool trace_flows_ = false;
  Bytes delivered_ = 0;
};

}  // namespace ccsim

#endif  // CCSIM_NETWORK_H_
