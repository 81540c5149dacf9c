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

#include "ccsim/network.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace ccsim {

const char *to_string(LinkState s) { return s == LinkState::kUp ? "up" : "down"; }

std::vector<double> allocate_bandwidth(std::span<const std::vector<LinkId>> paths, std::span<const double> capacity,
                                       double unbounded_rate) {
  const size_t n = paths.size();
  std::vector<double> rate(n, 0.0);
  std::vector<bool> frozen(n, false);
  std::vector<double> residual(capacity.begin(), capacity.end());
  std::vector<int> users(capacity.size(), 0);
  size_t unfrozen = 0;
  for (size_t i = 0; i < n; ++i) {
    if (paths[i].empty()) {
      rate[i] = unbounded_rate;
      frozen[i] = true;
      continue;
    }
    ++unfrozen;
    for (LinkId l : paths[i]) ++users[l.value];
  }
  while (unfrozen > 0) {
    double share = std::numeric_limits<double>::infinity();
    for (size_t l = 0; l < residual.size(); ++l) {
      if (users[l] > 0) share = std::min(share, std::max(0.0, residual[l]) / users[l]);
    }
    // Freeze every flow crossing a bottleneck link at this share.
    std::vector<bool> bottleneck(residual.size(), false);
    for (size_t l = 0; l < residual.size(); ++l) {
      if (users[l] > 0 && std::max(0.0, residual[l]) / users[l] <= share * (1 + 1e-12)) bottleneck[l] = true;
    }
    for (size_t i = 0; i < n; ++i) {
      if (frozen[i]) continue;
      bool hit = std::any_of(paths[i].begin(), paths[i].end(), [&](LinkId l) { return bottleneck[l.value]; });
      if (!hit) continue;
      frozen[i] = true;
      rate[i] = share;
      --unfrozen;
      for (LinkId l : paths[i]) {
        residual[l.value] -= share;
        --users[l.value];
      }
    }
  }
  return rate;
}

std::vector<std::string> FaultScript::validate(const Topology &topo) const {
  std::vector<std::string> out;
  std::unordered_map<int32_t, LinkState> last;
  for (size_t i = 0; i < entries.size(); ++i) {
    const FaultEntry &e = entries[i];
    if (e.at < SimTime()) out.push_back("fault entry " + std::to_string(i) + " has negative time");
    if (i > 0 && e.at < entries[i - 1].at) out.push_back("fault entry " + std::to_string(i) + " is out of time order");
    if (!e.port.valid() || e.port.value >= static_cast<int32_t>(topo.nodes().size()) ||
        topo.node(e.port).kind != NodeKind::kNicPort) {
      out.push_back("fault entry " + std::to_string(i) + " references an unknown port");
      continue;
    }
    LinkState prev = last.count(e.port.value) ? last[e.port.value] : LinkState::kUp;
    if (prev == e.state) {
      out.push_back("fault entry " + std::to_string(i) + " does not alternate Down/Up on " + topo.node(e.port).name);
    }
    last[e.port.value] = e.state;
  }
  return out;
}

Network::Network(EventLoop &loop, const Topology &topo)
    : loop_(loop),
      topo_(topo),
      link_state_(topo.links().size(), LinkState::kUp),
      capacity_(topo.links().size()),
      link_bytes_(topo.links().size(), 0),
      last_advance_(loop.now()) {
  for (const Link &l : topo.links()) capacity_[l.id.value] = l.capacity_bps;
}

FlowId Network::start_flow(std::vector<LinkId> path, Bytes bytes, FlowCallback on_complete) {
  advance();
  int64_t id = next_flow_++;
  Flow f;
  f.path = std::move(path);
  f.bytes = bytes;
  f.remaining_bits = static_cast<double>(bytes) * 8.0;
  f.on_complete = std::move(on_complete);
  flows_.emplace(id, std::move(f));
  if (trace_flows_) loop_.trace().record(loop_.now(), "flow_start", "flow" + std::to_string(id), std::to_string(bytes));
  mark_dirty();
  return FlowId(id);
}

void Network::abort_flow(FlowId id) {
  auto it = flows_.find(id.value);
  if (it == flows_.end()) return;
  advance();
  loop_.cancel(it->second.completion);
  flows_.erase(it);
  if (trace_flows_) loop_.trace().record(loop_.now(), "flow_abort", "flow" + std::to_string(id.value), "");
  mark_dirty();
}

double Network::flow_rate(FlowId id) const {
  auto it = flows_.find(id.value);
  return it == flows_.end() ? 0.0 : it->second.rate;
}

LinkState Network::port_state(NodeId port) const {
  for (LinkId l : topo_.port_links(port)) {
    if (link_state_[l.value] == LinkState::kDown) return LinkState::kDown;
  }
  return LinkState::kUp;
}

bool Network::path_up(std::span<const LinkId> path) const {
  return std::all_of(path.begin(), path.end(), [&](LinkId l) { return link_state_[l.value] == LinkState::kUp; });
}

void Network::set_port_state(NodeId port, LinkState state) {
  if (!port.valid() || port.value >= static_cast<int32_t>(topo_.nodes().size()) ||
      topo_.node(port).kind != NodeKind::kNicPort) {
    throw Error(ErrorCode::kUnknownPort, "no NIC port with id " + std::to_string(port.value));
  }
  advance();
  std::vector<LinkId> links = topo_.port_links(port);
  for (LinkId l : links) link_state_[l.value] = state;
  if (state == LinkState::kDown) {
    for (auto &[id, f] : flows_) {
      bool crosses = std::any_of(f.path.begin(), f.path.end(),
                                 [&](LinkId l) { return std::find(links.begin(), links.end(), l) != links.end(); });
      if (crosses) f.remaining_bits = static_cast<double>(f.bytes) * 8.0;
    }
  }
  loop_.trace().record(loop_.now(), state == LinkState::kDown ? "port_down" : "port_up", topo_.node(port).name, "");
  mark_dirty();
  for (auto &listener : listeners_) listener(port, state);
}

void Network::apply_fault(NodeId port, LinkState state, SimTime at) {
  if (!port.valid() || port.value >= static_cast<int32_t>(topo_.nodes().size()) ||
      topo_.node(port).kind != NodeKind::kNicPort) {
    throw Error(ErrorCode::kUnknownPort, "no NIC port with id " + std::to_string(port.value));
  }
  loop_.schedule(at, [this, port, state] { set_port_state(port, state); });
}

void Network::apply_script(const FaultScript &script) {
  auto diags = script.validate(topo_);
  if (!diags.empty()) throw Error(ErrorCode::kInvalidFaultScript, diags.front());
  for (const FaultEntry &e : script.entries) apply_fault(e.port, e.state, e.at);
}

void Network::advance() {
  SimTime now = loop_.now();
  if (now == last_advance_) return;
  double dt = static_cast<double>((now - last_advance_).count()) * 1e-9;
  for (auto &[id, f] : flows_) {
    if (f.rate > 0) f.remaining_bits = std::max(0.0, f.remaining_bits - f.rate * dt);
  }
  last_advance_ = now;
}

void Network::mark_dirty() {
  if (realloc_pending_) return;
  realloc_pending_ = true;
  loop_.schedule(loop_.now(), [this] { reallocate(); });
}

void Network::reallocate() {
  realloc_pending_ = false;
  advance();
  std::vector<std::vector<LinkId>> paths;
  std::vector<int64_t> ids;
  paths.reserve(flows_.size());
  for (auto &[id, f] : flows_) {
    if (path_up(f.path)) {
      ids.push_back(id);
      paths.push_back(f.path);
    } else if (f.rate != 0 || f.completion.valid()) {
      f.rate = 0;
      loop_.cancel(f.completion);
      f.completion = EventHandle{};
    }
  }
  // Path-less flows (same-node transfers) finish at a nominal 1 Tb/s.
  std::vector<double> rates = allocate_bandwidth(paths, capacity_, 1e12);
  for (size_t i = 0; i < ids.size(); ++i) {
    Flow &f = flows_.at(ids[i]);
    if (f.rate == rates[i] && f.completion.valid()) continue;
    f.rate = rates[i];
    loop_.cancel(f.completion);
    double ns = f.remaining_bits * 1e9 / f.rate;
    auto whole = static_cast<int64_t>(std::ceil(ns));
    int64_t id = ids[i];
    f.completion = loop_.schedule(loop_.now() + SimTime(whole), [this, id] { complete(id); });
  }
}

void Network::complete(int64_t id) {
  auto it = flows_.find(id);
  if (it == flows_.end()) return;
  advance();
  Flow f = std::move(it->second);
  flows_.erase(it);
  for (LinkId l : f.path) link_bytes_[l.value] += f.bytes;
  delivered_ += f.bytes;
  if (trace_flows_) loop_.trace().record(loop_.now(), "flow_done", "flow" + std::to_string(id), std::to_string(f.bytes));
  mark_dirty();
  if (f.on_complete) f.on_complete();
}

}  // namespace ccsim
