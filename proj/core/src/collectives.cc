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

#include "ccsim/collectives.h"

#include <algorithm>
#include <numeric>

#include "json.hpp"

namespace ccsim {

const char *to_string(RingMode m) { return m == RingMode::kDefault ? "default" : "topology_aware"; }

const char *to_string(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::kAllReduce: return "allreduce";
    case CollectiveKind::kAllGather: return "allgather";
    case CollectiveKind::kReduceScatter: return "reducescatter";
    case CollectiveKind::kBroadcast: return "broadcast";
    case CollectiveKind::kSendRecv: return "sendrecv";
    case CollectiveKind::kAllToAll: return "alltoall";
  }
  return "?";
}

std::vector<RingEdge> RingChannel::inter_host_edges(const Topology &topo) const {
  std::vector<RingEdge> out;
  for (const RingEdge &e : edges) {
    if (topo.node(e.from).host != topo.node(e.to).host) out.push_back(e);
  }
  return out;
}

RingChannel build_ring(std::span<const NodeId> ranks, const Topology &topo, RingMode mode, FlipPolicy flip) {
  std::vector<HostId> hosts;
  std::map<HostId, std::vector<NodeId>> by_host;
  for (NodeId g : ranks) {
    HostId h = topo.node(g).host;
    if (!by_host.count(h)) hosts.push_back(h);
    by_host[h].push_back(g);
  }
  RingChannel ring;
  for (size_t i = 0; i < hosts.size(); ++i) {
    std::vector<NodeId> gpus = by_host[hosts[i]];
    std::sort(gpus.begin(), gpus.end(), [&](NodeId a, NodeId b) { return topo.node(a).index < topo.node(b).index; });
    bool odd = i % 2 == 1;
    bool flipped = mode == RingMode::kTopologyAware && (flip == FlipPolicy::kOddHosts ? odd : !odd);
    if (flipped) std::reverse(gpus.begin(), gpus.end());
    ring.order.insert(ring.order.end(), gpus.begin(), gpus.end());
  }
  if (ring.order.size() < 2) return ring;
  for (size_t i = 0; i < ring.order.size(); ++i) {
    NodeId a = ring.order[i];
    NodeId b = ring.order[(i + 1) % ring.order.size()];
    auto r = topo.gpu_route(a, b);
    if (!r) {
      throw Error(ErrorCode::kInfeasibleRing,
                  "no route from " + topo.node(a).name + " to " + topo.node(b).name);
    }
    ring.edges.push_back(RingEdge{a, b, r->hop_count});
  }
  return ring;
}

std::vector<HostfileEntry> sort_hostfile(std::span<const HostfileEntry> entries) {
  std::vector<std::string> tors;
  for (const HostfileEntry &e : entries) {
    if (std::find(tors.begin(), tors.end(), e.tor) == tors.end()) tors.push_back(e.tor);
  }
  std::vector<HostfileEntry> out;
  out.reserve(entries.size());
  for (const std::string &t : tors) {
    for (const HostfileEntry &e : entries) {
      if (e.tor == t) out.push_back(e);
    }
  }
  return out;
}

std::string CollectiveResult::to_json(const Topology &topo) const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["nbytes"] = nbytes;
  j["start_ns"] = start.count();
  j["end_ns"] = end.count();
  j["completed"] = completed;
  j["correct"] = correct;
  if (!failure.empty()) j["failure"] = failure;
  j["spine_bytes"] = spine_bytes;
  auto &rs = j["ranks"] = nlohmann::ordered_json::array();
  for (const RankResult &r : ranks) {
    rs.push_back({{"gpu", topo.node(r.gpu).name},
                  {"start_ns", r.start.count()},
                  {"end_ns", r.end.count()},
                  {"bytes_sent", r.sent},
                  {"bytes_received", r.received},
                  {"done", r.done}});
  }
  auto &ls = j["links"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < link_bytes.size(); ++i) {
    if (link_bytes[i] == 0) continue;
    const Link &l = topo.link(LinkId(static_cast<int32_t>(i)));
    ls.push_back({{"from", topo.node(l.from).name}, {"to", topo.node(l.to).name}, {"bytes", link_bytes[i]}});
  }
  return j.dump(2);
}

struct Communicator::Op {
  CollectiveKind kind = CollectiveKind::kAllReduce;
  DoneCallback on_done;
  CollectiveResult result;
  std::vector<Bytes> link_base;
  std::vector<int> pending;
  int remaining = 0;
  int root = 0;
  // provenance tags, [rank][channel][slice]; bit p marks the contribution of ring position p
  std::vector<std::vector<std::vector<std::vector<bool>>>> tags;
  bool tags_ok = true;
  std::function<bool(const Op &)> verify;
};

namespace {

uint64_t tag_seed(int src, int dst, int channel, const std::vector<bool> &tag) {
  Fnv1a h;
  h.update_u64(static_cast<uint64_t>(src));
  h.update_u64(static_cast<uint64_t>(dst));
  h.update_u64(static_cast<uint64_t>(channel));
  for (bool b : tag) h.update_u64(b ? 1 : 0);
  return h.digest();
}

std::vector<Bytes> stripe_sizes(Bytes bytes, Bytes chunk, int q) {
  std::vector<Bytes> out(q, 0);
  int64_t n = chunk_count(bytes, chunk);
  for (int64_t j = 0; j < n; ++j) out[j % q] += std::min(chunk, bytes - j * chunk);
  return out;
}

int mod(int a, int n) { return ((a % n) + n) % n; }

}  // namespace

Communicator::Communicator(Transport &transport, std::vector<NodeId> ranks, CollectiveConfig config)
    : transport_(transport), ranks_(std::move(ranks)), config_(std::move(config)) {
  if (config_.channels < 1 || config_.qp_per_connection < 1) {
    throw Error(ErrorCode::kInvalidConfig, "channels and QPs per connection must be at least 1");
  }
  for (size_t i = 0; i < ranks_.size(); ++i) {
    for (size_t j = i + 1; j < ranks_.size(); ++j) {
      if (ranks_[i] == ranks_[j]) throw Error(ErrorCode::kInvalidConfig, "duplicate rank in group");
    }
  }
  const Topology &topo = transport_.verbs().network().topology();
  ring_ = build_ring(ranks_, topo, config_.ring_mode, config_.flip);
  ring_pos_.assign(ranks_.size(), 0);
  for (size_t p = 0; p < ring_.order.size(); ++p) {
    auto it = std::find(ranks_.begin(), ranks_.end(), ring_.order[p]);
    ring_pos_[it - ranks_.begin()] = static_cast<int>(p);
  }
  transport_.set_failure_handler([this](ConnId, const std::string &reason) {
    if (op_) finish(false, reason);
  });
}

Communicator::~Communicator() = default;

Connection &Communicator::conn(int src, int dst, int channel, int sub) {
  auto key = std::make_tuple(src, dst, channel, sub);
  auto it = conns_.find(key);
  if (it != conns_.end()) return *it->second;
  Connection &c = transport_.connect(ranks_[src], ranks_[dst], config_.transport);
  conns_.emplace(key, &c);
  return c;
}

std::vector<Connection *> Communicator::connections() const {
  std::vector<Connection *> out;
  for (const auto &[k, c] : conns_) out.push_back(c);
  return out;
}

void Communicator::send(int src, int dst, int channel, Bytes bytes, std::vector<bool> tag,
                        std::function<void()> on_sent) {
  uint64_t seed = tag_seed(src, dst, channel, tag);
  tags_in_flight_[std::make_tuple(src, dst, channel)].push_back(std::move(tag));
  op_->result.ranks[src].sent += bytes;
  auto sizes = stripe_sizes(bytes, config_.transport.chunk_size, config_.qp_per_connection);
  auto left = std::make_shared<int>(0);
  for (Bytes b : sizes) *left += b > 0 ? 1 : 0;
  for (int sub = 0; sub < config_.qp_per_connection; ++sub) {
    if (sizes[sub] == 0) continue;
    Connection &c = conn(src, dst, channel, sub);
    MrId region = transport_.register_buffer(ranks_[src], sizes[sub]);
    c.send_message(region, sizes[sub], seed + static_cast<uint64_t>(sub), [left, on_sent] {
      if (--*left == 0) on_sent();
    });
  }
}

void Communicator::recv(int src, int dst, int channel, Bytes bytes, std::function<void(std::vector<bool>)> on_recv) {
  auto sizes = stripe_sizes(bytes, config_.transport.chunk_size, config_.qp_per_connection);
  auto left = std::make_shared<int>(0);
  for (Bytes b : sizes) *left += b > 0 ? 1 : 0;
  auto key = std::make_tuple(src, dst, channel);
  for (int sub = 0; sub < config_.qp_per_connection; ++sub) {
    if (sizes[sub] == 0) continue;
    Connection &c = conn(src, dst, channel, sub);
    MrId region = transport_.register_buffer(ranks_[dst], sizes[sub]);
    c.recv_message(region, sizes[sub], [this, left, on_recv, key, dst, bytes] {
      if (--*left != 0 || !op_) return;
      auto &q = tags_in_flight_[key];
      std::vector<bool> tag = std::move(q.front());
      q.pop_front();
      op_->result.ranks[dst].received += bytes;
      on_recv(std::move(tag));
    });
  }
}

void Communicator::rank_progress(int rank) {
  if (!op_) return;
  if (--op_->pending[rank] > 0) return;
  RankResult &r = op_->result.ranks[rank];
  r.end = transport_.loop().now();
  r.done = true;
  if (--op_->remaining == 0) finish(true, "");
}

void Communicator::finish(bool completed, const std::string &failure) {
  std::unique_ptr<Op> op = std::move(op_);
  CollectiveResult &res = op->result;
  const Network &net = transport_.verbs().network();
  const Topology &topo = net.topology();
  res.end = transport_.loop().now();
  res.completed = completed;
  res.failure = failure;
  res.link_bytes.assign(net.link_bytes().size(), 0);
  for (size_t i = 0; i < res.link_bytes.size(); ++i) {
    res.link_bytes[i] = net.link_bytes()[i] - op->link_base[i];
    if (topo.touches_spine(LinkId(static_cast<int32_t>(i)))) res.spine_bytes += res.link_bytes[i];
  }
  bool digests_ok = true;
  for (const auto &[k, c] : conns_) {
    for (size_t m = 0; m < c->sent_message_count(); ++m) {
      MessageDigest d = c->digest(m);
      if (d.receiver_done && d.sent != d.received) digests_ok = false;
    }
  }
  if (completed && op->verify) op->tags_ok = op->tags_ok && op->verify(*op);
  res.correct = completed && op->tags_ok && digests_ok;
  if (completed) tags_in_flight_.clear();
  if (op->on_done) op->on_done(res);
}

void Communicator::start(CollectiveKind kind, Bytes nbytes, DoneCallback on_done, int root) {
  if (op_) throw Error(ErrorCode::kInvalidConfig, "communicator already runs an operation");
  int n = static_cast<int>(ranks_.size());
  if (n < 2) throw Error(ErrorCode::kGroupTooSmall, "collective needs at least 2 ranks");
  if (kind == CollectiveKind::kSendRecv && n != 2) {
    throw Error(ErrorCode::kInvalidConfig, "send/recv needs exactly 2 ranks");
  }
  if (nbytes < 0) throw Error(ErrorCode::kInvalidConfig, "negative collective size");
  if (root < 0 || root >= n) throw Error(ErrorCode::kInvalidConfig, "root out of range");
  op_ = std::make_unique<Op>();
  op_->kind = kind;
  op_->on_done = std::move(on_done);
  op_->root = root;
  op_->link_base = transport_.verbs().network().link_bytes();
  op_->pending.assign(n, 0);
  op_->remaining = n;
  CollectiveResult &res = op_->result;
  res.kind = kind;
  res.nbytes = nbytes;
  res.start = transport_.loop().now();
  for (int r = 0; r < n; ++r) res.ranks.push_back(RankResult{ranks_[r], res.start, res.start, 0, 0, false});
  if (nbytes == 0) {
    for (RankResult &r : res.ranks) r.done = true;
    finish(true, "");
    return;
  }
  Bytes per_channel = (nbytes + config_.channels - 1) / config_.channels;
  switch (kind) {
    case CollectiveKind::kAllReduce:
      start_ring_steps(2 * (n - 1), std::max<Bytes>(1, (per_channel + n - 1) / n));
      break;
    case CollectiveKind::kReduceScatter:
    case CollectiveKind::kAllGather:
      start_ring_steps(n - 1, std::max<Bytes>(1, (per_channel + n - 1) / n));
      break;
    case CollectiveKind::kBroadcast:
      start_broadcast(per_channel, root);
      break;
    case CollectiveKind::kSendRecv:
      start_broadcast(per_channel, 0);
      break;
    case CollectiveKind::kAllToAll:
      start_alltoall(nbytes);
      break;
  }
}

CollectiveResult Communicator::run(CollectiveKind kind, Bytes nbytes, int root) {
  CollectiveResult out;
  bool ended = false;
  EventLoop &loop = transport_.loop();
  start(
      kind, nbytes,
      [&](const CollectiveResult &r) {
        out = r;
        ended = true;
        loop.stop();
      },
      root);
  if (!ended) loop.run();
  if (!ended && op_) finish(false, "event queue drained before completion");
  return out;
}

void Communicator::start_ring_steps(int steps, Bytes slice) {
  int n = static_cast<int>(ranks_.size());
  int channels = config_.channels;
  CollectiveKind kind = op_->kind;
  op_->tags.assign(n, std::vector<std::vector<std::vector<bool>>>(
                          channels, std::vector<std::vector<bool>>(n, std::vector<bool>(n, false))));
  for (int r = 0; r < n; ++r) {
    int p = ring_pos_[r];
    for (int c = 0; c < channels; ++c) {
      for (int k = 0; k < n; ++k) {
        if (kind != CollectiveKind::kAllGather || k == p) op_->tags[r][c][k][p] = true;
      }
    }
    op_->pending[r] = 2 * steps * channels;
  }
  // Reduce phase: send slice p-s, receive p-s-1 and merge. Gather phase: forward whole slices.
  auto slice_of = [kind, n](int p, int s, bool sending) {
    bool gather = kind == CollectiveKind::kAllGather || (kind == CollectiveKind::kAllReduce && s >= n - 1);
    if (!gather) return mod(p - s - (sending ? 0 : 1), n);
    int t = kind == CollectiveKind::kAllReduce ? s - (n - 1) : s;
    int shift = kind == CollectiveKind::kAllReduce ? 1 : 0;
    return mod(p + shift - t - (sending ? 0 : 1), n);
  };
  auto merges = [kind, n](int s) { return kind == CollectiveKind::kReduceScatter || (kind == CollectiveKind::kAllReduce && s < n - 1); };
  auto rank_at = [this](int pos) {
    NodeId g = ring_.order[mod(pos, static_cast<int>(ring_.order.size()))];
    return static_cast<int>(std::find(ranks_.begin(), ranks_.end(), g) - ranks_.begin());
  };
  auto do_send = std::make_shared<std::function<void(int, int, int)>>();
  *do_send = [this, slice, slice_of, rank_at](int r, int c, int s) {
    int p = ring_pos_[r];
    send(r, rank_at(p + 1), c, slice, op_->tags[r][c][slice_of(p, s, true)], [this, r] { rank_progress(r); });
  };
  for (int r = 0; r < n; ++r) {
    int p = ring_pos_[r];
    int prev = rank_at(p - 1);
    for (int c = 0; c < channels; ++c) {
      for (int s = 0; s < steps; ++s) {
        recv(prev, r, c, slice, [this, r, c, s, p, steps, slice_of, merges, do_send](std::vector<bool> tag) {
          std::vector<bool> &mine = op_->tags[r][c][slice_of(p, s, false)];
          if (merges(s)) {
            for (size_t i = 0; i < tag.size(); ++i) {
              if (tag[i] && mine[i]) op_->tags_ok = false;  // contribution merged twice
              mine[i] = mine[i] || tag[i];
            }
          } else {
            mine = std::move(tag);
          }
          if (s + 1 < steps) (*do_send)(r, c, s + 1);
          rank_progress(r);
        });
      }
    }
  }
  op_->verify = [this, kind, n, channels](const Op &op) {
    for (int r = 0; r < n; ++r) {
      int p = ring_pos_[r];
      for (int c = 0; c < channels; ++c) {
        for (int k = 0; k < n; ++k) {
          const std::vector<bool> &t = op.tags[r][c][k];
          int bits = static_cast<int>(std::count(t.begin(), t.end(), true));
          if (kind == CollectiveKind::kAllReduce && bits != n) return false;
          if (kind == CollectiveKind::kReduceScatter && k == mod(p + 1, n) && bits != n) return false;
          if (kind == CollectiveKind::kAllGather && (bits != 1 || !t[k])) return false;
        }
      }
    }
    return true;
  };
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < channels; ++c) (*do_send)(r, c, 0);
  }
}

void Communicator::start_broadcast(Bytes per_channel, int root) {
  int n = static_cast<int>(ranks_.size());
  int channels = config_.channels;
  int root_pos = ring_pos_[root];
  std::vector<bool> root_tag(n, false);
  root_tag[root_pos] = true;
  std::vector<int> order;  // ranks in relay order starting at the root
  for (int k = 0; k < n; ++k) {
    NodeId g = ring_.order[mod(root_pos + k, n)];
    order.push_back(static_cast<int>(std::find(ranks_.begin(), ranks_.end(), g) - ranks_.begin()));
  }
  if (op_->kind == CollectiveKind::kSendRecv) order = {0, 1};
  for (int k = 0; k < n; ++k) op_->pending[order[k]] = channels * ((k > 0 ? 1 : 0) + (k + 1 < n ? 1 : 0));
  for (int c = 0; c < channels; ++c) {
    for (int k = 1; k < n; ++k) {
      int r = order[k];
      int next = k + 1 < n ? order[k + 1] : -1;
      recv(order[k - 1], r, c, per_channel, [this, r, next, c, per_channel, root_pos](std::vector<bool> tag) {
        if (std::count(tag.begin(), tag.end(), true) != 1 || !tag[root_pos]) op_->tags_ok = false;
        if (next >= 0) send(r, next, c, per_channel, tag, [this, r] { rank_progress(r); });
        rank_progress(r);
      });
    }
    send(order[0], order[1], c, per_channel, root_tag, [this, r = order[0]] { rank_progress(r); });
  }
}

void Communicator::start_alltoall(Bytes per_pair) {
  int n = static_cast<int>(ranks_.size());
  for (int r = 0; r < n; ++r) op_->pending[r] = 2 * (n - 1);
  for (int src = 0; src < n; ++src) {
    for (int dst = 0; dst < n; ++dst) {
      if (src == dst) continue;
      recv(src, dst, 0, per_pair, [this, dst, src](std::vector<bool> tag) {
        if (!tag[ring_pos_[src]]) op_->tags_ok = false;
        rank_progress(dst);
      });
    }
  }
  for (int src = 0; src < n; ++src) {
    std::vector<bool> tag(n, false);
    tag[ring_pos_[src]] = true;
    for (int dst = 0; dst < n; ++dst) {
      if (src != dst) send(src, dst, 0, per_pair, tag, [this, src] { rank_progress(src); });
    }
  }
}

}  // namespace ccsim
