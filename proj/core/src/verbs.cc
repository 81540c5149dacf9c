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

#include "ccsim/verbs.h"

#include <cmath>

namespace ccsim {

const char *to_string(WcStatus s) {
  switch (s) {
    case WcStatus::kSuccess: return "success";
    case WcStatus::kRetryExceeded: return "retry_exceeded";
    case WcStatus::kFlushed: return "flushed";
  }
  return "?";
}

const char *to_string(QpState s) {
  switch (s) {
    case QpState::kInit: return "init";
    case QpState::kConnected: return "connected";
    case QpState::kError: return "error";
  }
  return "?";
}

Verbs::Verbs(EventLoop &loop, Network &net) : loop_(loop), net_(net) {
  net_.add_port_listener([this](NodeId, LinkState) { on_port_change(); });
}

MrId Verbs::register_region(NodeId owner, Bytes length, RegionKind kind) {
  if (length <= 0) throw Error(ErrorCode::kUnregisteredRegion, "memory region length must be positive");
  MrId id(static_cast<int32_t>(regions_.size()));
  regions_.push_back(MemoryRegion{id, owner, length, kind, true});
  return id;
}

void Verbs::deregister_region(MrId id) { regions_.at(id.value).registered = false; }

CqId Verbs::create_cq(size_t capacity) {
  CqId id(static_cast<int32_t>(cqs_.size()));
  cqs_.emplace_back();
  cqs_.back().capacity = capacity;
  return id;
}

void Verbs::set_cq_handler(CqId cq, std::function<void()> handler) { cqs_.at(cq.value).handler = std::move(handler); }

std::vector<WorkCompletion> Verbs::poll_cq(CqId cq, int max) {
  std::vector<WorkCompletion> out;
  auto &entries = cqs_.at(cq.value).entries;
  while (max-- > 0 && !entries.empty()) {
    out.push_back(entries.front());
    entries.pop_front();
  }
  return out;
}

QpId Verbs::create_qp(const QpConfig &config) {
  QpId id(static_cast<int32_t>(qps_.size()));
  qps_.emplace_back();
  QueuePair &qp = qps_.back();
  qp.id = id;
  qp.config = config;
  return id;
}

void Verbs::connect(QpId a, QpId b) {
  QueuePair &qa = qps_.at(a.value);
  QueuePair &qb = qps_.at(b.value);
  const Topology &topo = net_.topology();
  auto fwd = topo.route(qa.config.local, qb.config.local);
  auto rev = topo.route(qb.config.local, qa.config.local);
  if (!fwd || !rev) throw Error(ErrorCode::kInvalidTopology, "no route between QP endpoints");
  qa.peer = b;
  qb.peer = a;
  qa.fwd = qb.rev = fwd->links;
  qa.rev = qb.fwd = rev->links;
  qa.fwd_delay = qb.rev_delay = fwd->delay;
  qa.rev_delay = qb.fwd_delay = rev->delay;
  qa.state = qb.state = QpState::kConnected;
}

void Verbs::to_error(QpId id) {
  QueuePair &qp = qps_.at(id.value);
  if (qp.state == QpState::kError) return;
  flush(qp, false);
}

void Verbs::reset(QpId id) {
  QueuePair &qp = qps_.at(id.value);
  if (qp.state == QpState::kConnected) return;
  qp.state = QpState::kConnected;
}

void Verbs::check_region(const WorkRequest &wr) const {
  if (!wr.region.valid() || wr.region.value >= static_cast<int32_t>(regions_.size()) ||
      !regions_[wr.region.value].registered) {
    throw Error(ErrorCode::kUnregisteredRegion, "work request " + std::to_string(wr.wr_id) + " names no registered region");
  }
  const MemoryRegion &mr = regions_[wr.region.value];
  if (wr.offset < 0 || wr.length < 0 || wr.offset + wr.length > mr.length) {
    throw Error(ErrorCode::kUnregisteredRegion, "work request " + std::to_string(wr.wr_id) + " exceeds its region");
  }
}

void Verbs::post_send(QpId id, WorkRequest wr) {
  QueuePair &qp = qps_.at(id.value);
  if (qp.state != QpState::kConnected) {
    throw Error(ErrorCode::kQpInErrorState, "post_send on QP " + std::to_string(id.value) + " in state " +
                                                 to_string(qp.state));
  }
  if (wr.direction == WrDirection::kRecv) wr.direction = WrDirection::kSend;
  if (wr.direction == WrDirection::kSend) check_region(wr);
  if (wr.direction == WrDirection::kCts) wr.length = 0;
  wr.post_time = loop_.now();
  for (VerbsObserver *o : observers_) o->on_post(id, wr);
  qp.sends.push_back(SendEntry{wr, SendPhase::kQueued, FlowId(), EventHandle{}});
  pump(qp);
  update_stall(qp);
}

void Verbs::post_recv(QpId id, WorkRequest wr) {
  QueuePair &qp = qps_.at(id.value);
  if (qp.state != QpState::kConnected) {
    throw Error(ErrorCode::kQpInErrorState, "post_recv on QP " + std::to_string(id.value) + " in state " +
                                                 to_string(qp.state));
  }
  check_region(wr);
  wr.direction = WrDirection::kRecv;
  wr.post_time = loop_.now();
  for (VerbsObserver *o : observers_) o->on_post(id, wr);
  qp.recvs.push_back(wr);
}

void Verbs::send_control(QpId via, std::function<void()> on_arrival, std::function<void()> on_lost) {
  QueuePair &qp = qps_.at(via.value);
  if (!net_.path_up(qp.fwd)) {
    on_lost();
    return;
  }
  loop_.schedule_after(qp.fwd_delay, std::move(on_arrival));
}

QueuePairInfo Verbs::info(QpId id) const {
  const QueuePair &qp = qps_.at(id.value);
  return QueuePairInfo{qp.id, qp.config, qp.state, qp.peer, qp.sends.size(), qp.recvs.size()};
}

bool Verbs::path_up(QpId id) const {
  const QueuePair &qp = qps_.at(id.value);
  return net_.path_up(qp.fwd) && net_.path_up(qp.rev);
}

SimTime Verbs::retry_timeout(QpId id) const {
  const QpConfig &c = qps_.at(id.value).config;
  return retry_timeout(c.timeout_exponent, c.retry_count);
}

SimTime Verbs::retry_timeout(int exponent, int retries) {
  // 4.096us = 4096ns, so the product stays exact in integer nanoseconds.
  return SimTime(int64_t{4096} * (int64_t{1} << exponent) * (retries + 1));
}

Verbs::SendEntry *Verbs::find_send(QueuePair &qp, uint64_t wr_id) {
  for (SendEntry &e : qp.sends) {
    if (e.wr.wr_id == wr_id) return &e;
  }
  return nullptr;
}

void Verbs::pump(QueuePair &qp) {
  if (qp.state != QpState::kConnected) return;
  SendEntry *next = nullptr;
  for (SendEntry &e : qp.sends) {
    if (e.phase == SendPhase::kTransmitting) return;
    if (e.phase == SendPhase::kQueued) {
      next = &e;
      break;
    }
  }
  if (next == nullptr || !net_.path_up(qp.fwd)) return;
  next->phase = SendPhase::kTransmitting;
  QpId id = qp.id;
  uint64_t wr_id = next->wr.wr_id;
  if (next->wr.length == 0) {
    next->event = loop_.schedule(loop_.now(), [this, id, wr_id] { on_transmitted(id, wr_id); });
  } else {
    next->flow = net_.start_flow(qp.fwd, next->wr.length, [this, id, wr_id] { on_transmitted(id, wr_id); });
  }
}

void Verbs::on_transmitted(QpId id, uint64_t wr_id) {
  QueuePair &qp = qps_.at(id.value);
  SendEntry *e = find_send(qp, wr_id);
  if (e == nullptr) return;
  e->phase = SendPhase::kInFlight;
  e->flow = FlowId();
  e->event = loop_.schedule_after(qp.fwd_delay, [this, id, wr_id] { on_arrival(id, wr_id); });
  pump(qp);
}

void Verbs::on_arrival(QpId id, uint64_t wr_id) {
  QueuePair &qp = qps_.at(id.value);
  SendEntry *e = find_send(qp, wr_id);
  if (e == nullptr) return;
  e->event = EventHandle{};
  QueuePair &peer = qps_.at(qp.peer.value);
  if (peer.state != QpState::kConnected) {
    // Remote QP is gone: no ack, the entry waits for a local flush.
    e->phase = SendPhase::kAckPending;
    return;
  }
  if (e->wr.direction == WrDirection::kSend) {
    if (peer.recvs.empty()) {
      throw Error(ErrorCode::kReceiverNotReady, "send " + std::to_string(wr_id) + " arrived at QP " +
                                                    std::to_string(peer.id.value) + " with no posted receive");
    }
    WorkRequest recv = peer.recvs.front();
    peer.recvs.pop_front();
    WorkCompletion wc;
    wc.wr_id = recv.wr_id;
    wc.qp = peer.id;
    wc.direction = WrDirection::kRecv;
    wc.status = WcStatus::kSuccess;
    wc.post_time = recv.post_time;
    wc.completion_time = loop_.now();
    wc.bytes = e->wr.length;
    wc.imm = e->wr.imm;
    wc.payload = e->wr.payload;
    push_wc(peer.config.cq, wc);
  }
  if (net_.path_up(qp.rev)) {
    e->phase = SendPhase::kAcking;
    e->event = loop_.schedule_after(qp.rev_delay, [this, id, wr_id] { on_ack(id, wr_id); });
  } else {
    e->phase = SendPhase::kAckPending;
    update_stall(qp);
  }
}

void Verbs::on_ack(QpId id, uint64_t wr_id) {
  QueuePair &qp = qps_.at(id.value);
  for (auto it = qp.sends.begin(); it != qp.sends.end(); ++it) {
    if (it->wr.wr_id != wr_id) continue;
    WorkCompletion wc;
    wc.wr_id = wr_id;
    wc.qp = id;
    wc.direction = it->wr.direction;
    wc.status = WcStatus::kSuccess;
    wc.post_time = it->wr.post_time;
    wc.completion_time = loop_.now();
    wc.bytes = it->wr.length;
    wc.imm = it->wr.imm;
    qp.sends.erase(it);
    push_wc(qp.config.cq, wc);
    update_stall(qp);
    return;
  }
}

void Verbs::update_stall(QueuePair &qp) {
  bool stalled = qp.state == QpState::kConnected && !qp.sends.empty() && !(net_.path_up(qp.fwd) && net_.path_up(qp.rev));
  if (stalled && !qp.retry_timer.valid()) {
    QpId id = qp.id;
    qp.retry_timer = loop_.schedule_after(retry_timeout(id), [this, id] { on_retry_exceeded(id); });
  } else if (!stalled && qp.retry_timer.valid()) {
    loop_.cancel(qp.retry_timer);
    qp.retry_timer = EventHandle{};
  }
}

void Verbs::on_port_change() {
  for (QueuePair &qp : qps_) {
    if (qp.state != QpState::kConnected) continue;
    if (net_.path_up(qp.rev)) {
      for (SendEntry &e : qp.sends) {
        if (e.phase != SendPhase::kAckPending) continue;
        QpId id = qp.id;
        uint64_t wr_id = e.wr.wr_id;
        e.phase = SendPhase::kAcking;
        e.event = loop_.schedule_after(qp.rev_delay, [this, id, wr_id] { on_ack(id, wr_id); });
      }
    }
    pump(qp);
    update_stall(qp);
  }
}

void Verbs::on_retry_exceeded(QpId id) {
  QueuePair &qp = qps_.at(id.value);
  qp.retry_timer = EventHandle{};
  if (qp.state != QpState::kConnected || qp.sends.empty()) return;
  loop_.trace().record(loop_.now(), "retry_exceeded", "qp" + std::to_string(id.value),
                       std::to_string(qp.sends.front().wr.wr_id));
  flush(qp, true);
}

void Verbs::flush(QueuePair &qp, bool first_retry_exceeded) {
  qp.state = QpState::kError;
  if (qp.retry_timer.valid()) {
    loop_.cancel(qp.retry_timer);
    qp.retry_timer = EventHandle{};
  }
  bool first = first_retry_exceeded;
  std::deque<SendEntry> sends;
  sends.swap(qp.sends);
  std::deque<WorkRequest> recvs;
  recvs.swap(qp.recvs);
  for (SendEntry &e : sends) {
    if (e.flow.valid()) net_.abort_flow(e.flow);
    loop_.cancel(e.event);
    WorkCompletion wc;
    wc.wr_id = e.wr.wr_id;
    wc.qp = qp.id;
    wc.direction = e.wr.direction;
    wc.status = first ? WcStatus::kRetryExceeded : WcStatus::kFlushed;
    wc.post_time = e.wr.post_time;
    wc.completion_time = loop_.now();
    wc.imm = e.wr.imm;
    first = false;
    push_wc(qp.config.cq, wc);
  }
  for (const WorkRequest &r : recvs) {
    WorkCompletion wc;
    wc.wr_id = r.wr_id;
    wc.qp = qp.id;
    wc.direction = WrDirection::kRecv;
    wc.status = WcStatus::kFlushed;
    wc.post_time = r.post_time;
    wc.completion_time = loop_.now();
    wc.imm = r.imm;
    push_wc(qp.config.cq, wc);
  }
}

void Verbs::push_wc(CqId cq_id, const WorkCompletion &wc) {
  CompletionQueue &cq = cqs_.at(cq_id.value);
  if (cq.entries.size() >= cq.capacity) {
    throw Error(ErrorCode::kCqOverflow, "completion queue " + std::to_string(cq_id.value) + " overflowed");
  }
  cq.entries.push_back(wc);
  for (VerbsObserver *o : observers_) o->on_completion(wc);
  if (cq.handler && !cq.notify_pending) {
    cq.notify_pending = true;
    loop_.schedule(loop_.now(), [this, cq_id] {
      CompletionQueue &q = cqs_.at(cq_id.value);
      q.notify_pending = false;
      if (q.handler) q.handler();
    });
  }
}

}  // namespace ccsim
