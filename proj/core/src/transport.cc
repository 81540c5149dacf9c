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

#include "ccsim/transport.h"

#include <algorithm>
#include <sstream>

namespace ccsim {

const char *to_string(PipelineMode m) { return m == PipelineMode::kZeroCopy ? "zero_copy" : "staged_copy"; }

const char *to_string(Role r) { return r == Role::kSender ? "sender" : "receiver"; }

const char *to_string(Action a) {
  switch (a) {
    case Action::kNone: return "none";
    case Action::kProbeSent: return "probe_sent";
    case Action::kTriggerSwitch: return "trigger_switch";
  }
  return "?";
}

SimTime StageCost::for_bytes(Bytes bytes) const {
  SimTime t = fixed;
  if (bytes_per_second > 0) t += serialization_time(bytes, bytes_per_second * 8.0);
  return t;
}

std::vector<std::string> TransferState::check() const {
  std::vector<std::string> out;
  const SenderPointers &s = sender;
  const ReceiverPointers &r = receiver;
  if (!(0 <= s.acked && s.acked <= s.transmitted && s.transmitted <= s.posted && s.posted <= sender_total)) {
    out.push_back("sender pointers out of order");
  }
  if (!(0 <= r.done && r.done <= r.received && r.received <= r.posted && r.posted <= receiver_total)) {
    out.push_back("receiver pointers out of order");
  }
  if (r.done < s.acked) out.push_back("sender acked beyond receiver done");
  return out;
}

void retreat_to_breakpoint(ReceiverPointers &receiver, SenderPointers &sender) {
  receiver.received = receiver.done;
  sender.acked = receiver.done;
  sender.posted = sender.transmitted = sender.acked;
}

int64_t chunk_count(Bytes length, Bytes chunk_size) { return (length + chunk_size - 1) / chunk_size; }

namespace {

// Chunk immediates carry the sender's switch epoch above bit 40.
constexpr int kEpochShift = 40;
uint64_t encode_imm(uint64_t epoch, int64_t chunk) { return (epoch << kEpochShift) | static_cast<uint64_t>(chunk); }
uint64_t imm_epoch(uint64_t imm) { return imm >> kEpochShift; }
int64_t imm_chunk(uint64_t imm) { return static_cast<int64_t>(imm & ((uint64_t{1} << kEpochShift) - 1)); }

Side other(Side s) { return s == Side::kPrimary ? Side::kBackup : Side::kPrimary; }

int idx(Role r) { return r == Role::kSender ? 0 : 1; }
int idx(Side s) { return s == Side::kPrimary ? 0 : 1; }

template <typename M>
size_t find_message(const std::vector<M> &msgs, int64_t chunk) {
  auto it = std::upper_bound(msgs.begin(), msgs.end(), chunk,
                             [](int64_t c, const M &m) { return c < m.first_chunk; });
  return static_cast<size_t>(it - msgs.begin()) - 1;
}

Bytes bytes_of(Bytes length, Bytes chunk_size, int64_t local) {
  return std::min(chunk_size, length - local * chunk_size);
}

}  // namespace

Connection::Connection(Transport &transport, ConnId id, NodeId src, NodeId dst, const TransportConfig &config)
    : transport_(transport), id_(id), src_(src), dst_(dst), config_(config) {
  if (config_.chunk_size <= 0) throw Error(ErrorCode::kInvalidConfig, "chunk size must be positive");
  if (config_.window < 1 || config_.staged_slots < 1) {
    throw Error(ErrorCode::kInvalidConfig, "transport window must be at least 1");
  }
  Verbs &verbs = transport_.verbs_;
  const Topology &topo = verbs.network().topology();
  NodeId ends[2][2];  // [side][0 = src end, 1 = dst end]
  if (topo.node(src).host == topo.node(dst).host) {
    ends[0][0] = src;
    ends[0][1] = dst;
  } else {
    ends[0][0] = topo.primary_nic(src);
    ends[0][1] = topo.primary_nic(dst);
    ends[1][0] = topo.backup_nic(src);
    ends[1][1] = topo.backup_nic(dst);
    has_backup_ = ends[1][0] != ends[0][0] && ends[1][1] != ends[0][1];
  }
  tx_cq_ = verbs.create_cq();
  rx_cq_ = verbs.create_cq();
  SimTime max_delay;
  for (int side = 0; side < (has_backup_ ? 2 : 1); ++side) {
    QpRole role = side == 0 ? QpRole::kPrimary : QpRole::kBackup;
    QpConfig tx{ends[side][0], ends[side][1], role, tx_cq_, config_.timeout_exponent, config_.retry_count};
    QpConfig rx{ends[side][1], ends[side][0], role, rx_cq_, config_.timeout_exponent, config_.retry_count};
    qps_[0][side] = verbs.create_qp(tx);
    qps_[1][side] = verbs.create_qp(rx);
    verbs.connect(qps_[0][side], qps_[1][side]);
    max_delay = std::max({max_delay, verbs.path_delay(qps_[0][side]), verbs.path_delay(qps_[1][side])});
  }
  staging_ = verbs.register_region(src, config_.chunk_size * config_.staged_slots, RegionKind::kChunkBuffer);
  delta_ = config_.delta.count() > 0
               ? config_.delta
               : Verbs::retry_timeout(config_.timeout_exponent, config_.retry_count) + max_delay * 2;
}

QpId Connection::qp(Role role, Side side) const { return qps_[idx(role)][idx(side)]; }

QpId Connection::active_qp(Role role) const {
  return qp(role, role == Role::kSender ? tx_.active : rx_.active);
}

int Connection::recv_window() const { return std::max(config_.window, config_.staged_slots); }

TransferState Connection::state() const {
  TransferState s;
  s.chunk_size = config_.chunk_size;
  s.sender_total = tx_.total;
  s.receiver_total = rx_.total;
  s.sender = tx_.ptr;
  s.receiver = rx_.ptr;
  return s;
}

uint64_t Connection::chunk_payload(const OutMessage &m, int64_t local, Bytes bytes) const {
  Fnv1a h;
  h.update_u64(m.seed);
  h.update_u64(static_cast<uint64_t>(local));
  h.update_u64(static_cast<uint64_t>(bytes));
  return h.digest();
}

size_t Connection::send_message(MrId region, Bytes length, uint64_t content_seed, Callback on_sent) {
  if (length <= 0) throw Error(ErrorCode::kZeroLengthMessage, "message length must be positive");
  if (status_ == ConnStatus::kFailed) throw Error(ErrorCode::kConnectionFailed, "connection failed: " + failure_);
  if (transport_.verbs_.region(region).length < length) {
    throw Error(ErrorCode::kUnregisteredRegion, "message exceeds its source region");
  }
  OutMessage m;
  m.region = region;
  m.length = length;
  m.seed = content_seed;
  m.first_chunk = tx_.total;
  m.chunks = chunk_count(length, config_.chunk_size);
  m.on_done = std::move(on_sent);
  Fnv1a folded;
  for (int64_t i = 0; i < m.chunks; ++i) folded.update_u64(chunk_payload(m, i, bytes_of(length, config_.chunk_size, i)));
  m.digest = folded.digest();
  tx_.total += m.chunks;
  tx_.messages.push_back(std::move(m));
  sender_pump();
  return tx_.messages.size() - 1;
}

size_t Connection::recv_message(MrId region, Bytes length, Callback on_received) {
  if (length <= 0) throw Error(ErrorCode::kZeroLengthMessage, "message length must be positive");
  if (status_ == ConnStatus::kFailed) throw Error(ErrorCode::kConnectionFailed, "connection failed: " + failure_);
  if (transport_.verbs_.region(region).length < length) {
    throw Error(ErrorCode::kUnregisteredRegion, "message exceeds its destination region");
  }
  InMessage m;
  m.region = region;
  m.length = length;
  m.first_chunk = rx_.total;
  m.chunks = chunk_count(length, config_.chunk_size);
  m.on_done = std::move(on_received);
  rx_.total += m.chunks;
  rx_.messages.push_back(std::move(m));
  receiver_pump();
  return rx_.messages.size() - 1;
}

MessageDigest Connection::digest(size_t message) const {
  MessageDigest d;
  if (message < tx_.messages.size()) {
    d.sent = tx_.messages[message].digest;
    d.sender_done = tx_.messages[message].done;
  }
  if (message < rx_.messages.size()) {
    d.received = rx_.messages[message].digest.digest();
    d.receiver_done = rx_.messages[message].done;
  }
  return d;
}

void Connection::log(Role role, const char *event, int64_t chunk) {
  if (!transport_.logging_) return;
  transport_.events_.push_back(TransferEvent{transport_.loop().now(), id_, role, event, chunk});
}

// Sender ------------------------------------------------------------------

void Connection::sender_pump() {
  if (status_ != ConnStatus::kActive || tx_.switching || tx_.preparing) return;
  if (tx_.ptr.posted >= tx_.total) return;
  int limit = config_.mode == PipelineMode::kStagedCopy ? config_.staged_slots : config_.window;
  if (tx_.ptr.posted - tx_.ptr.acked >= limit) return;
  int64_t chunk = tx_.ptr.posted;
  const OutMessage &m = tx_.messages[find_message(tx_.messages, chunk)];
  Bytes bytes = bytes_of(m.length, config_.chunk_size, chunk - m.first_chunk);
  SimTime cost = config_.costs.preparation.for_bytes(bytes);
  if (config_.mode == PipelineMode::kStagedCopy) cost += config_.costs.buffer_copy.for_bytes(bytes);
  tx_.preparing = true;
  uint64_t epoch = tx_.epoch;
  tx_.prep_event = transport_.loop().schedule_after(cost, [this, chunk, epoch] {
    if (epoch != tx_.epoch) return;
    sender_prepared(chunk);
  });
}

void Connection::sender_prepared(int64_t chunk) {
  tx_.preparing = false;
  tx_.prep_event = EventHandle{};
  tx_.ptr.posted = chunk + 1;
  log(Role::kSender, "post", chunk);
  if (transport_.verbs_.state(active_qp(Role::kSender)) == QpState::kConnected) sender_transmit(chunk);
  sender_pump();
}

void Connection::sender_transmit(int64_t chunk) {
  const OutMessage &m = tx_.messages[find_message(tx_.messages, chunk)];
  int64_t local = chunk - m.first_chunk;
  Bytes bytes = bytes_of(m.length, config_.chunk_size, local);
  Verbs &verbs = transport_.verbs_;
  WorkRequest wr;
  wr.wr_id = verbs.next_wr_id();
  wr.direction = WrDirection::kSend;
  if (config_.mode == PipelineMode::kStagedCopy) {
    wr.region = staging_;
    wr.offset = (chunk % config_.staged_slots) * config_.chunk_size;
  } else {
    wr.region = m.region;
    wr.offset = local * config_.chunk_size;
  }
  wr.length = bytes;
  wr.imm = encode_imm(tx_.epoch, chunk);
  wr.payload = chunk_payload(m, local, bytes);
  verbs.post_send(active_qp(Role::kSender), wr);
  tx_.inflight.emplace_back(wr.wr_id, chunk);
  tx_.ptr.transmitted = chunk + 1;
  log(Role::kSender, "transmit", chunk);
}

void Connection::sender_complete_messages() {
  std::vector<Callback> ready;
  while (tx_.next_message < tx_.messages.size()) {
    OutMessage &m = tx_.messages[tx_.next_message];
    if (m.first_chunk + m.chunks > tx_.ptr.acked) break;
    m.done = true;
    if (m.on_done) ready.push_back(std::move(m.on_done));
    ++tx_.next_message;
  }
  for (Callback &cb : ready) cb();
}

Action Connection::on_sender_wc(const WorkCompletion &wc) {
  if (wc.status == WcStatus::kFlushed) return Action::kNone;
  if (wc.status == WcStatus::kRetryExceeded) return Action::kTriggerSwitch;
  if (tx_.inflight.empty() || tx_.inflight.front().first != wc.wr_id) {
    throw Error(ErrorCode::kUnknownWr, "completion for unknown or duplicate work request " + std::to_string(wc.wr_id));
  }
  int64_t chunk = tx_.inflight.front().second;
  tx_.inflight.pop_front();
  tx_.ptr.acked = chunk + 1;
  log(Role::kSender, "ack", chunk);
  if (transport_.on_ack_) transport_.on_ack_(id_, wc.bytes, wc.completion_time);
  sender_complete_messages();
  sender_pump();
  return Action::kNone;
}

void Connection::sender_request_switch() {
  if (status_ == ConnStatus::kFailed || tx_.switching) return;
  if (!config_.failover || !has_backup_) {
    fail("retry count exceeded with failover unavailable");
    return;
  }
  tx_.switching = true;
  transport_.loop().cancel(tx_.prep_event);
  tx_.preparing = false;
  tx_.inflight.clear();
  tx_.wait_since = SimTime::max();
  sender_send_request();
}

// Asks the receiver to move to the other pair, or back onto the same one when only
// that path is alive again.
void Connection::sender_send_request() {
  tx_.retry = EventHandle{};
  if (status_ == ConnStatus::kFailed || !tx_.switching) return;
  Verbs &verbs = transport_.verbs_;
  Side target = other(tx_.active);
  if (!verbs.path_up(qp(Role::kSender, target)) && verbs.path_up(qp(Role::kSender, tx_.active))) target = tx_.active;
  if (!verbs.path_up(qp(Role::kSender, target))) {
    if (!keep_waiting(tx_.wait_since)) {
      fail("both QP paths are down");
      return;
    }
    tx_.retry = transport_.loop().schedule_after(config_.probe_period, [this] { sender_send_request(); });
    return;
  }
  uint64_t epoch = tx_.epoch;
  verbs.send_control(
      qp(Role::kSender, target),
      [this, epoch, target] {
        if (status_ == ConnStatus::kFailed || rx_.epoch != epoch) return;
        receiver_recover(target);
      },
      [this] { fail("both QP paths are down"); });
}

bool Connection::keep_waiting(SimTime &since) {
  SimTime now = transport_.loop().now();
  if (since == SimTime::max()) since = now;
  return now - since < config_.path_wait;
}

void Connection::sender_apply_push(uint64_t epoch, int64_t done, Side target) {
  if (status_ == ConnStatus::kFailed || epoch <= tx_.epoch) return;
  Verbs &verbs = transport_.verbs_;
  tx_.epoch = epoch;
  // Flushing the active pair too drops stale sends when the switch lands on the same side.
  verbs.to_error(qp(Role::kSender, tx_.active));
  if (verbs.state(qp(Role::kSender, target)) == QpState::kError) verbs.reset(qp(Role::kSender, target));
  transport_.loop().cancel(tx_.prep_event);
  tx_.preparing = false;
  tx_.inflight.clear();
  int64_t before = tx_.ptr.acked;
  tx_.ptr.acked = done;
  tx_.ptr.posted = tx_.ptr.transmitted = tx_.ptr.acked;
  tx_.active = target;
  tx_.switching = false;
  transport_.loop().cancel(tx_.retry);
  tx_.retry = EventHandle{};
  tx_.wait_since = SimTime::max();
  log(Role::kSender, target == Side::kPrimary ? "switch_to_primary" : "switch_to_backup", done);
  if (transport_.on_ack_ && done > before) {
    Bytes bytes = 0;
    for (int64_t c = before; c < done; ++c) {
      const OutMessage &m = tx_.messages[find_message(tx_.messages, c)];
      bytes += bytes_of(m.length, config_.chunk_size, c - m.first_chunk);
    }
    transport_.on_ack_(id_, bytes, transport_.loop().now());
  }
  sender_complete_messages();
  sender_pump();
}

void Connection::dispatch_sender() {
  Verbs &verbs = transport_.verbs_;
  for (;;) {
    auto wcs = verbs.poll_cq(tx_cq_, 64);
    if (wcs.empty()) return;
    for (const WorkCompletion &wc : wcs) {
      if (status_ == ConnStatus::kFailed || wc.qp != active_qp(Role::kSender) || tx_.switching) continue;
      if (on_sender_wc(wc) == Action::kTriggerSwitch) sender_request_switch();
    }
  }
}

// Receiver ----------------------------------------------------------------

void Connection::receiver_pump() {
  if (status_ == ConnStatus::kFailed) return;
  Verbs &verbs = transport_.verbs_;
  QpId q = active_qp(Role::kReceiver);
  while (rx_.ptr.received < rx_.total && rx_.ptr.received - rx_.ptr.done < recv_window() &&
         verbs.state(q) == QpState::kConnected) {
    int64_t chunk = rx_.ptr.received;
    const InMessage &m = rx_.messages[find_message(rx_.messages, chunk)];
    int64_t local = chunk - m.first_chunk;
    WorkRequest wr;
    wr.wr_id = verbs.next_wr_id();
    wr.direction = WrDirection::kRecv;
    wr.region = m.region;
    wr.offset = local * config_.chunk_size;
    wr.length = bytes_of(m.length, config_.chunk_size, local);
    wr.imm = static_cast<uint64_t>(chunk);
    verbs.post_recv(q, wr);
    rx_.outstanding.emplace_back(wr.wr_id, transport_.loop().now());
    rx_.ptr.posted = rx_.ptr.received = chunk + 1;
    log(Role::kReceiver, "recv", chunk);
  }
  receiver_arm_timer();
}

void Connection::receiver_arm_timer() {
  EventLoop &loop = transport_.loop();
  loop.cancel(rx_.timer);
  rx_.timer = EventHandle{};
  if (status_ == ConnStatus::kFailed || rx_.outstanding.empty() || rx_.cts_wr != 0) return;
  SimTime ref = std::max(rx_.outstanding.front().second, rx_.last_progress);
  SimTime at = std::max(ref + delta_ + SimTime(1), loop.now());
  rx_.timer = loop.schedule(at, [this] {
    rx_.timer = EventHandle{};
    check_receiver_timeout(transport_.loop().now());
  });
}

Action Connection::check_receiver_timeout(SimTime now) {
  if (status_ == ConnStatus::kFailed || rx_.outstanding.empty() || rx_.cts_wr != 0) return Action::kNone;
  SimTime ref = std::max(rx_.outstanding.front().second, rx_.last_progress);
  if (now - ref <= delta_) {
    receiver_arm_timer();
    return Action::kNone;
  }
  Verbs &verbs = transport_.verbs_;
  QpId q = active_qp(Role::kReceiver);
  if (verbs.state(q) != QpState::kConnected) return Action::kNone;
  WorkRequest cts;
  cts.wr_id = verbs.next_wr_id();
  cts.direction = WrDirection::kCts;
  verbs.post_send(q, cts);
  rx_.cts_wr = cts.wr_id;
  log(Role::kReceiver, "cts_probe", rx_.ptr.done);
  return Action::kProbeSent;
}

void Connection::receiver_complete_messages() {
  std::vector<Callback> ready;
  while (rx_.next_message < rx_.messages.size()) {
    InMessage &m = rx_.messages[rx_.next_message];
    if (m.first_chunk + m.chunks > rx_.ptr.done) break;
    m.done = true;
    if (m.on_done) ready.push_back(std::move(m.on_done));
    ++rx_.next_message;
  }
  for (Callback &cb : ready) cb();
}

Action Connection::on_receiver_wc(const WorkCompletion &wc) {
  if (wc.status == WcStatus::kFlushed) return Action::kNone;
  if (wc.direction == WrDirection::kCts) {
    if (rx_.cts_wr == 0 || wc.wr_id != rx_.cts_wr) {
      throw Error(ErrorCode::kUnknownWr, "completion for unknown probe " + std::to_string(wc.wr_id));
    }
    rx_.cts_wr = 0;
    if (wc.status == WcStatus::kRetryExceeded) {
      log(Role::kReceiver, "cts_fail", rx_.ptr.done);
      return Action::kTriggerSwitch;
    }
    log(Role::kReceiver, "cts_ok", rx_.ptr.done);
    rx_.last_progress = wc.completion_time;
    receiver_arm_timer();
    return Action::kNone;
  }
  if (wc.status == WcStatus::kRetryExceeded) return Action::kTriggerSwitch;
  if (rx_.outstanding.empty() || rx_.outstanding.front().first != wc.wr_id) {
    throw Error(ErrorCode::kUnknownWr, "completion for unknown or duplicate work request " + std::to_string(wc.wr_id));
  }
  rx_.outstanding.pop_front();
  if (imm_epoch(wc.imm) != rx_.epoch) {
    // Sent before the sender learned of the last switch; the breakpoint push makes it resend.
    log(Role::kReceiver, "stale", imm_chunk(wc.imm));
    rx_.ptr.posted = rx_.ptr.received = rx_.ptr.done + static_cast<int64_t>(rx_.outstanding.size());
    receiver_pump();
    return Action::kNone;
  }
  int64_t chunk = imm_chunk(wc.imm);
  rx_.delivered.push_back(chunk);
  rx_.messages[find_message(rx_.messages, rx_.ptr.done)].digest.update_u64(wc.payload);
  log(Role::kReceiver, "done", rx_.ptr.done);
  ++rx_.ptr.done;
  rx_.last_progress = wc.completion_time;
  receiver_complete_messages();
  receiver_pump();
  return Action::kNone;
}

void Connection::switch_qp(SwitchDirection direction) {
  receiver_switch(direction == SwitchDirection::kToBackup ? Side::kBackup : Side::kPrimary);
}

void Connection::receiver_switch(Side target) {
  if (status_ == ConnStatus::kFailed) return;
  if (!has_backup_) {
    fail("no backup QP available");
    return;
  }
  Verbs &verbs = transport_.verbs_;
  EventLoop &loop = transport_.loop();
  QpId target_qp = qp(Role::kReceiver, target);
  if (!verbs.path_up(target_qp)) {
    loop.trace().record(loop.now(), "target_qp_dead", "conn" + std::to_string(id_.value), "");
    fail("target QP path is down");
    return;
  }
  verbs.to_error(qp(Role::kReceiver, rx_.active));
  if (verbs.state(target_qp) == QpState::kError) verbs.reset(target_qp);
  loop.cancel(rx_.retry);
  rx_.retry = EventHandle{};
  rx_.wait_since = SimTime::max();
  ++rx_.epoch;
  ++switches_;
  rx_.active = target;
  rx_.ptr.received = rx_.ptr.posted = rx_.ptr.done;
  rx_.outstanding.clear();
  rx_.cts_wr = 0;
  rx_.last_progress = loop.now();
  const char *event = target == Side::kPrimary ? "switch_to_primary" : "switch_to_backup";
  log(Role::kReceiver, event, rx_.ptr.done);
  loop.trace().record(loop.now(), event, "conn" + std::to_string(id_.value), std::to_string(rx_.ptr.done));
  if (transport_.on_switch_) transport_.on_switch_(id_, target, loop.now());
  if (target == Side::kBackup) {
    monitor_failed_link();
  } else {
    loop.cancel(rx_.probe);
    rx_.probe = EventHandle{};
  }
  receiver_pump();
  uint64_t epoch = rx_.epoch;
  int64_t done = rx_.ptr.done;
  verbs.send_control(
      target_qp, [this, epoch, done, target] { sender_apply_push(epoch, done, target); },
      [this] { fail("lost breakpoint push"); });
}

void Connection::receiver_recover(Side preferred) {
  rx_.retry = EventHandle{};
  if (status_ == ConnStatus::kFailed) return;
  Verbs &verbs = transport_.verbs_;
  for (Side side : {preferred, other(preferred)}) {
    if (verbs.path_up(qp(Role::kReceiver, side))) {
      receiver_switch(side);
      return;
    }
  }
  if (!keep_waiting(rx_.wait_since)) {
    fail("both QP paths are down");
    return;
  }
  if (!rx_.retry.valid()) {
    rx_.retry = transport_.loop().schedule_after(config_.probe_period, [this, preferred] { receiver_recover(preferred); });
  }
}

void Connection::monitor_failed_link() {
  if (status_ == ConnStatus::kFailed || rx_.active != Side::kBackup) return;
  EventLoop &loop = transport_.loop();
  loop.cancel(rx_.probe);
  rx_.probe = loop.schedule_after(config_.probe_period, [this] {
    rx_.probe = EventHandle{};
    receiver_probe_tick();
  });
}

void Connection::receiver_probe_tick() {
  if (status_ == ConnStatus::kFailed || rx_.active != Side::kBackup) return;
  if (transport_.verbs_.path_up(qp(Role::kReceiver, Side::kPrimary))) {
    switch_qp(SwitchDirection::kToPrimary);
  } else {
    monitor_failed_link();
  }
}

void Connection::dispatch_receiver() {
  Verbs &verbs = transport_.verbs_;
  for (;;) {
    auto wcs = verbs.poll_cq(rx_cq_, 64);
    if (wcs.empty()) return;
    for (const WorkCompletion &wc : wcs) {
      if (status_ == ConnStatus::kFailed || wc.qp != active_qp(Role::kReceiver)) continue;
      if (on_receiver_wc(wc) != Action::kTriggerSwitch) continue;
      if (config_.failover && has_backup_) {
        receiver_recover(other(rx_.active));
      } else {
        fail("clear-to-send probe failed with failover unavailable");
      }
    }
  }
}

void Connection::fail(const std::string &reason) {
  if (status_ == ConnStatus::kFailed) return;
  status_ = ConnStatus::kFailed;
  failure_ = reason;
  EventLoop &loop = transport_.loop();
  loop.cancel(tx_.prep_event);
  loop.cancel(rx_.timer);
  loop.cancel(rx_.probe);
  loop.cancel(rx_.retry);
  loop.cancel(tx_.retry);
  tx_.preparing = false;
  Verbs &verbs = transport_.verbs_;
  for (int side = 0; side < (has_backup_ ? 2 : 1); ++side) {
    verbs.to_error(qps_[0][side]);
    verbs.to_error(qps_[1][side]);
  }
  loop.trace().record(loop.now(), "connection_failed", "conn" + std::to_string(id_.value), reason);
  if (transport_.on_failure_) transport_.on_failure_(id_, reason);
}

// Transport ---------------------------------------------------------------

Connection &Transport::connect(NodeId src_gpu, NodeId dst_gpu, const TransportConfig &config) {
  ConnId id(static_cast<int32_t>(conns_.size()));
  conns_.push_back(std::unique_ptr<Connection>(new Connection(*this, id, src_gpu, dst_gpu, config)));
  Connection *c = conns_.back().get();
  verbs_.set_cq_handler(c->tx_cq_, [c] { c->dispatch_sender(); });
  verbs_.set_cq_handler(c->rx_cq_, [c] { c->dispatch_receiver(); });
  return *c;
}

std::string Transport::events_csv() const {
  std::ostringstream os;
  os << "time_ns,conn_id,role,event,chunk_index\n";
  for (const TransferEvent &e : events_) {
    os << e.time.count() << ',' << e.conn.value << ',' << to_string(e.role) << ',' << e.event << ',' << e.chunk
       << '\n';
  }
  return os.str();
}

}  // namespace ccsim
