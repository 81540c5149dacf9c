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

#ifndef CCSIM_VERBS_H_
#define CCSIM_VERBS_H_

#include <deque>
#include <functional>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/event_loop.h"
#include "ccsim/network.h"

namespace ccsim {

enum class RegionKind { kApplicationBuffer, kChunkBuffer };
enum class WrDirection { kSend, kRecv, kCts };
enum class WcStatus { kSuccess, kRetryExceeded, kFlushed };
enum class QpRole { kPrimary, kBackup };
enum class QpState { kInit, kConnected, kError };

const char *to_string(WcStatus s);
const char *to_string(QpState s);

struct MemoryRegion {
  MrId id;
  NodeId owner;
  Bytes length = 0;
  RegionKind kind = RegionKind::kApplicationBuffer;
  bool registered = false;
};

struct WorkRequest {
  uint64_t wr_id = 0;
  WrDirection direction = WrDirection::kSend;
  MrId region;
  Bytes offset = 0;
  Bytes length = 0;
  uint64_t imm = 0;      // carried to the receiver's completion
  uint64_t payload = 0;  // digest of the simulated bytes, carried like imm
  SimTime post_time;     // stamped by post_send/post_recv
};

struct WorkCompletion {
  uint64_t wr_id = 0;
  QpId qp;
  WrDirection direction = WrDirection::kSend;
  WcStatus status = WcStatus::kSuccess;
  SimTime post_time;
  SimTime completion_time;
  Bytes bytes = 0;
  uint64_t imm = 0;
  uint64_t payload = 0;
};

struct QpConfig {
  NodeId local;
  NodeId remote;
  QpRole role = QpRole::kPrimary;
  CqId cq;
  int timeout_exponent = 18;
  int retry_count = 7;
};

/// Passive hook on verb activity; must not schedule events or mutate verbs state.
class VerbsObserver {
 public:
  virtual ~VerbsObserver() = default;
  virtual void on_post(QpId, const WorkRequest &) {}
  virtual void on_completion(const WorkCompletion &) {}
};

struct QueuePairInfo {
  QpId id;
  QpConfig config;
  QpState state = QpState::kInit;
  QpId peer;
  size_t outstanding_sends = 0;
  size_t outstanding_recvs = 0;
};

/// Simulated RC verbs over the fluid network. Sends on one QP go on the wire one at a time
/// in post order; a Success completion is generated when the remote ack arrives.
class Verbs {
 public:
  Verbs(EventLoop &loop, Network &net);
  Verbs(const Verbs &) = delete;
  Verbs &operator=(const Verbs &) = delete;

  MrId register_region(NodeId owner, Bytes length, RegionKind kind = RegionKind::kApplicationBuffer);
  void deregister_region(MrId id);
  const MemoryRegion &region(MrId id) const { return regions_.at(id.value); }

  CqId create_cq(size_t capacity = 4096);
  /// `handler` runs (as its own event) after completions are pushed to the CQ.
  void set_cq_handler(CqId cq, std::function<void()> handler);
  std::vector<WorkCompletion> poll_cq(CqId cq, int max);
  size_t cq_depth(CqId cq) const { return cqs_.at(cq.value).entries.size(); }

  QpId create_qp(const QpConfig &config);
  /// Connects two QPs back to back; both move to Connected.
  void connect(QpId a, QpId b);
  /// Flushes outstanding work with Flushed completions and moves the QP to Error.
  void to_error(QpId id);
  /// Error -> Connected, keeping the peer association.
  void reset(QpId id);

  void post_send(QpId id, WorkRequest wr);
  void post_recv(QpId id, WorkRequest wr);

  /// Zero-payload out-of-band message along the QP path: `on_arrival` fires one path delay
  /// later when the path is up now, otherwise `on_lost` fires immediately.
  void send_control(QpId via, std::function<void()> on_arrival, std::function<void()> on_lost);

  QueuePairInfo info(QpId id) const;
  QpState state(QpId id) const { return qps_.at(id.value).state; }
  bool path_up(QpId id) const;
  SimTime path_delay(QpId id) const { return qps_.at(id.value).fwd_delay; }
  const std::vector<LinkId> &path(QpId id) const { return qps_.at(id.value).fwd; }

  SimTime retry_timeout(QpId id) const;
  /// (4.096us * 2^exponent) * (retries + 1).
  static SimTime retry_timeout(int exponent, int retries);

  uint64_t next_wr_id() { return next_wr_id_++; }
  void add_observer(VerbsObserver *observer) { observers_.push_back(observer); }

  EventLoop &loop() { return loop_; }
  Network &network() { return net_; }

 private:
  enum class SendPhase { kQueued, kTransmitting, kInFlight, kAckPending, kAcking };

  struct SendEntry {
    WorkRequest wr;
    SendPhase phase = SendPhase::kQueued;
    FlowId flow;
    EventHandle event;
  };

  struct CompletionQueue {
    std::deque<WorkCompletion> entries;
    size_t capacity = 4096;
    std::function<void()> handler;
    bool notify_pending = false;
  };

  struct QueuePair {
    QpId id;
    QpConfig config;
    QpState state = QpState::kInit;
    QpId peer;
    std::vector<LinkId> fwd;
    std::vector<LinkId> rev;
    SimTime fwd_delay;
    SimTime rev_delay;
    std::deque<SendEntry> sends;
    std::deque<WorkRequest> recvs;
    EventHandle retry_timer;
  };

  void check_region(const WorkRequest &wr) const;
  void pump(QueuePair &qp);
  void on_transmitted(QpId id, uint64_t wr_id);
  void on_arrival(QpId id, uint64_t wr_id);
  void on_ack(QpId id, uint64_t wr_id);
  void on_retry_exceeded(QpId id);
  void on_port_change();
  void update_stall(QueuePair &qp);
  void flush(QueuePair &qp, bool first_retry_exceeded);
  SendEntry *find_send(QueuePair &qp, uint64_t wr_id);
  void push_wc(CqId cq, const WorkCompletion &wc);

  EventLoop &loop_;
  Network &net_;
  std::vector<MemoryRegion> regions_;
  std::deque<CompletionQueue> cqs_;
  std::deque<QueuePair> qps_;
  std::vector<VerbsObserver *> observers_;
  uint64_t next_wr_id_ = 1;
};

}  // namespace ccsim

#endif  // CCSIM_VERBS_H_
