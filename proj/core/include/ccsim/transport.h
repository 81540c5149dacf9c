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

#ifndef CCSIM_TRANSPORT_H_
#define CCSIM_TRANSPORT_H_

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/event_loop.h"
#include "ccsim/verbs.h"

namespace ccsim {

enum class PipelineMode { kStagedCopy, kZeroCopy };
enum class Stage { kDataPreparation, kBufferCopy, kTransmission };
enum class Role { kSender, kReceiver };
enum class Side { kPrimary, kBackup };
enum class SwitchDirection { kToBackup, kToPrimary };
enum class Action { kNone, kProbeSent, kTriggerSwitch };
enum class ConnStatus { kActive, kSwitching, kFailed };

const char *to_string(PipelineMode m);
const char *to_string(Role r);
const char *to_string(Action a);

/// Duration of a stage for a chunk: fixed + bytes / bytes_per_second (rate 0 means no
/// per-byte term).
struct StageCost {
  SimTime fixed;
  double bytes_per_second = 0;

  SimTime for_bytes(Bytes bytes) const;
};

struct StageCosts {
  StageCost preparation;
  StageCost buffer_copy;  // unused in ZeroCopy
};

struct TransportConfig {
  Bytes chunk_size = 4 * MiB;
  PipelineMode mode = PipelineMode::kZeroCopy;
  StageCosts costs;
  int window = 4;        // chunks in flight per direction in ZeroCopy
  int staged_slots = 1;  // chunk-buffer slots in StagedCopy
  bool failover = true;
  SimTime probe_period = SimTime::ms(500);
  SimTime delta;  // receiver switch timeout; zero selects retry_timeout + 2 x path delay
  int timeout_exponent = 18;
  int retry_count = 7;
  // How long a side keeps re-checking (every probe_period) when both paths are down;
  // zero fails the connection immediately.
  SimTime path_wait;
};

struct SenderPointers {
  int64_t posted = 0;
  int64_t transmitted = 0;
  int64_t acked = 0;
};

struct ReceiverPointers {
  int64_t posted = 0;
  int64_t received = 0;
  int64_t done = 0;
};

struct TransferState {
  Bytes chunk_size = 0;
  int64_t sender_total = 0;    // chunks enqueued by the sender
  int64_t receiver_total = 0;  // chunks the receiver expects
  SenderPointers sender;
  ReceiverPointers receiver;

  /// Violated ordering constraints; empty when consistent.
  std::vector<std::string> check() const;
};

/// Breakpoint agreement applied by a QP switch: receiver.received := done, then
/// sender.acked := done and sender.posted := sender.transmitted := acked.
void retreat_to_breakpoint(ReceiverPointers &receiver, SenderPointers &sender);

int64_t chunk_count(Bytes length, Bytes chunk_size);

struct TransferEvent {
  SimTime time;
  ConnId conn;
  Role role = Role::kSender;
  std::string event;
  int64_t chunk = -1;
};

struct MessageDigest {
  uint64_t sent = 0;
  uint64_t received = 0;
  bool sender_done = false;
  bool receiver_done = false;
};

class Transport;

/// One directed sender->receiver connection with a primary and (for inter-host peers) a
/// backup QP pair. Sender and receiver state are kept apart and talk only through verbs.
class Connection {
 public:
  using Callback = std::function<void()>;

  ConnId id() const { return id_; }
  NodeId src() const { return src_; }
  NodeId dst() const { return dst_; }
  bool has_backup() const { return has_backup_; }
  Side sender_active() const { return tx_.active; }
  Side receiver_active() const { return rx_.active; }
  ConnStatus status() const { return status_; }
  const std::string &failure() const { return failure_; }
  const TransportConfig &config() const { return config_; }
  TransferState state() const;
  SimTime delta() const { return delta_; }
  QpId qp(Role role, Side side) const;
  int switch_count() const { return switches_; }

  /// Sender side. `on_sent` fires when every chunk of the message is acked.
  size_t send_message(MrId region, Bytes length, uint64_t content_seed, Callback on_sent = nullptr);
  /// Receiver side. `on_received` fires when every chunk is done.
  size_t recv_message(MrId region, Bytes length, Callback on_received = nullptr);
  MessageDigest digest(size_t message) const;
  size_t sent_message_count() const { return tx_.messages.size(); }
  /// Chunk indices in delivery order.
  const std::vector<int64_t> &delivered() const { return rx_.delivered; }

  Action on_sender_wc(const WorkCompletion &wc);
  Action on_receiver_wc(const WorkCompletion &wc);
  /// Receiver-side stall check; posts a CTS probe when the reference time is older than delta.
  Action check_receiver_timeout(SimTime now);
  /// Receiver-driven switch of the active QP pair.
  void switch_qp(SwitchDirection direction);
  /// Starts periodic probing of the primary path while running on the backup.
  void monitor_failed_link();

 private:
  friend class Transport;

  struct OutMessage {
    MrId region;
    Bytes length = 0;
    uint64_t seed = 0;
    int64_t first_chunk = 0;
    int64_t chunks = 0;
    uint64_t digest = 0;
    bool done = false;
    Callback on_done;
  };

  struct InMessage {
    MrId region;
    Bytes length = 0;
    int64_t first_chunk = 0;
    int64_t chunks = 0;
    Fnv1a digest;
    bool done = false;
    Callback on_done;
  };

  struct SenderSide {
    SenderPointers ptr;
    Side active = Side::kPrimary;
    std::vector<OutMessage> messages;
    int64_t total = 0;
    bool preparing = false;
    EventHandle prep_event;
    bool switching = false;
    SimTime wait_since = SimTime::max();  // both paths seen down
    EventHandle retry;
    uint64_t epoch = 0;  // last applied switch epoch
    std::deque<std::pair<uint64_t, int64_t>> inflight;  // wr_id -> chunk, post order
    size_t next_message = 0;
  };

  struct ReceiverSide {
    ReceiverPointers ptr;
    Side active = Side::kPrimary;
    std::vector<InMessage> messages;
    int64_t total = 0;
    std::deque<std::pair<uint64_t, SimTime>> outstanding;  // wr_id, post time
    std::vector<int64_t> delivered;
    SimTime last_progress;
    EventHandle timer;
    uint64_t cts_wr = 0;
    EventHandle probe;
    EventHandle retry;
    SimTime wait_since = SimTime::max();
    uint64_t epoch = 0;
    size_t next_message = 0;
  };

  Connection(Transport &transport, ConnId id, NodeId src, NodeId dst, const TransportConfig &config);

  uint64_t chunk_payload(const OutMessage &m, int64_t local, Bytes bytes) const;

  void sender_pump();
  void sender_prepared(int64_t chunk);
  void sender_transmit(int64_t chunk);
  void sender_complete_messages();
  void sender_request_switch();
  void sender_send_request();
  void sender_apply_push(uint64_t epoch, int64_t done, Side target);

  void receiver_pump();
  void receiver_arm_timer();
  void receiver_complete_messages();
  void receiver_switch(Side target);
  void receiver_recover(Side preferred);
  /// Starts or continues a both-paths-down wait; false once the budget is spent.
  bool keep_waiting(SimTime &since);
  void receiver_probe_tick();

  void dispatch_sender();
  void dispatch_receiver();
  void fail(const std::string &reason);
  void log(Role role, const char *event, int64_t chunk);
  QpId active_qp(Role role) const;
  int recv_window() const;

  Transport &transport_;
  ConnId id_;
  NodeId src_;
  NodeId dst_;
  TransportConfig config_;
  bool has_backup_ = false;
  QpId qps_[2][2];  // [role][side]
  CqId tx_cq_;
  CqId rx_cq_;
  MrId staging_;  // sender chunk buffer (StagedCopy)
  SimTime delta_;
  ConnStatus status_ = ConnStatus::kActive;
  std::string failure_;
  int switches_ = 0;
  SenderSide tx_;
  ReceiverSide rx_;
};

/// Owns connections over a shared verbs layer and an optional per-chunk event log.
class Transport {
 public:
  using FailureHandler = std::function<void(ConnId, const std::string &)>;
  using AckListener = std::function<void(ConnId, Bytes bytes, SimTime at)>;
  using SwitchListener = std::function<void(ConnId, Side target, SimTime at)>;

  explicit Transport(Verbs &verbs) : verbs_(verbs) {}
  Transport(const Transport &) = delete;
  Transport &operator=(const Transport &) = delete;

  /// Connection from `src_gpu` to `dst_gpu`: NVLink inside a host, otherwise primary and
  /// backup NIC ports chosen by PCIe distance.
  Connection &connect(NodeId src_gpu, NodeId dst_gpu, const TransportConfig &config);
  Connection &connection(ConnId id) { return *conns_.at(id.value); }
  size_t connection_count() const { return conns_.size(); }
  MrId register_buffer(NodeId gpu, Bytes length) { return verbs_.register_region(gpu, length); }

  void set_failure_handler(FailureHandler h) { on_failure_ = std::move(h); }
  void set_ack_listener(AckListener l) { on_ack_ = std::move(l); }
  /// Called when a receiver moves a connection to another QP pair.
  void set_switch_listener(SwitchListener l) { on_switch_ = std::move(l); }
  void set_logging(bool on) { logging_ = on; }
  const std::vector<TransferEvent> &events() const { return events_; }
  std::string events_csv() const;

  Verbs &verbs() { return verbs_; }
  EventLoop &loop() { return verbs_.loop(); }

 private:
  friend class Connection;

  Verbs &verbs_;
  std::vector<std::unique_ptr<Connection>> conns_;
  FailureHandler on_failure_;
  AckListener on_ack_;
  SwitchListener on_switch_;
  bool logging_ = false;
  std::vector<TransferEvent> events_;
};

}  // namespace ccsim

#endif  // CCSIM_TRANSPORT_H_
