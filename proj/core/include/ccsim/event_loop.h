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

#ifndef CCSIM_EVENT_LOOP_H_
#define CCSIM_EVENT_LOOP_H_

#include <cstdint>
#include <functional>
#include <ostream>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ccsim/common.h"

namespace ccsim {

/// 64-bit FNV-1a, used for trace hashes and payload checksums.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update_u64(uint64_t v);
  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Line-oriented event trace: `time_ns,event_kind,subject,detail`.
class Trace {
 public:
  void record(SimTime at, std::string_view kind, std::string_view subject, std::string_view detail);

  /// Keep records in memory (off by default; the hash is always maintained).
  void set_retain(bool retain) { retain_ = retain; }
  void set_sink(std::ostream *sink) { sink_ = sink; }

  const std::vector<std::string> &lines() const { return lines_; }
  uint64_t hash() const { return hash_.digest(); }
  uint64_t size() const { return count_; }

 private:
  bool retain_ = false;
  std::ostream *sink_ = nullptr;
  std::vector<std::string> lines_;
  Fnv1a hash_;
  uint64_t count_ = 0;
};

struct EventHandle {
  uint64_t seq = 0;
  bool valid() const { return seq != 0; }
};

/// Deterministic discrete-event loop. Events at equal timestamps fire in insertion order.
class EventLoop {
 public:
  using Callback = std::function<void()>;

  SimTime now() const { return now_; }

  /// Throws Error(kSchedulingInPast) when `at` precedes the current clock.
  EventHandle schedule(SimTime at, Callback fn);
  EventHandle schedule_after(SimTime delay, Callback fn) { return schedule(now_ + delay, std::move(fn)); }
  void cancel(EventHandle h);

  /// Processes every event with time <= t and leaves the clock at t.
  SimTime run_until(SimTime t);
  /// Runs until the queue drains or `stop()` is called.
  SimTime run();
  void stop() { stopped_ = true; }

  bool empty() const { return callbacks_.empty(); }
  uint64_t fired() const { return fired_; }

  Trace &trace() { return trace_; }

 private:
  struct Entry {
    SimTime at;
    uint64_t seq;
    bool operator>(const Entry &o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  bool step(SimTime limit);

  SimTime now_;
  uint64_t next_seq_ = 1;
  uint64_t fired_ = 0;
  bool stopped_ = false;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  std::unordered_map<uint64_t, Callback> callbacks_;
  Trace trace_;
};

}  // namespace ccsim

#endif  // CCSIM_EVENT_LOOP_H_
