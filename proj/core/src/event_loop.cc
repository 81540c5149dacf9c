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

#include "ccsim/event_loop.h"

#include <sstream>

namespace ccsim {

const char *to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchedulingInPast: return "SchedulingInPast";
    case ErrorCode::kUnknownPort: return "UnknownPort";
    case ErrorCode::kInvalidTopology: return "InvalidTopology";
    case ErrorCode::kInvalidFaultScript: return "InvalidFaultScript";
    case ErrorCode::kQpInErrorState: return "QpInErrorState";
    case ErrorCode::kUnregisteredRegion: return "UnregisteredRegion";
    case ErrorCode::kCqOverflow: return "CqOverflow";
    case ErrorCode::kReceiverNotReady: return "ReceiverNotReady";
    case ErrorCode::kUnknownWr: return "UnknownWr";
    case ErrorCode::kZeroLengthMessage: return "ZeroLengthMessage";
    case ErrorCode::kConnectionFailed: return "ConnectionFailed";
    case ErrorCode::kTargetQpDead: return "TargetQpDead";
    case ErrorCode::kNonPositiveDuration: return "NonPositiveDuration";
    case ErrorCode::kWindowNotFull: return "WindowNotFull";
    case ErrorCode::kInfeasibleRing: return "InfeasibleRing";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kNoSmAvailable: return "NoSmAvailable";
    case ErrorCode::kDependencyCycle: return "DependencyCycle";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kScenarioFailure: return "ScenarioFailure";
  }
  return "Unknown";
}

void Fnv1a::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update_u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (v >> (8 * i)) & 0xff;
    state_ *= 0x100000001b3ULL;
  }
}

void Trace::record(SimTime at, std::string_view kind, std::string_view subject, std::string_view detail) {
  std::string line = std::to_string(at.count());
  line.reserve(line.size() + kind.size() + subject.size() + detail.size() + 3);
  line += ',';
  line += kind;
  line += ',';
  line += subject;
  line += ',';
  line += detail;
  hash_.update(line);
  hash_.update("\n");
  ++count_;
  if (sink_ != nullptr) *sink_ << line << '\n';
  if (retain_) lines_.push_back(std::move(line));
}

EventHandle EventLoop::schedule(SimTime at, Callback fn) {
  if (at < now_) {
    std::ostringstream os;
    os << "event at " << at.count() << "ns precedes clock " << now_.count() << "ns";
    throw Error(ErrorCode::kSchedulingInPast, os.str());
  }
  uint64_t seq = next_seq_++;
  queue_.push(Entry{at, seq});
  callbacks_.emplace(seq, std::move(fn));
  return EventHandle{seq};
}

void EventLoop::cancel(EventHandle h) {
  if (h.valid()) callbacks_.erase(h.seq);
}

bool EventLoop::step(SimTime limit) {
  while (!queue_.empty()) {
    Entry top = queue_.top();
    if (top.at > limit) return false;
    queue_.pop();
    auto it = callbacks_.find(top.seq);
    if (it == callbacks_.end()) continue;
    Callback fn = std::move(it->second);
    callbacks_.erase(it);
    now_ = top.at;
    ++fired_;
    fn();
    return true;
  }
  return false;
}

SimTime EventLoop::run_until(SimTime t) {
  if (t < now_) t = now_;
  stopped_ = false;
  while (!stopped_ && step(t)) {
  }
  if (!stopped_) now_ = t;
  return now_;
}

SimTime EventLoop::run() {
  stopped_ = false;
  while (!stopped_ && step(SimTime::max())) {
  }
  return now_;
}

}  // namespace ccsim
