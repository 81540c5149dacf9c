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

#ifndef CCSIM_COMMON_H_
#define CCSIM_COMMON_H_

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace ccsim {

/// Simulated time (and durations) in integer nanoseconds.
class SimTime {
 public:
  constexpr SimTime() = default;
  constexpr explicit SimTime(int64_t ns) : ns_(ns) {}

  static constexpr SimTime ns(int64_t v) { return SimTime(v); }
  static constexpr SimTime us(double v) { return SimTime(round(v * 1e3)); }
  static constexpr SimTime ms(double v) { return SimTime(round(v * 1e6)); }
  static constexpr SimTime s(double v) { return SimTime(round(v * 1e9)); }
  static constexpr SimTime max() { return SimTime(INT64_MAX); }

  constexpr int64_t count() const { return ns_; }
  constexpr double seconds() const { return static_cast<double>(ns_) * 1e-9; }

  constexpr auto operator<=>(const SimTime &) const = default;
  constexpr SimTime operator+(SimTime o) const { return SimTime(ns_ + o.ns_); }
  constexpr SimTime operator-(SimTime o) const { return SimTime(ns_ - o.ns_); }
  constexpr SimTime operator*(int64_t k) const { return SimTime(ns_ * k); }
  constexpr SimTime &operator+=(SimTime o) {
    ns_ += o.ns_;
    return *this;
  }

 private:
  static constexpr int64_t round(double v) { return static_cast<int64_t>(v >= 0 ? v + 0.5 : v - 0.5); }

  int64_t ns_ = 0;
};

using Bytes = int64_t;

constexpr Bytes KiB = 1024;
constexpr Bytes MiB = 1024 * KiB;
constexpr Bytes GiB = 1024 * MiB;

/// Transfer time of `bytes` at `bps` bits per second, rounded up to whole nanoseconds.
inline SimTime serialization_time(Bytes bytes, double bps) {
  double ns = static_cast<double>(bytes) * 8.0 * 1e9 / bps;
  auto whole = static_cast<int64_t>(ns);
  if (static_cast<double>(whole) < ns) ++whole;
  return SimTime(whole);
}

/// Integer handle tagged with the kind of object it names.
template <typename Tag, typename Rep = int32_t>
struct Id {
  Rep value = -1;

  constexpr Id() = default;
  constexpr explicit Id(Rep v) : value(v) {}
  constexpr bool valid() const { return value >= 0; }
  constexpr auto operator<=>(const Id &) const = default;
};

using NodeId = Id<struct NodeTag>;
using LinkId = Id<struct LinkTag>;
using HostId = Id<struct HostTag>;
using FlowId = Id<struct FlowTag, int64_t>;
using QpId = Id<struct QpTag>;
using CqId = Id<struct CqTag>;
using MrId = Id<struct MrTag>;
using ConnId = Id<struct ConnTag>;

enum class ErrorCode {
  kSchedulingInPast,
  kUnknownPort,
  kInvalidTopology,
  kInvalidFaultScript,
  kQpInErrorState,
  kUnregisteredRegion,
  kCqOverflow,
  kReceiverNotReady,
  kUnknownWr,
  kZeroLengthMessage,
  kConnectionFailed,
  kTargetQpDead,
  kNonPositiveDuration,
  kWindowNotFull,
  kInfeasibleRing,
  kGroupTooSmall,
  kNoSmAvailable,
  kDependencyCycle,
  kInvalidConfig,
  kConfigError,
  kScenarioFailure,
};

const char *to_string(ErrorCode code);

/// Every recoverable failure in the library is reported as an Error carrying its code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ccsim

template <typename Tag, typename Rep>
struct std::hash<ccsim::Id<Tag, Rep>> {
  size_t operator()(const ccsim::Id<Tag, Rep> &id) const noexcept { return std::hash<Rep>{}(id.value); }
};

#endif  // CCSIM_COMMON_H_
