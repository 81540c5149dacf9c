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

#ifndef CCSIM_MONITOR_H_
#define CCSIM_MONITOR_H_

#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccsim/common.h"
#include "ccsim/verbs.h"

namespace ccsim {

struct MessageRecord {
  uint64_t wr_id = 0;
  Bytes size = 0;
  SimTime t1;  // WR post
  SimTime t2;  // WC arrival
};

struct ThroughputSample {
  SimTime time;
  double value = 0;  // bytes per second
  int window_size = 1;
};

/// omega / (t2 - t1) in bytes per second. Throws Error(kNonPositiveDuration).
double per_message_throughput(const MessageRecord &r);

/// Sum of sizes over (t2 of the last record - t1 of the first), records in completion order.
double window_throughput(std::span<const MessageRecord> records);

/// Sliding window over the most recent W completions.
class ThroughputWindow {
 public:
  explicit ThroughputWindow(int window_size);

  void push(const MessageRecord &r);
  bool full() const { return static_cast<int>(records_.size()) == size_; }
  int window_size() const { return size_; }
  /// Throws Error(kWindowNotFull) before W records have been pushed.
  double value() const;

 private:
  int size_;
  std::deque<MessageRecord> records_;
  Bytes sum_ = 0;
};

/// One sample per completion once W records are seen, stamped at the completing t2.
std::vector<ThroughputSample> sample_series(std::span<const MessageRecord> records, int window_size);

/// Sample-and-hold onto a fixed grid [start, end) with the given step; grid points before
/// the first sample are skipped.
std::vector<ThroughputSample> resample(std::span<const ThroughputSample> samples, SimTime start, SimTime end,
                                       SimTime step);

struct SeriesStats {
  size_t count = 0;
  double min = 0;
  double mean = 0;
  double max = 0;
  double p99 = 0;
  double variance = 0;
};

SeriesStats series_stats(std::span<const ThroughputSample> samples);

/// `time_ns,throughput_bytes_per_s,window_size` with header.
std::string samples_csv(std::span<const ThroughputSample> samples);
/// {"<W>": {"count", "min", "mean", "max", "p99"}, ...}
std::string stats_json(const std::map<int, SeriesStats> &stats);

/// Rank with the unique strictly smallest count whose gap to the next smallest exceeds
/// `threshold`; nullopt otherwise.
std::optional<int> detect_lagging_rank(const std::map<int, int64_t> &op_counts, int64_t threshold = 1);

/// Collects MessageRecords for successful sends from verbs activity without touching it.
class MonitorRecorder : public VerbsObserver {
 public:
  void on_post(QpId qp, const WorkRequest &wr) override;
  void on_completion(const WorkCompletion &wc) override;

  /// Restricts recording to the given QPs; empty records every QP.
  void watch(QpId qp) { watched_.push_back(qp); }
  const std::vector<MessageRecord> &records() const { return records_; }

 private:
  bool watching(QpId qp) const;

  std::vector<QpId> watched_;
  std::unordered_map<uint64_t, MessageRecord> pending_;
  std::vector<MessageRecord> records_;
};

}  // namespace ccsim

#endif  // CCSIM_MONITOR_H_
