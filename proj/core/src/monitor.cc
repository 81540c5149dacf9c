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

#include "ccsim/monitor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace ccsim {

double per_message_throughput(const MessageRecord &r) {
  if (r.t2 <= r.t1) throw Error(ErrorCode::kNonPositiveDuration, "record completes no later than it was posted");
  return static_cast<double>(r.size) * 1e9 / static_cast<double>((r.t2 - r.t1).count());
}

double window_throughput(std::span<const MessageRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kWindowNotFull, "empty window");
  SimTime span = records.back().t2 - records.front().t1;
  if (span.count() <= 0) throw Error(ErrorCode::kNonPositiveDuration, "window spans no time");
  double sum = 0;
  for (const MessageRecord &r : records) sum += static_cast<double>(r.size);
  return sum * 1e9 / static_cast<double>(span.count());
}

ThroughputWindow::ThroughputWindow(int window_size) : size_(window_size) {
  if (window_size < 1) throw Error(ErrorCode::kInvalidConfig, "window size must be >= 1");
}

void ThroughputWindow::push(const MessageRecord &r) {
  records_.push_back(r);
  sum_ += r.size;
  if (static_cast<int>(records_.size()) > size_) {
    sum_ -= records_.front().size;
    records_.pop_front();
  }
}

double ThroughputWindow::value() const {
  if (!full()) throw Error(ErrorCode::kWindowNotFull, "window holds fewer than W records");
  SimTime span = records_.back().t2 - records_.front().t1;
  if (span.count() <= 0) throw Error(ErrorCode::kNonPositiveDuration, "window spans no time");
  return static_cast<double>(sum_) * 1e9 / static_cast<double>(span.count());
}

std::vector<ThroughputSample> sample_series(std::span<const MessageRecord> records, int window_size) {
  ThroughputWindow w(window_size);
  std::vector<ThroughputSample> out;
  for (const MessageRecord &r : records) {
    w.push(r);
    if (w.full()) out.push_back(ThroughputSample{r.t2, w.value(), window_size});
  }
  return out;
}

std::vector<ThroughputSample> resample(std::span<const ThroughputSample> samples, SimTime start, SimTime end,
                                       SimTime step) {
  std::vector<ThroughputSample> out;
  if (samples.empty() || step.count() <= 0) return out;
  size_t i = 0;
  for (SimTime t = start; t < end; t += step) {
    while (i + 1 < samples.size() && samples[i + 1].time <= t) ++i;
    if (samples[i].time > t) continue;
    out.push_back(ThroughputSample{t, samples[i].value, samples[i].window_size});
  }
  return out;
}

SeriesStats series_stats(std::span<const ThroughputSample> samples) {
  SeriesStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  std::vector<double> v;
  v.reserve(samples.size());
  for (const ThroughputSample &x : samples) v.push_back(x.value);
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double sq = 0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.variance = sq / static_cast<double>(v.size());
  // nearest rank
  size_t rank = static_cast<size_t>(std::ceil(0.99 * static_cast<double>(v.size())));
  s.p99 = v[std::max<size_t>(rank, 1) - 1];
  return s;
}

std::string samples_csv(std::span<const ThroughputSample> samples) {
  std::ostringstream os;
  os.precision(12);
  os << "time_ns,throughput_bytes_per_s,window_size\n";
  for (const ThroughputSample &s : samples) os << s.time.count() << ',' << s.value << ',' << s.window_size << '\n';
  return os.str();
}

std::string stats_json(const std::map<int, SeriesStats> &stats) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto &[w, s] : stats) {
    j[std::to_string(w)] = {{"count", s.count}, {"min", s.min}, {"mean", s.mean}, {"max", s.max}, {"p99", s.p99}};
  }
  return j.dump(2);
}

std::optional<int> detect_lagging_rank(const std::map<int, int64_t> &op_counts, int64_t threshold) {
  if (op_counts.size() < 2) return std::nullopt;
  const std::pair<const int, int64_t> *lowest = nullptr;
  int64_t second = 0;
  bool have_second = false;
  for (const auto &entry : op_counts) {
    if (lowest == nullptr || entry.second < lowest->second) {
      if (lowest != nullptr) {
        second = lowest->second;
        have_second = true;
      }
      lowest = &entry;
    } else if (!have_second || entry.second < second) {
      second = entry.second;
      have_second = true;
    }
  }
  if (second - lowest->second > threshold) return lowest->first;
  return std::nullopt;
}

bool MonitorRecorder::watching(QpId qp) const {
  return watched_.empty() || std::find(watched_.begin(), watched_.end(), qp) != watched_.end();
}

void MonitorRecorder::on_post(QpId qp, const WorkRequest &wr) {
  if (wr.direction != WrDirection::kSend || !watching(qp)) return;
  pending_[wr.wr_id] = MessageRecord{wr.wr_id, wr.length, wr.post_time, SimTime()};
}

void MonitorRecorder::on_completion(const WorkCompletion &wc) {
  if (wc.direction != WrDirection::kSend) return;
  auto it = pending_.find(wc.wr_id);
  if (it == pending_.end()) return;
  if (wc.status == WcStatus::kSuccess && it->second.size > 0) {
    it->second.t2 = wc.completion_time;
    records_.push_back(it->second);
  }
  pending_.erase(it);
}

}  // namespace ccsim
