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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ccsim/monitor.h"

namespace ccsim {
namespace {

MessageRecord rec(Bytes size, int64_t t1_ns, int64_t t2_ns) { return {0, size, SimTime(t1_ns), SimTime(t2_ns)}; }

TEST(Monitor, PerMessageThroughput) {
  double v = per_message_throughput(rec(1 * MiB, 0, 50'000));
  EXPECT_DOUBLE_EQ(v, 1048576.0 / 50e-6);
  EXPECT_NEAR(v / 1e9, 20.97, 0.005);
  EXPECT_DOUBLE_EQ(per_message_throughput(rec(1 * MiB, 0, 100'000)), v / 2);
}

TEST(Monitor, NonPositiveDurationThrows) {
  try {
    per_message_throughput(rec(1, 10, 10));
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonPositiveDuration);
  }
}

TEST(Monitor, WindowThroughput) {
  std::vector<MessageRecord> r{rec(MiB, 0, 30'000), rec(MiB, 20'000, 55'000), rec(MiB, 40'000, 80'000),
                               rec(MiB, 60'000, 100'000)};
  double v = window_throughput(r);
  EXPECT_DOUBLE_EQ(v, 4194304.0 / 100e-6);
  EXPECT_NEAR(v / 1e9, 41.94, 0.005);
}

TEST(Monitor, WindowOfOneIsPerMessage) {
  ThroughputWindow w(1);
  MessageRecord r = rec(3 * MiB, 1'000, 71'000);
  w.push(r);
  EXPECT_DOUBLE_EQ(w.value(), per_message_throughput(r));
}

TEST(Monitor, WindowNotFullThrows) {
  ThroughputWindow w(3);
  w.push(rec(1, 0, 1));
  EXPECT_FALSE(w.full());
  try {
    (void)w.value();
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kWindowNotFull);
  }
}

TEST(Monitor, SampleCounts) {
  std::vector<MessageRecord> r;
  for (int i = 0; i < 10; ++i) r.push_back(rec(MiB, i * 1000, i * 1000 + 1000));
  EXPECT_EQ(sample_series(r, 8).size(), 3u);
  EXPECT_EQ(sample_series(std::span(r).first(5), 8).size(), 0u);
}

TEST(Monitor, SteadyBackToBackFlowEstimatesCapacity) {
  // Equal messages, each posted when the previous completes: every gap is size / C.
  const double cap = 50e9;
  const Bytes size = 64 * KiB;
  const double gap_ns = static_cast<double>(size) / cap * 1e9;
  std::vector<MessageRecord> r;
  for (int i = 0; i < 40; ++i) {
    r.push_back(rec(size, std::llround(i * gap_ns), std::llround((i + 1) * gap_ns)));
  }
  for (int w : {1, 8, 32}) {
    for (const ThroughputSample &s : sample_series(r, w)) EXPECT_NEAR(s.value / cap, 1.0, 1e-3) << w;
  }
}

TEST(Monitor, ResampleHoldsLastValue) {
  std::vector<ThroughputSample> s{{SimTime(15), 1.0, 1}, {SimTime(32), 2.0, 1}};
  auto g = resample(s, SimTime(0), SimTime(50), SimTime(10));
  ASSERT_EQ(g.size(), 3u);  // 20, 30, 40; 0 and 10 precede the first sample
  EXPECT_EQ(g[0].time, SimTime(20));
  EXPECT_DOUBLE_EQ(g[0].value, 1.0);
  EXPECT_DOUBLE_EQ(g[1].value, 1.0);
  EXPECT_DOUBLE_EQ(g[2].value, 2.0);
}

TEST(Monitor, StatsUseNearestRankPercentile) {
  std::vector<ThroughputSample> s;
  for (int i = 1; i <= 200; ++i) s.push_back({SimTime(i), static_cast<double>(i), 1});
  SeriesStats st = series_stats(s);
  EXPECT_EQ(st.count, 200u);
  EXPECT_DOUBLE_EQ(st.min, 1);
  EXPECT_DOUBLE_EQ(st.max, 200);
  EXPECT_DOUBLE_EQ(st.mean, 100.5);
  EXPECT_DOUBLE_EQ(st.p99, 198);  // ceil(0.99 * 200) = 198th smallest
  // Population variance of 1..n is (n^2 - 1) / 12.
  EXPECT_NEAR(st.variance, (200.0 * 200 - 1) / 12, 1e-6);
}

TEST(Monitor, CsvHeader) {
  std::vector<ThroughputSample> s{{SimTime(5), 2.5, 8}};
  std::string csv = samples_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "time_ns,throughput_bytes_per_s,window_size");
}

TEST(LaggingRank, Examples) {
  EXPECT_EQ(detect_lagging_rank({{0, 100}, {1, 100}, {2, 97}, {3, 100}}, 1), 2);
  EXPECT_EQ(detect_lagging_rank({{0, 5}, {1, 5}, {2, 5}}), std::nullopt);
  EXPECT_EQ(detect_lagging_rank({{0, 50}, {1, 50}, {2, 49}}, 2), std::nullopt);
  EXPECT_EQ(detect_lagging_rank({{0, 3}, {1, 3}}), std::nullopt);
}

// Property: with independent per-message jitter, wider windows average it down.
TEST(MonitorProperty, WiderWindowsReduceJitterVariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double cap = std::uniform_real_distribution<double>(10e9, 50e9)(rng);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    std::vector<MessageRecord> r;
    double t = 0;
    for (int i = 0; i < 3000; ++i) {
      double dt = 65536.0 / (cap * jitter(rng)) * 1e9;
      r.push_back(rec(64 * KiB, std::llround(t), std::llround(t + dt)));
      t += dt;
    }
    auto var = [&](int w) { return series_stats(sample_series(r, w)).variance; };
    EXPECT_GT(var(1), var(8)) << trial;
    EXPECT_GT(var(8), var(32)) << trial;
  }
}

}  // namespace
}  // namespace ccsim
