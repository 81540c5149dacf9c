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

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ccsim/event_loop.h"
#include "ccsim/network.h"
#include "ccsim/pipeline.h"
#include "ccsim/scenarios.h"

namespace ccsim {
namespace {

// Random flows over a leaf/spine-sized link set; each flow crosses 2 to 5 links.
void BM_AllocateBandwidth(benchmark::State &state) {
  const int flows = static_cast<int>(state.range(0));
  const int links = 64;
  std::mt19937_64 rng(3);
  std::vector<std::vector<LinkId>> paths(flows);
  for (auto &p : paths) {
    int hops = std::uniform_int_distribution<int>(2, 5)(rng);
    for (int h = 0; h < hops; ++h) p.push_back(LinkId{std::uniform_int_distribution<int32_t>(0, links - 1)(rng)});
  }
  std::vector<double> cap(links, 400e9);
  for (auto _ : state) benchmark::DoNotOptimize(allocate_bandwidth(paths, cap));
  state.SetItemsProcessed(state.iterations() * flows);
}
BENCHMARK(BM_AllocateBandwidth)->Arg(16)->Arg(128)->Arg(1024);

void BM_EventLoop(benchmark::State &state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    EventLoop loop;
    int fired = 0;
    for (int i = 0; i < n; ++i) loop.schedule(SimTime::ns((i * 7919) % 100000), [&] { ++fired; });
    loop.run();
    benchmark::DoNotOptimize(fired);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EventLoop)->Arg(1000)->Arg(100000);

void BM_OneFOneB(benchmark::State &state) {
  PipelineConfig c;
  c.microbatches = static_cast<int>(state.range(0));
  c.p2p_time = SimTime::us(250);
  for (auto _ : state) benchmark::DoNotOptimize(run_1f1b(c).makespan);
}
BENCHMARK(BM_OneFOneB)->Arg(8)->Arg(64);

void BM_FuzzTrial(benchmark::State &state) {
  uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_fuzz_trial(seed++).intact);
}
BENCHMARK(BM_FuzzTrial);

}  // namespace
}  // namespace ccsim

BENCHMARK_MAIN();
