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

#ifndef CCSIM_SRC_SCENARIO_UTIL_H_
#define CCSIM_SRC_SCENARIO_UTIL_H_

#include <sstream>
#include <string>

#include "ccsim/event_loop.h"
#include "ccsim/scenarios.h"

namespace ccsim::detail {

/// Collects the trace of every event loop a scenario creates into one trace.csv.
struct Context {
  std::ostringstream trace;

  Context() { trace << "time_ns,event_kind,subject,detail\n"; }
  void attach(EventLoop &loop) { loop.trace().set_sink(&trace); }
};

std::string format_double(double v);

RunSummary run_p2p_modes(const RunConfig &cfg, Context &ctx);
RunSummary run_ring_construction(const RunConfig &cfg, Context &ctx);
RunSummary run_pipeline_1f1b(const RunConfig &cfg, Context &ctx);
RunSummary run_custom(const RunConfig &cfg, Context &ctx);
RunSummary run_failover_figure10(const RunConfig &cfg, Context &ctx);
RunSummary run_fuzz_failover(const RunConfig &cfg, Context &ctx);
RunSummary run_trigger_cases(const RunConfig &cfg, Context &ctx);
RunSummary run_monitor_figure11(const RunConfig &cfg, Context &ctx);

}  // namespace ccsim::detail

#endif  // CCSIM_SRC_SCENARIO_UTIL_H_
