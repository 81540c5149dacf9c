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

// Command-line front end: list, validate and run scenarios or config files.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "ccsim/config.h"
#include "ccsim/scenarios.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFailure = 3;

bool is_builtin(const std::string &name) {
  for (const ccsim::ScenarioInfo &s : ccsim::list_scenarios()) {
    if (s.name == name) return true;
  }
  return false;
}

struct Job {
  std::string target;
  ccsim::RunConfig cfg;
  int exit_code = kExitOk;
  std::string report;
};

// Builds the config for one target; returns false (with messages) on config errors.
bool prepare(Job &job, const std::optional<uint64_t> &seed, const std::string &out_dir,
             const std::vector<int> &windows, std::ostream &err) {
  std::vector<ccsim::Diagnostic> diags;
  if (is_builtin(job.target)) {
    job.cfg = ccsim::scenario_defaults(job.target);
  } else if (std::filesystem::exists(job.target)) {
    diags = ccsim::validate_config(job.target);
    if (!ccsim::has_errors(diags)) job.cfg = ccsim::load_config(job.target);
  } else {
    err << "error: '" << job.target << "' is neither a builtin scenario nor a config file\n";
    return false;
  }
  if (seed) job.cfg.seed = *seed;
  if (!windows.empty()) job.cfg.window_sizes = windows;
  if (!out_dir.empty()) job.cfg.out_dir = out_dir;
  auto env = ccsim::apply_env_overrides(job.cfg);
  diags.insert(diags.end(), env.begin(), env.end());
  auto checks = ccsim::check_config(job.cfg);
  diags.insert(diags.end(), checks.begin(), checks.end());
  for (const ccsim::Diagnostic &d : diags) err << d.str() << "\n";
  return !ccsim::has_errors(diags);
}

void execute(Job &job) {
  try {
    ccsim::RunSummary s = ccsim::run_scenario(job.cfg);
    bool ok = s.completed && s.checksum_ok.value_or(true);
    job.exit_code = ok ? kExitOk : kExitFailure;
    job.report = s.to_json();
  } catch (const ccsim::Error &e) {
    job.exit_code = e.code() == ccsim::ErrorCode::kConfigError ? kExitConfig : kExitFailure;
    job.report = std::string("error: ") + e.what();
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"ccsim: collective communication fault-tolerance simulator"};
  app.require_subcommand(1);

  app.add_subcommand("list", "List builtin scenarios");

  auto *validate = app.add_subcommand("validate", "Check a config file without running it");
  std::string validate_path;
  validate->add_option("path", validate_path, "Config file")->required();

  auto *run = app.add_subcommand("run", "Run builtin scenarios or config files ('all' runs every builtin)");
  std::vector<std::string> targets;
  std::optional<uint64_t> seed;
  std::string out_dir;
  std::vector<int> windows;
  int jobs = 1;
  run->add_option("targets", targets, "Scenario names or config paths")->required();
  run->add_option("--seed", seed, "RNG seed");
  run->add_option("--out-dir", out_dir, "Directory for summary.json, trace.csv and series files");
  run->add_option("--window-sizes", windows, "Monitor window sizes, e.g. 1,8,32")->delimiter(',');
  run->add_option("--jobs", jobs, "Independent runs to execute in parallel")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("list")) {
    for (const ccsim::ScenarioInfo &s : ccsim::list_scenarios()) {
      std::cout << s.name << "\t" << s.description << "\n";
    }
    return kExitOk;
  }

  if (app.got_subcommand("validate")) {
    if (!std::filesystem::exists(validate_path)) {
      std::cerr << "error: cannot open " << validate_path << "\n";
      return kExitConfig;
    }
    auto diags = ccsim::validate_config(validate_path);
    for (const ccsim::Diagnostic &d : diags) std::cerr << d.str() << "\n";
    if (ccsim::has_errors(diags)) return kExitConfig;
    std::cout << "ok\n";
    return kExitOk;
  }

  if (targets.size() == 1 && targets[0] == "all") {
    targets.clear();
    for (const ccsim::ScenarioInfo &s : ccsim::list_scenarios()) targets.push_back(s.name);
  }
  std::vector<Job> work(targets.size());
  for (size_t i = 0; i < targets.size(); ++i) {
    work[i].target = targets[i];
    // Several runs never share an output directory.
    std::string dir = out_dir;
    if (!dir.empty() && targets.size() > 1) {
      dir = (std::filesystem::path(dir) / std::filesystem::path(targets[i]).stem()).string();
    }
    if (!prepare(work[i], seed, dir, windows, std::cerr)) return kExitConfig;
  }

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < work.size(); i = next++) execute(work[i]);
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min<int>(jobs, static_cast<int>(work.size())); ++t) pool.emplace_back(worker);
  worker();
  for (std::thread &t : pool) t.join();

  int code = kExitOk;
  for (const Job &j : work) {
    std::cout << j.report << "\n";
    code = std::max(code, j.exit_code);
  }
  return code;
}
