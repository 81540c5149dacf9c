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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "ccsim/config.h"

namespace ccsim {
namespace {

const std::string kDir = CCSIM_CONFIG_DIR;

bool mentions(const std::vector<Diagnostic> &diags, const std::string &severity, const std::string &text) {
  for (const Diagnostic &d : diags) {
    if (d.severity == severity && d.str().find(text) != std::string::npos) return true;
  }
  return false;
}

TEST(Config, ShippedConfigsValidate) {
  for (const char *name : {"table5_defaults.json", "port_flap.json", "p2p_port_flap.json", "pipeline_offloaded.json"}) {
    auto diags = validate_config(kDir + "/" + name);
    EXPECT_TRUE(diags.empty()) << name << ": " << (diags.empty() ? "" : diags[0].str());
  }
}

TEST(Config, DefaultsMatchDocumentedValues) {
  RunConfig c = load_config(kDir + "/table5_defaults.json");
  EXPECT_EQ(c.transport.ib_timeout, 18);
  EXPECT_EQ(c.transport.ib_retry_cnt, 7);
  EXPECT_EQ(c.transport.qp_per_connection, 2);
  EXPECT_EQ(c.transport.channels, 32);
  EXPECT_EQ(c.transport.window, 4);
  EXPECT_EQ(c.window_sizes, std::vector<int>{8});
  EXPECT_EQ(c.workload.message_bytes, 4 * GiB);
  EXPECT_EQ(c.topology.hosts, 2);
}

TEST(Config, ZeroWindowRejected) {
  RunConfig c;
  auto diags = parse_config(R"({"monitor": {"window_sizes": [8, 0]}})", kDir, c);
  EXPECT_TRUE(has_errors(diags));
  EXPECT_TRUE(mentions(diags, "error", "monitor.window_sizes[1]"));
  EXPECT_TRUE(mentions(diags, "error", "window size must be ≥ 1"));
}

TEST(Config, UnknownFaultPortRejected) {
  RunConfig c;
  auto diags = parse_config(R"({"faults": [{"at_s": 1, "port": "h9.nic0", "state": "down"}]})", kDir, c);
  EXPECT_TRUE(mentions(diags, "error", "h9.nic0"));
}

TEST(Config, UnknownKeyWarnsOnly) {
  RunConfig c;
  auto diags = parse_config(R"({"transport": {"ib_timeout": 14, "colour": "red"}})", kDir, c);
  EXPECT_FALSE(has_errors(diags));
  EXPECT_TRUE(mentions(diags, "warning", "transport.colour"));
  EXPECT_EQ(c.transport.ib_timeout, 14);
}

TEST(Config, MissingTopologyFileNamesPath) {
  auto dir = std::filesystem::temp_directory_path() / "ccsim_config_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"topology": {"file": "nowhere.json"}})";
  try {
    load_config((dir / "bad.json").string());
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
    EXPECT_NE(std::string(e.what()).find("nowhere.json"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingConfigFile) {
  auto diags = validate_config(kDir + "/does_not_exist.json");
  EXPECT_TRUE(has_errors(diags));
  EXPECT_THROW(load_config(kDir + "/does_not_exist.json"), Error);
}

TEST(Config, EnvironmentOverrides) {
  RunConfig c;
  setenv("CCSIM_IB_TIMEOUT", "10", 1);
  setenv("CCSIM_IB_RETRY_CNT", "3", 1);
  setenv("CCSIM_WINDOW_SIZE", "16", 1);
  auto diags = apply_env_overrides(c);
  EXPECT_TRUE(diags.empty());
  EXPECT_EQ(c.transport.ib_timeout, 10);
  EXPECT_EQ(c.transport.ib_retry_cnt, 3);
  EXPECT_EQ(c.window_sizes, std::vector<int>{16});
  setenv("CCSIM_IB_RETRY_CNT", "9", 1);
  EXPECT_TRUE(has_errors(apply_env_overrides(c)));
  unsetenv("CCSIM_IB_TIMEOUT");
  unsetenv("CCSIM_IB_RETRY_CNT");
  unsetenv("CCSIM_WINDOW_SIZE");
}

TEST(Config, FaultScriptFromSpecs) {
  RunConfig c = load_config(kDir + "/port_flap.json");
  Topology topo = Topology::rail_clos(c.topology);
  FaultScript s = to_fault_script(c.faults, topo);
  EXPECT_TRUE(s.validate(topo).empty());
  EXPECT_THROW(to_fault_script({FaultSpec{SimTime::s(1), "nope", LinkState::kDown}}, topo), Error);
}

}  // namespace
}  // namespace ccsim
