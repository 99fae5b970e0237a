/*
 * Copyright 2026 The faaschain Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Fixtures shared by the suites.

#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>

#include "faaschain/gateway.hpp"

namespace testing {

namespace fs = std::filesystem;
using faaschain::json;

// Directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("faaschain-test-" + std::to_string(::getpid()) + "-" + tag + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& child) const { return path_ / child; }

 private:
  fs::path path_;
};

struct ChainSetup {
  std::int64_t timeout_ms = 60000;
  std::int64_t trigger_ms = 50000;
  std::int64_t unit_ms = 1000;
  bool enabled = true;
  bool fencing = true;
  std::optional<std::int64_t> race_delay_ms;
  std::int64_t max_chain_length = 64;
  faaschain::RestorePolicy restore_policy = faaschain::RestorePolicy::fail_chain;
};

inline faaschain::ActionConfig action_config(const std::string& name, const ChainSetup& s) {
  faaschain::ActionConfig a;
  a.name = name;
  a.timeout_ms = s.timeout_ms;
  a.runner.checkpoint_trigger_ms = s.trigger_ms;
  a.runner.unit_ms = s.unit_ms;
  a.runner.enabled = s.enabled;
  a.runner.fencing_enabled = s.fencing;
  a.runner.delayed_termination_ms = s.race_delay_ms;
  a.runner.max_chain_length = s.max_chain_length;
  a.runner.restore_policy = s.restore_policy;
  return a;
}

inline json params(const std::string& bin, const std::vector<std::string>& args) {
  return json{{"bin", bin}, {"bin_args", args}};
}

// A simulated platform with one registered action "f".
struct SimPlatform {
  explicit SimPlatform(const ChainSetup& s = {}, faaschain::PlatformOptions options = {})
      : platform(std::move(options)) {
    platform.register_action(action_config("f", s));
  }

  faaschain::ChainRun run(const std::string& bin, const std::vector<std::string>& args) {
    return platform.run_chain("f", params(bin, args));
  }

  faaschain::LocalPlatform platform;
};

// Runner outcome carried in an activation's response (success or failure).
inline std::optional<json> outcome_of(const faaschain::ActivationRecord& record) {
  const auto& r = record.response;
  if (!r.is_object()) return std::nullopt;
  if (r.contains("result")) return r["result"];
  if (r.contains("outcome")) return r["outcome"];
  return std::nullopt;
}

}  // namespace testing
