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

// Benchmark harness: repeated chained runs over an argument sweep, with
// per-argument statistics and CSV output.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "faaschain/checkpoint.hpp"
#include "faaschain/clock.hpp"
#include "faaschain/core.hpp"
#include "faaschain/stores.hpp"

namespace faaschain {

struct BenchPlan {
  std::string workload;
  std::vector<std::vector<std::string>> args_sweep;
  std::int64_t repetitions = 20;
  std::int64_t timeout_ms = 90000;
  std::int64_t trigger_ms = 50000;
  ClockMode clock_mode = ClockMode::simulated;
  bool fencing = true;
  std::int64_t unit_ms = 1000;
  std::uint64_t factor_block_size = 1;
  std::optional<std::int64_t> delayed_termination_ms;
  ExecutionMode mode = ExecutionMode::cooperative;
  std::optional<ExternalToolConfig> external_tool;
  // Both repositories use this; local_fs roots get one subdirectory per run.
  RepoConfig repo;
  // Independent chains run concurrently when > 1.
  std::int64_t parallelism = 1;

  void validate() const;
};

// One chain run. Field order is the CSV column order.
struct BenchSample {
  std::string workload;
  std::vector<std::string> args;
  std::int64_t run_index = 0;
  std::int64_t execution_ms = 0;
  std::int64_t invocation_count = 0;
  std::int64_t checkpoint_ms_total = 0;
  std::int64_t upload_ms_total = 0;
  std::int64_t duplicate_finals = 0;
  bool failed = false;

  bool operator==(const BenchSample&) const = default;
};

struct Stat {
  double mean = 0;
  double stddev = 0;
};

struct ArgumentSummary {
  std::vector<std::string> args;
  std::int64_t samples = 0;
  std::int64_t failed = 0;
  Stat execution_ms;
  Stat invocation_count;
};

struct BenchSummary {
  std::vector<ArgumentSummary> per_argument;
  // Total chain time over the estimated single-shot time (sum of work_ms) of
  // the successful runs; 0 when there is nothing to compare.
  double overhead_ratio = 0;
  std::int64_t total = 0;
  std::int64_t failures = 0;
};

struct BenchResult {
  std::vector<BenchSample> samples;
  BenchSummary summary;

  // 0, or 1 when more than half of the runs failed.
  int exit_code() const;
};

void to_json(json& j, const BenchSummary& v);

BenchResult run_plan(const BenchPlan& plan);

// Population mean and sample standard deviation (0 for fewer than 2 values).
Stat describe(const std::vector<double>& values);

inline constexpr const char* kBenchCsvHeader =
    "workload,args,run_index,execution_ms,invocation_count,checkpoint_ms_total,upload_ms_total,duplicate_finals,"
    "failed";

// RFC 4180: CRLF line ends, fields quoted when they hold a comma, quote or
// line break. args is written as a JSON array.
std::string to_csv(const std::vector<BenchSample>& samples);
// Throws Error(invalid_argument) for no samples, Error(storage) when the file
// cannot be written.
void emit_csv(const std::vector<BenchSample>& samples, const std::filesystem::path& path);

// CLI helper: each element of a JSON list is one argument set; a scalar
// becomes a one-element set, an array is taken element-wise.
std::vector<std::vector<std::string>> parse_args_sweep(const json& list);

}  // namespace faaschain
