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

#include "faaschain/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include "faaschain/gateway.hpp"

namespace faaschain {

namespace fs = std::filesystem;

void BenchPlan::validate() const {
  if (workload.empty()) throw Error(ErrorKind::invalid_argument, "bench plan needs a workload");
  if (args_sweep.empty()) throw Error(ErrorKind::invalid_argument, "bench plan needs at least one argument set");
  if (repetitions < 1) throw Error(ErrorKind::invalid_argument, "repetitions must be >= 1");
  if (trigger_ms <= 0 || trigger_ms >= timeout_ms) {
    throw Error(ErrorKind::invalid_argument, "trigger_ms must be in (0, timeout_ms)");
  }
  if (parallelism < 1) throw Error(ErrorKind::invalid_argument, "parallelism must be >= 1");
  repo.validate();
}

int BenchResult::exit_code() const { return summary.failures * 2 > summary.total ? 1 : 0; }

Stat describe(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return s;
}

void to_json(json& j, const BenchSummary& v) {
  j = json{{"overhead_ratio", v.overhead_ratio}, {"total", v.total}, {"failures", v.failures}};
  j["per_argument"] = json::array();
  for (const auto& a : v.per_argument) {
    j["per_argument"].push_back({{"args", a.args},
                                 {"samples", a.samples},
                                 {"failed", a.failed},
                                 {"execution_ms", {{"mean", a.execution_ms.mean}, {"stddev", a.execution_ms.stddev}}},
                                 {"invocation_count",
                                  {{"mean", a.invocation_count.mean}, {"stddev", a.invocation_count.stddev}}}});
  }
}

namespace {

struct Run {
  BenchSample sample;
  std::int64_t single_shot_ms = 0;
};

Run run_one(const BenchPlan& plan, const std::vector<std::string>& args, std::int64_t run_index,
            std::int64_t slot) {
  Run run;
  run.sample.workload = plan.workload;
  run.sample.args = args;
  run.sample.run_index = run_index;

  PlatformOptions options;
  options.clock_mode = plan.clock_mode;
  options.workload_options.factor_block_size = plan.factor_block_size;
  options.external_tool = plan.external_tool;
  options.checkpoint_repo = plan.repo;
  if (!plan.repo.root.empty()) options.checkpoint_repo.root = plan.repo.root / ("run-" + std::to_string(slot));
  options.results_repo = options.checkpoint_repo;

  try {
    LocalPlatform platform(options);
    ActionConfig action;
    action.name = "bench-" + plan.workload;
    action.timeout_ms = plan.timeout_ms;
    action.runner.checkpoint_trigger_ms = plan.trigger_ms;
    action.runner.fencing_enabled = plan.fencing;
    action.runner.unit_ms = plan.unit_ms;
    action.runner.delayed_termination_ms = plan.delayed_termination_ms;
    platform.register_action(action);

    json params{{"bin", plan.workload}, {"bin_args", args}, {"mode", plan.mode}};
    auto chain = platform.run_chain(action.name, params);
    if (!chain.record) {
      run.sample.failed = true;
      return run;
    }
    const auto& record = *chain.record;
    run.sample.invocation_count = record.invocation_count;
    run.sample.duplicate_finals = record.finals.size() > 1 ? static_cast<std::int64_t>(record.finals.size()) : 0;
    run.sample.failed = record.status != ChainStatus::completed;

    std::optional<std::int64_t> first_start, last_end;
    for (const auto& act : chain.activations) {
      first_start = first_start ? std::min(*first_start, act.start) : act.start;
      last_end = last_end ? std::max(*last_end, act.end) : act.end;
      run.single_shot_ms += act.work_ms;
      const json* outcome = nullptr;
      if (act.response.is_object() && act.response.contains("result")) outcome = &act.response["result"];
      if (act.response.is_object() && act.response.contains("outcome")) outcome = &act.response["outcome"];
      if (outcome && outcome->is_object() && outcome->contains("timings")) {
        const auto& t = (*outcome)["timings"];
        run.sample.checkpoint_ms_total += t.value("checkpoint_ms", std::int64_t{0});
        run.sample.upload_ms_total += t.value("upload_ms", std::int64_t{0});
      }
    }
    if (first_start && last_end) run.sample.execution_ms = *last_end - *first_start;
  } catch (const std::exception&) {
    run.sample.failed = true;
  }
  return run;
}

BenchSummary summarize(const std::vector<Run>& runs) {
  BenchSummary summary;
  std::map<std::vector<std::string>, std::size_t> index;
  std::vector<std::vector<double>> exec, counts;
  std::int64_t chain_ms = 0, single_ms = 0;
  for (const auto& run : runs) {
    const auto& s = run.sample;
    auto [it, inserted] = index.emplace(s.args, summary.per_argument.size());
    if (inserted) {
      ArgumentSummary fresh;
      fresh.args = s.args;
      summary.per_argument.push_back(std::move(fresh));
      exec.emplace_back();
      counts.emplace_back();
    }
    auto& arg = summary.per_argument[it->second];
    ++arg.samples;
    ++summary.total;
    if (s.failed) {
      ++arg.failed;
      ++summary.failures;
      continue;
    }
    exec[it->second].push_back(static_cast<double>(s.execution_ms));
    counts[it->second].push_back(static_cast<double>(s.invocation_count));
    chain_ms += s.execution_ms;
    single_ms += run.single_shot_ms;
  }
  for (std::size_t i = 0; i < summary.per_argument.size(); ++i) {
    summary.per_argument[i].execution_ms = describe(exec[i]);
    summary.per_argument[i].invocation_count = describe(counts[i]);
  }
  if (single_ms > 0) summary.overhead_ratio = static_cast<double>(chain_ms) / static_cast<double>(single_ms);
  return summary;
}

}  // namespace

BenchResult run_plan(const BenchPlan& plan) {
  plan.validate();
  struct Job {
    const std::vector<std::string>* args;
    std::int64_t run_index;
  };
  std::vector<Job> jobs;
  for (const auto& args : plan.args_sweep) {
    for (std::int64_t r = 0; r < plan.repetitions; ++r) jobs.push_back({&args, r});
  }
  std::vector<Run> runs(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      runs[i] = run_one(plan, *jobs[i].args, jobs[i].run_index, static_cast<std::int64_t>(i));
    }
  };
  const auto threads = static_cast<std::size_t>(std::min<std::int64_t>(plan.parallelism, jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  BenchResult result;
  result.summary = summarize(runs);
  for (auto& run : runs) result.samples.push_back(std::move(run.sample));
  return result;
}

namespace {

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string to_csv(const std::vector<BenchSample>& samples) {
  std::string out = std::string(kBenchCsvHeader) + "\r\n";
  for (const auto& s : samples) {
    const std::string fields[] = {s.workload,
                                  json(s.args).dump(),
                                  std::to_string(s.run_index),
                                  std::to_string(s.execution_ms),
                                  std::to_string(s.invocation_count),
                                  std::to_string(s.checkpoint_ms_total),
                                  std::to_string(s.upload_ms_total),
                                  std::to_string(s.duplicate_finals),
                                  s.failed ? "true" : "false"};
    bool first = true;
    for (const auto& f : fields) {
      if (!first) out += ',';
      out += csv_field(f);
      first = false;
    }
    out += "\r\n";
  }
  return out;
}

void emit_csv(const std::vector<BenchSample>& samples, const fs::path& path) {
  if (samples.empty()) throw Error(ErrorKind::invalid_argument, "no samples to write");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::storage, "cannot write " + path.string());
  out << to_csv(samples);
  out.close();
  if (!out) throw Error(ErrorKind::storage, "cannot write " + path.string());
}

std::vector<std::vector<std::string>> parse_args_sweep(const json& list) {
  if (!list.is_array()) throw Error(ErrorKind::invalid_argument, "--args must be a JSON list");
  auto text = [](const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    throw Error(ErrorKind::invalid_argument, "arguments must be strings or integers, got " + v.dump());
  };
  std::vector<std::vector<std::string>> out;
  for (const auto& item : list) {
    std::vector<std::string> args;
    if (item.is_array()) {
      for (const auto& v : item) args.push_back(text(v));
    } else {
      args.push_back(text(item));
    }
    out.push_back(std::move(args));
  }
  return out;
}

}  // namespace faaschain
