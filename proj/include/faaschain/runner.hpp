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

// Per-invocation orchestration of one chain link: restore the latest
// checkpoint if there is one, run the workload, and either finalize the
// result or checkpoint, upload, re-invoke the same action and stop.
//
// Three drivers share the same protocol:
//   simulated    cooperative workload stepped inline on the simulated clock
//   threaded     cooperative workload on its own thread, runner as timer
//   external     workload process under an external checkpoint tool
// In the threaded and external drivers the workload and the timer race to a
// single-assignment cell; whichever transition lands first (COMPLETING or
// CHECKPOINTING) does all of the follow-up work.

#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <stop_token>
#include <string>

#include "faaschain/checkpoint.hpp"
#include "faaschain/clock.hpp"
#include "faaschain/core.hpp"
#include "faaschain/event_log.hpp"
#include "faaschain/stores.hpp"

namespace faaschain {

// Thrown out of the runner when the activation hits its deadline or the
// platform stops it. The gateway turns it into a timeout_killed record.
class ActivationKilled : public std::exception {
 public:
  const char* what() const noexcept override { return "activation killed at its deadline"; }
};

// The platform's view of one running activation.
class ActivationControl {
 public:
  ActivationControl(Clock& clock, std::int64_t deadline_ms, std::stop_token stop = {});

  Clock& clock() const { return clock_; }
  std::int64_t deadline_ms() const { return deadline_ms_; }
  std::stop_token stop_token() const { return stop_; }

  // Lets `ms` of activation time pass. If that would cross the deadline the
  // clock is moved to the deadline and ActivationKilled is thrown.
  void charge(std::int64_t ms);
  // Throws ActivationKilled once the deadline has passed or a stop was
  // requested.
  void check() const;
  bool expired() const;

  // Called once the runner knows which chain link it is executing, before
  // any work, so the platform can attribute a kill to the chain.
  std::function<void(const InvocationContext&)> on_context;

 private:
  Clock& clock_;
  std::int64_t deadline_ms_;
  std::stop_token stop_;
};

// Asynchronous invoke: returns once the platform acknowledged the request
// with an activation id; does not wait for the activation itself.
class Invoker {
 public:
  virtual ~Invoker() = default;
  virtual std::string invoke_async(const std::string& action, const json& params) = 0;
};

enum class RestorePolicy { fail_chain, restart_from_scratch };

std::string_view to_string(RestorePolicy policy);
RestorePolicy parse_restore_policy(std::string_view text);

struct RunnerConfig {
  std::int64_t checkpoint_trigger_ms = 50000;
  bool fencing_enabled = true;
  std::int64_t max_chain_length = 64;
  RestorePolicy restore_policy = RestorePolicy::fail_chain;
  // When false the workload simply runs until it completes or is killed:
  // no restore, no timer. This is the baseline without chaining.
  bool enabled = true;
  // Duration of one work unit: charged per step on the simulated clock and
  // slept per step by paced workloads in real time.
  std::int64_t unit_ms = 1000;
  // Race configuration. When set, the checkpointed workload is not stopped
  // right away but keeps running for upload + invoke + this many ms, and
  // finalizes if it completes inside that window.
  std::optional<std::int64_t> delayed_termination_ms;

  void validate() const;
};

void to_json(json& j, const RunnerConfig& v);
void from_json(const json& j, RunnerConfig& v);

struct RunnerDeps {
  Checkpointer* cooperative = nullptr;
  Checkpointer* external = nullptr;
  CheckpointRepo* checkpoints = nullptr;
  ResultsRepo* results = nullptr;
  Invoker* invoker = nullptr;
  Clock* clock = nullptr;
  EventLog* log = nullptr;
  // Per-invocation work directories are created below this.
  std::filesystem::path scratch_dir;
  // Action re-invoked for the next chain link.
  std::string action_name;
};

enum class RestoreKind { fresh, resumed, failed };

struct RestoreDecision {
  RestoreKind kind = RestoreKind::fresh;
  std::int64_t from_seq = 0;
  // "corrupt" or "restore-error" when failed (or when a failure degraded to
  // fresh under restart_from_scratch).
  std::string reason;
  std::string detail;
  bool degraded = false;
};

enum class OutcomeKind { completed, checkpointed_and_reinvoked, failed };

std::string_view to_string(OutcomeKind kind);
std::string_view to_string(RestoreKind kind);

struct InvocationTimings {
  std::int64_t restore_ms = 0;
  std::int64_t work_ms = 0;
  std::int64_t checkpoint_ms = 0;
  std::int64_t upload_ms = 0;
  std::int64_t invoke_ms = 0;
};

struct InvocationOutcome {
  OutcomeKind kind = OutcomeKind::failed;
  ChainId chain_id;
  std::int64_t seq = 0;
  std::optional<json> result;
  std::optional<CheckpointManifest> manifest;
  std::optional<std::string> next_activation_id;
  InvocationTimings timings;
  RestoreDecision restore;
  std::optional<FinalizeStatus> finalize;
  // Set when, in the race configuration, the checkpointed workload finished
  // inside its termination window and finalized as well.
  std::optional<FinalizeStatus> orphan_finalize;
  std::string error;
  std::int64_t checkpoint_trigger_ms = 0;
};

void to_json(json& j, const InvocationOutcome& v);
void from_json(const json& j, InvocationOutcome& v);
void to_json(json& j, const InvocationTimings& v);
void from_json(const json& j, InvocationTimings& v);

class Runner {
 public:
  Runner(RunnerConfig config, RunnerDeps deps);

  const RunnerConfig& config() const { return config_; }

  // Runs one chain link. `params` are the raw invocation parameters; the
  // successor is invoked with the same parameters and the reserved chain keys
  // replaced. Throws ActivationKilled when the activation runs out of time;
  // every other failure is reported as an outcome of kind failed.
  InvocationOutcome execute_invocation(const InvocationContext& ctx, const json& params,
                                       ActivationControl& control);

  struct Restored {
    RestoreDecision decision;
    std::unique_ptr<ManagedWorkload> workload;
  };

  // Downloads, verifies and restores the latest checkpoint of the chain.
  // `work_dir` receives the downloaded files. A failure under
  // restart_from_scratch degrades to a fresh launch with a warning.
  Restored restore_if_available(const InvocationContext& ctx, const std::filesystem::path& work_dir,
                                const LaunchOptions& launch);

  FinalizeStatus finalize(const InvocationContext& ctx, const json& result);

 private:
  struct Invocation;

  Checkpointer& checkpointer_for(ExecutionMode mode) const;
  void drive_simulated(Invocation& inv);
  void drive_threaded(Invocation& inv);
  void drive_external(Invocation& inv);
  void complete(Invocation& inv, const json& result);
  void checkpoint_and_reinvoke(Invocation& inv);
  json successor_params(const Invocation& inv) const;
  void emit(std::string_view event, const Invocation& inv, json fields = json::object());

  RunnerConfig config_;
  RunnerDeps deps_;
};

}  // namespace faaschain
