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

// Desk-scale FaaS platform: registers actions, runs activations against
// action instances, enforces timeouts and keeps activation records.
//
// Simulated clock: activations run one at a time from a FIFO queue on the
// caller's thread. An invoke from outside the queue drains it; an invoke made
// while an activation is running (the runner re-invoking itself) is queued and
// runs after the current one returns. The order, and so every record, is a
// pure function of the inputs.
//
// Real clock: each activation gets its own thread plus a watchdog that stops
// it at start + timeout and records timeout_killed.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "faaschain/action_server.hpp"
#include "faaschain/checkpoint.hpp"
#include "faaschain/clock.hpp"
#include "faaschain/core.hpp"
#include "faaschain/event_log.hpp"
#include "faaschain/runner.hpp"
#include "faaschain/stores.hpp"

namespace faaschain {

inline constexpr std::int64_t kMaxActionMemoryMb = 512;

struct ActionConfig {
  std::string name;
  std::int64_t timeout_ms = kDefaultActionTimeoutMs;
  std::int64_t memory_mb = 256;
  std::int64_t concurrency_limit = 100;
  RunnerConfig runner;
  // Base URL of a remote action server; empty means an in-process instance.
  std::string url;

  void validate() const;
};

void to_json(json& j, const ActionConfig& v);
void from_json(const json& j, ActionConfig& v);

// One action container: init once, then a single run.
class ActionInstance {
 public:
  virtual ~ActionInstance() = default;
  virtual HttpReply init(const json& body) = 0;
  virtual HttpReply run(const json& body, ActivationControl& control) = 0;
};

using ActionFactory = std::function<std::unique_ptr<ActionInstance>(const ActionConfig&)>;

struct ChainReport {
  ChainId chain_id;
  ChainStatus status = ChainStatus::running;
  std::int64_t invocation_count = 0;
  std::int64_t activation_count = 0;
  std::int64_t total_billed_ms = 0;
  std::int64_t single_shot_ms_estimate = 0;
  std::int64_t double_billed_ms = 0;
  std::int64_t timeout_killed = 0;
  std::int64_t final_count = 0;
  bool double_billing_violated = false;
  bool substitution_satisfied = false;
};

void to_json(json& j, const ChainReport& v);

class Gateway {
 public:
  Gateway(Clock& clock, IdSource& ids, ResultsRepo& results, ActionFactory factory, EventLog* log = nullptr);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void register_action(ActionConfig config);
  const ActionConfig& action(const std::string& name) const;

  struct Invocation {
    std::string activation_id;
    // Present for blocking invokes that ran to an end.
    std::optional<ActivationRecord> record;
  };

  // Throws Error(not_found) for an unknown action and Error(throttled) when
  // the action is at its concurrency limit. Blocking waits for this
  // activation's own outcome, not the chain's. A blocking invoke issued from
  // inside a simulated activation cannot wait and returns without a record.
  Invocation invoke(const std::string& action, const json& params, bool blocking);

  std::optional<ActivationRecord> activation(const std::string& id) const;
  std::vector<ActivationRecord> activations() const;
  std::vector<ActivationRecord> chain_activations(const ChainId& chain_id) const;

  // Throws Error(not_found) for an unknown chain and Error(precondition)
  // while the chain is still running.
  ChainReport chain_report(const ChainId& chain_id) const;

  // Returns once no activation is queued or running.
  void wait_idle();

  Clock& clock() const { return clock_; }

 private:
  struct Pending {
    std::string activation_id;
    std::string action;
    json params;
  };
  struct Slot {
    ActivationRecord record;
    bool done = false;
  };

  void drain();
  void run_activation(const Pending& pending, std::stop_token stop, std::shared_ptr<std::stop_source> source);
  void finish(const std::string& id, const std::function<void(ActivationRecord&)>& fill);
  void attribute_kill(const ActivationRecord& record);

  Clock& clock_;
  IdSource& ids_;
  ResultsRepo& results_;
  ActionFactory factory_;
  EventLog* log_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, ActionConfig> actions_;
  std::map<std::string, std::int64_t> in_flight_;
  std::map<std::string, Slot> slots_;
  std::vector<std::string> order_;

  std::deque<Pending> queue_;
  bool draining_ = false;

  std::int64_t live_threads_ = 0;
  std::vector<std::jthread> threads_;
};

// Re-invokes through an in-process gateway.
class GatewayInvoker final : public Invoker {
 public:
  explicit GatewayInvoker(Gateway& gateway) : gateway_(gateway) {}
  std::string invoke_async(const std::string& action, const json& params) override;

 private:
  Gateway& gateway_;
};

// ---------------------------------------------------------------------------

// Everything a local run needs, wired together: clock, ids, stores,
// checkpointers, a gateway with in-process action instances and the invoker
// those instances use to continue their chains.
struct PlatformOptions {
  ClockMode clock_mode = ClockMode::simulated;
  RepoConfig checkpoint_repo;
  RepoConfig results_repo;
  WorkloadOptions workload_options;
  std::optional<ExternalToolConfig> external_tool;
  std::filesystem::path scratch_dir;
  std::optional<std::filesystem::path> log_dir;
  LogLevel log_echo = LogLevel::off;
  bool queue_when_busy = false;
};

struct ChainRun {
  ChainId chain_id;
  std::string first_activation_id;
  std::optional<ChainRecord> record;
  std::optional<ChainReport> report;
  std::vector<ActivationRecord> activations;
};

class LocalPlatform {
 public:
  explicit LocalPlatform(PlatformOptions options = {});
  ~LocalPlatform();

  Clock& clock() { return *clock_; }
  IdSource& ids() { return *ids_; }
  WorkloadRegistry& registry() { return registry_; }
  CheckpointRepo& checkpoints() { return *checkpoints_; }
  ResultsRepo& results() { return *results_; }
  EventLog& log() { return *log_; }
  Gateway& gateway() { return *gateway_; }
  Invoker& invoker() { return *invoker_; }
  CooperativeCheckpointer& cooperative() { return *cooperative_; }
  ExternalCheckpointer* external() { return external_.get(); }

  void register_action(ActionConfig config) { gateway_->register_action(std::move(config)); }

  // Dependencies for a runner hosted by this platform.
  RunnerDeps runner_deps(const std::string& action_name);

  // Invokes the action, waits until the whole chain has settled and collects
  // the record, the report and the chain's activations.
  ChainRun run_chain(const std::string& action, const json& params);

 private:
  std::unique_ptr<ActionInstance> make_instance(const ActionConfig& config);

  PlatformOptions options_;
  std::unique_ptr<Clock> clock_;
  std::unique_ptr<IdSource> ids_;
  WorkloadRegistry registry_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<CheckpointRepo> checkpoints_;
  std::unique_ptr<ResultsRepo> results_;
  std::unique_ptr<CooperativeCheckpointer> cooperative_;
  std::unique_ptr<ExternalCheckpointer> external_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<GatewayInvoker> invoker_;
  bool owns_scratch_ = false;
};

}  // namespace faaschain
