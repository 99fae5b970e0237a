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

#include "faaschain/gateway.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>

#include "faaschain/digest.hpp"
#include "faaschain/http.hpp"

namespace faaschain {

namespace fs = std::filesystem;

void ActionConfig::validate() const {
  if (name.empty()) throw Error(ErrorKind::invalid_argument, "action name must not be empty");
  if (timeout_ms <= 0 || timeout_ms > kMaxActionTimeoutMs) {
    throw Error(ErrorKind::invalid_argument, "timeout_ms must be in (0, " + std::to_string(kMaxActionTimeoutMs) + "]");
  }
  if (memory_mb <= 0 || memory_mb > kMaxActionMemoryMb) {
    throw Error(ErrorKind::invalid_argument, "memory_mb must be in (0, " + std::to_string(kMaxActionMemoryMb) + "]");
  }
  if (concurrency_limit < 1) throw Error(ErrorKind::invalid_argument, "concurrency_limit must be >= 1");
  runner.validate();
}

void to_json(json& j, const ActionConfig& v) {
  j = json{{"name", v.name},
           {"timeout_ms", v.timeout_ms},
           {"memory_mb", v.memory_mb},
           {"concurrency_limit", v.concurrency_limit},
           {"runner", v.runner},
           {"url", v.url}};
}

void from_json(const json& j, ActionConfig& v) {
  ActionConfig d;
  v.name = j.at("name").get<std::string>();
  v.timeout_ms = j.value("timeout_ms", d.timeout_ms);
  v.memory_mb = j.value("memory_mb", d.memory_mb);
  v.concurrency_limit = j.value("concurrency_limit", d.concurrency_limit);
  v.runner = j.contains("runner") ? j["runner"].get<RunnerConfig>() : d.runner;
  v.url = j.value("url", std::string());
}

void to_json(json& j, const ChainReport& v) {
  j = json{{"chain_id", v.chain_id},
           {"status", v.status},
           {"invocation_count", v.invocation_count},
           {"activation_count", v.activation_count},
           {"total_billed_ms", v.total_billed_ms},
           {"single_shot_ms_estimate", v.single_shot_ms_estimate},
           {"double_billed_ms", v.double_billed_ms},
           {"timeout_killed", v.timeout_killed},
           {"final_count", v.final_count},
           {"trilemma",
            {{"double_billing_violated", v.double_billing_violated},
             {"substitution_satisfied", v.substitution_satisfied}}}};
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(Clock& clock, IdSource& ids, ResultsRepo& results, ActionFactory factory, EventLog* log)
    : clock_(clock), ids_(ids), results_(results), factory_(std::move(factory)), log_(log) {}

Gateway::~Gateway() {
  wait_idle();
  std::vector<std::jthread> threads;
  {
    std::lock_guard lock(mu_);
    threads.swap(threads_);
  }
  threads.clear();
}

void Gateway::register_action(ActionConfig config) {
  config.validate();
  std::lock_guard lock(mu_);
  auto name = config.name;
  actions_[name] = std::move(config);
}

const ActionConfig& Gateway::action(const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = actions_.find(name);
  if (it == actions_.end()) throw Error(ErrorKind::not_found, "unknown action '" + name + "'");
  return it->second;
}

Gateway::Invocation Gateway::invoke(const std::string& action, const json& params, bool blocking) {
  std::unique_lock lock(mu_);
  auto it = actions_.find(action);
  if (it == actions_.end()) throw Error(ErrorKind::not_found, "unknown action '" + action + "'");
  auto& count = in_flight_[action];
  if (count >= it->second.concurrency_limit) {
    throw Error(ErrorKind::throttled, "action '" + action + "' is at its concurrency limit of " +
                                          std::to_string(it->second.concurrency_limit));
  }
  ++count;

  Pending pending{ids_.next("act"), action, params};
  Slot slot;
  slot.record.activation_id = pending.activation_id;
  slot.record.action_name = action;
  slot.record.params_digest = sha256_hex(canonical(params));
  slot.record.start = clock_.now_ms();
  slots_[pending.activation_id] = slot;
  order_.push_back(pending.activation_id);
  const auto id = pending.activation_id;
  if (log_) log_->info("invoke", {{"activation_id", id}, {"action", action}, {"blocking", blocking}});

  if (clock_.mode() == ClockMode::simulated) {
    queue_.push_back(std::move(pending));
    if (draining_) return {id, std::nullopt};
    lock.unlock();
    drain();
    lock.lock();
    if (!blocking) return {id, std::nullopt};
    return {id, slots_.at(id).record};
  }

  auto source = std::make_shared<std::stop_source>();
  ++live_threads_;
  threads_.emplace_back([this, pending = std::move(pending), source] {
    run_activation(pending, source->get_token(), source);
    std::lock_guard done_lock(mu_);
    --live_threads_;
    cv_.notify_all();
  });
  if (!blocking) return {id, std::nullopt};
  cv_.wait(lock, [&] { return slots_.at(id).done; });
  return {id, slots_.at(id).record};
}

void Gateway::drain() {
  {
    std::lock_guard lock(mu_);
    if (draining_) return;
    draining_ = true;
  }
  for (;;) {
    Pending next;
    {
      std::lock_guard lock(mu_);
      if (queue_.empty()) {
        draining_ = false;
        cv_.notify_all();
        return;
      }
      next = std::move(queue_.front());
      queue_.pop_front();
    }
    run_activation(next, {}, nullptr);
  }
}

void Gateway::finish(const std::string& id, const std::function<void(ActivationRecord&)>& fill) {
  std::optional<ActivationRecord> killed;
  {
    std::lock_guard lock(mu_);
    auto& slot = slots_.at(id);
    if (slot.done) return;
    fill(slot.record);
    slot.done = true;
    --in_flight_[slot.record.action_name];
    if (slot.record.outcome == ActivationOutcome::timeout_killed) killed = slot.record;
    if (log_) {
      log_->info("activation-end", {{"activation_id", id},
                                    {"outcome", to_string(slot.record.outcome)},
                                    {"billed_ms", slot.record.billed_ms}});
    }
    cv_.notify_all();
  }
  if (killed) attribute_kill(*killed);
}

void Gateway::attribute_kill(const ActivationRecord& record) {
  if (!record.chain_id) return;
  try {
    results_.mark_failed(*record.chain_id, "activation " + record.activation_id + " timed out");
  } catch (const std::exception& e) {
    if (log_) log_->warn("mark-failed-error", {{"activation_id", record.activation_id}, {"error", e.what()}});
  }
}

namespace {

// Fills chain attribution and work time from a run response.
void absorb_response(ActivationRecord& rec, const json& body) {
  rec.response = body;
  const json* outcome = nullptr;
  if (body.is_object() && body.contains("result") && body["result"].is_object()) outcome = &body["result"];
  if (body.is_object() && body.contains("outcome") && body["outcome"].is_object()) outcome = &body["outcome"];
  if (!outcome) return;
  try {
    if (outcome->contains("chain_id")) rec.chain_id = (*outcome)["chain_id"].get<ChainId>();
    rec.seq = outcome->value("seq", rec.seq);
    if (outcome->contains("timings")) rec.work_ms = (*outcome)["timings"].value("work_ms", std::int64_t{0});
  } catch (const json::exception&) {
  }
}

}  // namespace

void Gateway::run_activation(const Pending& pending, std::stop_token stop, std::shared_ptr<std::stop_source> source) {
  ActionConfig config;
  std::int64_t start = 0;
  {
    std::lock_guard lock(mu_);
    config = actions_.at(pending.action);
    start = clock_.now_ms();
    slots_.at(pending.activation_id).record.start = start;
  }
  const auto deadline = start + config.timeout_ms;
  const auto& id = pending.activation_id;

  auto killed_fill = [&](ActivationRecord& rec) {
    rec.end = deadline;
    rec.billed_ms = config.timeout_ms;
    rec.outcome = ActivationOutcome::timeout_killed;
  };

  // Real time: a watchdog stops the activation at its deadline and records
  // the kill right away, whether or not the instance notices promptly.
  std::mutex dog_mu;
  std::condition_variable_any dog_cv;
  bool finished = false;
  std::jthread dog;
  if (source) {
    dog = std::jthread([&](std::stop_token dog_stop) {
      std::unique_lock lock(dog_mu);
      const auto wait = std::max<std::int64_t>(0, deadline - clock_.now_ms());
      dog_cv.wait_for(lock, dog_stop, std::chrono::milliseconds(wait), [&] { return finished; });
      if (finished || dog_stop.stop_requested()) return;
      lock.unlock();
      source->request_stop();
      finish(id, killed_fill);
    });
  }

  ActivationControl control(clock_, deadline, stop);
  control.on_context = [this, id](const InvocationContext& ctx) {
    std::lock_guard lock(mu_);
    auto& rec = slots_.at(id).record;
    rec.chain_id = ctx.chain_id;
    rec.seq = ctx.seq;
  };

  HttpReply reply{500, json::object()};
  bool killed = false;
  try {
    auto instance = factory_(config);
    json init{{"value", {{"name", config.name}, {"main", "main"}, {"code", ""}, {"binary", false}}}};
    reply = instance->init(init);
    if (reply.status == 200) {
      reply = instance->run({{"value", pending.params}, {"activation_id", id}, {"deadline", deadline}}, control);
    }
  } catch (const ActivationKilled&) {
    killed = true;
  } catch (const std::exception& e) {
    reply = {500, {{"error", e.what()}}};
  }
  if (dog.joinable()) {
    {
      std::lock_guard lock(dog_mu);
      finished = true;
    }
    dog_cv.notify_all();
    dog.join();
  }

  const auto end = clock_.now_ms();
  if (killed || end > deadline) {
    finish(id, [&](ActivationRecord& rec) {
      killed_fill(rec);
      if (!killed) absorb_response(rec, reply.body);
    });
    return;
  }
  finish(id, [&](ActivationRecord& rec) {
    rec.end = end;
    rec.billed_ms = end - start;
    rec.outcome = reply.status == 200 ? ActivationOutcome::success : ActivationOutcome::error;
    absorb_response(rec, reply.body);
  });
}

std::optional<ActivationRecord> Gateway::activation(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) return std::nullopt;
  return it->second.record;
}

std::vector<ActivationRecord> Gateway::activations() const {
  std::lock_guard lock(mu_);
  std::vector<ActivationRecord> out;
  out.reserve(order_.size());
  for (const auto& id : order_) out.push_back(slots_.at(id).record);
  return out;
}

std::vector<ActivationRecord> Gateway::chain_activations(const ChainId& chain_id) const {
  std::lock_guard lock(mu_);
  std::vector<ActivationRecord> out;
  for (const auto& id : order_) {
    const auto& rec = slots_.at(id).record;
    if (rec.chain_id == chain_id) out.push_back(rec);
  }
  return out;
}

ChainReport Gateway::chain_report(const ChainId& chain_id) const {
  auto record = results_.get(chain_id);
  if (!record) throw Error(ErrorKind::not_found, "unknown chain '" + chain_id.value + "'");
  if (record->status == ChainStatus::running) {
    throw Error(ErrorKind::precondition, "chain '" + chain_id.value + "' is still running");
  }
  ChainReport report;
  report.chain_id = chain_id;
  report.status = record->status;
  report.invocation_count = record->invocation_count;
  report.final_count = static_cast<std::int64_t>(record->finals.size());

  std::optional<std::int64_t> trigger;
  for (const auto& rec : chain_activations(chain_id)) {
    ++report.activation_count;
    report.total_billed_ms += rec.billed_ms;
    report.single_shot_ms_estimate += rec.work_ms;
    if (rec.outcome == ActivationOutcome::timeout_killed) ++report.timeout_killed;
    if (!trigger) {
      const json* outcome = nullptr;
      if (rec.response.is_object() && rec.response.contains("result")) outcome = &rec.response["result"];
      if (outcome && outcome->is_object() && outcome->contains("checkpoint_trigger_ms")) {
        trigger = (*outcome)["checkpoint_trigger_ms"].get<std::int64_t>();
      }
    }
  }
  report.double_billed_ms = report.total_billed_ms - report.single_shot_ms_estimate;
  report.double_billing_violated = report.invocation_count > 1;
  // A chain stands in for a single function when it delivered exactly one
  // result; a workload that fits under the trigger must also have done so in
  // a single invocation.
  const bool sub_trigger = !trigger || report.single_shot_ms_estimate < *trigger;
  report.substitution_satisfied = record->status == ChainStatus::completed && report.final_count == 1 &&
                                  (!sub_trigger || report.invocation_count == 1);
  return report;
}

void Gateway::wait_idle() {
  if (clock_.mode() == ClockMode::simulated) {
    bool nested;
    {
      std::lock_guard lock(mu_);
      nested = draining_;
    }
    if (!nested) drain();
  }
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] {
    if (live_threads_ > 0 || !queue_.empty()) return false;
    return std::all_of(in_flight_.begin(), in_flight_.end(), [](const auto& kv) { return kv.second == 0; });
  });
}

std::string GatewayInvoker::invoke_async(const std::string& action, const json& params) {
  return gateway_.invoke(action, params, false).activation_id;
}

// ---------------------------------------------------------------------------
// LocalPlatform

namespace {

class InProcessInstance final : public ActionInstance {
 public:
  InProcessInstance(ActionServerOptions options, RunnerDeps deps, const WorkloadRegistry* registry, IdSource& ids)
      : server_(std::move(options), std::move(deps), registry, ids) {}

  HttpReply init(const json& body) override { return server_.handle_init(body); }
  HttpReply run(const json& body, ActivationControl& control) override { return server_.handle_run(body, control); }

 private:
  ActionServer server_;
};

std::atomic<std::uint64_t> g_platform_counter{0};

}  // namespace

LocalPlatform::LocalPlatform(PlatformOptions options) : options_(std::move(options)) {
  clock_ = make_clock(options_.clock_mode);
  ids_ = make_id_source(options_.clock_mode);
  registry_ = WorkloadRegistry::with_builtins();
  log_ = std::make_unique<EventLog>(options_.log_dir, options_.log_echo);
  checkpoints_ = make_checkpoint_repo(options_.checkpoint_repo, *clock_);
  results_ = make_results_repo(options_.results_repo, *clock_);
  cooperative_ = std::make_unique<CooperativeCheckpointer>(registry_, *clock_, options_.workload_options);
  if (options_.external_tool) external_ = std::make_unique<ExternalCheckpointer>(*options_.external_tool, *clock_);
  if (options_.scratch_dir.empty()) {
    options_.scratch_dir = fs::temp_directory_path() / ("faaschain-platform-" + std::to_string(::getpid()) + "-" +
                                                        std::to_string(++g_platform_counter));
    owns_scratch_ = true;
  }
  gateway_ = std::make_unique<Gateway>(
      *clock_, *ids_, *results_, [this](const ActionConfig& c) { return make_instance(c); }, log_.get());
  invoker_ = std::make_unique<GatewayInvoker>(*gateway_);
}

LocalPlatform::~LocalPlatform() {
  gateway_.reset();
  if (owns_scratch_) {
    std::error_code ec;
    fs::remove_all(options_.scratch_dir, ec);
  }
}

RunnerDeps LocalPlatform::runner_deps(const std::string& action_name) {
  RunnerDeps deps;
  deps.cooperative = cooperative_.get();
  deps.external = external_.get();
  deps.checkpoints = checkpoints_.get();
  deps.results = results_.get();
  deps.invoker = invoker_.get();
  deps.clock = clock_.get();
  deps.log = log_.get();
  deps.scratch_dir = options_.scratch_dir;
  deps.action_name = action_name;
  return deps;
}

std::unique_ptr<ActionInstance> LocalPlatform::make_instance(const ActionConfig& config) {
  if (!config.url.empty()) return make_http_action_instance(config.url);
  ActionServerOptions options{config.runner, options_.queue_when_busy};
  return std::make_unique<InProcessInstance>(options, runner_deps(config.name), &registry_, *ids_);
}

ChainRun LocalPlatform::run_chain(const std::string& action, const json& params) {
  ChainRun run;
  auto invocation = gateway_->invoke(action, params, true);
  gateway_->wait_idle();
  run.first_activation_id = invocation.activation_id;
  auto first = gateway_->activation(invocation.activation_id);
  if (!first || !first->chain_id) return run;
  run.chain_id = *first->chain_id;
  run.record = results_->get(run.chain_id);
  if (run.record && run.record->status != ChainStatus::running) run.report = gateway_->chain_report(run.chain_id);
  run.activations = gateway_->chain_activations(run.chain_id);
  return run;
}

}  // namespace faaschain
