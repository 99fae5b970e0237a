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

#include "faaschain/runner.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>

#include "faaschain/partials_receiver.hpp"

namespace faaschain {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// ActivationControl

ActivationControl::ActivationControl(Clock& clock, std::int64_t deadline_ms, std::stop_token stop)
    : clock_(clock), deadline_ms_(deadline_ms), stop_(std::move(stop)) {}

void ActivationControl::charge(std::int64_t ms) {
  if (stop_.stop_requested()) throw ActivationKilled();
  const auto now = clock_.now_ms();
  if (now + ms > deadline_ms_) {
    clock_.sleep_for(std::max<std::int64_t>(0, deadline_ms_ - now), stop_);
    throw ActivationKilled();
  }
  if (!clock_.sleep_for(ms, stop_)) throw ActivationKilled();
}

void ActivationControl::check() const {
  if (stop_.stop_requested() || clock_.now_ms() > deadline_ms_) throw ActivationKilled();
}

bool ActivationControl::expired() const { return stop_.stop_requested() || clock_.now_ms() >= deadline_ms_; }

// ---------------------------------------------------------------------------
// config and outcome encodings

std::string_view to_string(RestorePolicy policy) {
  return policy == RestorePolicy::fail_chain ? "fail_chain" : "restart_from_scratch";
}

RestorePolicy parse_restore_policy(std::string_view text) {
  if (text == "fail_chain") return RestorePolicy::fail_chain;
  if (text == "restart_from_scratch") return RestorePolicy::restart_from_scratch;
  throw Error(ErrorKind::invalid_argument, "unknown restore policy '" + std::string(text) + "'");
}

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::completed: return "completed";
    case OutcomeKind::checkpointed_and_reinvoked: return "checkpointed_and_reinvoked";
    case OutcomeKind::failed: return "failed";
  }
  return "failed";
}

std::string_view to_string(RestoreKind kind) {
  switch (kind) {
    case RestoreKind::fresh: return "fresh";
    case RestoreKind::resumed: return "resumed";
    case RestoreKind::failed: return "failed";
  }
  return "failed";
}

void RunnerConfig::validate() const {
  if (checkpoint_trigger_ms <= 0) throw Error(ErrorKind::invalid_argument, "checkpoint_trigger_ms must be > 0");
  if (max_chain_length < 1) throw Error(ErrorKind::invalid_argument, "max_chain_length must be >= 1");
  if (unit_ms <= 0) throw Error(ErrorKind::invalid_argument, "unit_ms must be > 0");
  if (delayed_termination_ms && *delayed_termination_ms < 0) {
    throw Error(ErrorKind::invalid_argument, "delayed_termination_ms must be >= 0");
  }
}

void to_json(json& j, const RunnerConfig& v) {
  j = json{{"checkpoint_trigger_ms", v.checkpoint_trigger_ms},
           {"fencing_enabled", v.fencing_enabled},
           {"max_chain_length", v.max_chain_length},
           {"restore_policy", to_string(v.restore_policy)},
           {"enabled", v.enabled},
           {"unit_ms", v.unit_ms},
           {"delayed_termination_ms", v.delayed_termination_ms ? json(*v.delayed_termination_ms) : json()}};
}

void from_json(const json& j, RunnerConfig& v) {
  RunnerConfig d;
  v.checkpoint_trigger_ms = j.value("checkpoint_trigger_ms", d.checkpoint_trigger_ms);
  v.fencing_enabled = j.value("fencing_enabled", d.fencing_enabled);
  v.max_chain_length = j.value("max_chain_length", d.max_chain_length);
  v.restore_policy = parse_restore_policy(j.value("restore_policy", std::string(to_string(d.restore_policy))));
  v.enabled = j.value("enabled", d.enabled);
  v.unit_ms = j.value("unit_ms", d.unit_ms);
  v.delayed_termination_ms.reset();
  if (auto it = j.find("delayed_termination_ms"); it != j.end() && !it->is_null()) {
    v.delayed_termination_ms = it->get<std::int64_t>();
  }
}

void to_json(json& j, const InvocationTimings& v) {
  j = json{{"restore_ms", v.restore_ms},
           {"work_ms", v.work_ms},
           {"checkpoint_ms", v.checkpoint_ms},
           {"upload_ms", v.upload_ms},
           {"invoke_ms", v.invoke_ms}};
}

void from_json(const json& j, InvocationTimings& v) {
  v.restore_ms = j.value("restore_ms", std::int64_t{0});
  v.work_ms = j.value("work_ms", std::int64_t{0});
  v.checkpoint_ms = j.value("checkpoint_ms", std::int64_t{0});
  v.upload_ms = j.value("upload_ms", std::int64_t{0});
  v.invoke_ms = j.value("invoke_ms", std::int64_t{0});
}

namespace {

OutcomeKind parse_outcome_kind(const std::string& s) {
  if (s == "completed") return OutcomeKind::completed;
  if (s == "checkpointed_and_reinvoked") return OutcomeKind::checkpointed_and_reinvoked;
  if (s == "failed") return OutcomeKind::failed;
  throw Error(ErrorKind::invalid_argument, "unknown outcome kind '" + s + "'");
}

RestoreKind parse_restore_kind(const std::string& s) {
  if (s == "fresh") return RestoreKind::fresh;
  if (s == "resumed") return RestoreKind::resumed;
  if (s == "failed") return RestoreKind::failed;
  throw Error(ErrorKind::invalid_argument, "unknown restore kind '" + s + "'");
}

std::optional<FinalizeStatus> parse_finalize(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>() == "accepted" ? FinalizeStatus::accepted : FinalizeStatus::duplicate_rejected;
}

json opt_status(const std::optional<FinalizeStatus>& s) { return s ? json(to_string(*s)) : json(); }

}  // namespace

void to_json(json& j, const InvocationOutcome& v) {
  j = json{{"kind", to_string(v.kind)},
           {"chain_id", v.chain_id},
           {"seq", v.seq},
           {"result", v.result ? *v.result : json()},
           {"manifest", v.manifest ? json(*v.manifest) : json()},
           {"next_activation_id", v.next_activation_id ? json(*v.next_activation_id) : json()},
           {"timings", v.timings},
           {"restore",
            {{"kind", to_string(v.restore.kind)},
             {"from_seq", v.restore.from_seq},
             {"reason", v.restore.reason},
             {"detail", v.restore.detail},
             {"degraded", v.restore.degraded}}},
           {"finalize", opt_status(v.finalize)},
           {"orphan_finalize", opt_status(v.orphan_finalize)},
           {"error", v.error},
           {"checkpoint_trigger_ms", v.checkpoint_trigger_ms}};
}

void from_json(const json& j, InvocationOutcome& v) {
  v.kind = parse_outcome_kind(j.at("kind").get<std::string>());
  v.chain_id = j.at("chain_id").get<ChainId>();
  v.seq = j.at("seq").get<std::int64_t>();
  v.result.reset();
  if (auto it = j.find("result"); it != j.end() && !it->is_null()) v.result = *it;
  v.manifest.reset();
  if (auto it = j.find("manifest"); it != j.end() && !it->is_null()) v.manifest = it->get<CheckpointManifest>();
  v.next_activation_id.reset();
  if (auto it = j.find("next_activation_id"); it != j.end() && !it->is_null()) {
    v.next_activation_id = it->get<std::string>();
  }
  v.timings = j.value("timings", json::object()).get<InvocationTimings>();
  const auto r = j.value("restore", json::object());
  v.restore.kind = parse_restore_kind(r.value("kind", std::string("fresh")));
  v.restore.from_seq = r.value("from_seq", std::int64_t{0});
  v.restore.reason = r.value("reason", std::string());
  v.restore.detail = r.value("detail", std::string());
  v.restore.degraded = r.value("degraded", false);
  v.finalize = parse_finalize(j, "finalize");
  v.orphan_finalize = parse_finalize(j, "orphan_finalize");
  v.error = j.value("error", std::string());
  v.checkpoint_trigger_ms = j.value("checkpoint_trigger_ms", std::int64_t{0});
}

// ---------------------------------------------------------------------------
// Runner

struct Runner::Invocation {
  Invocation(const InvocationContext& c, const json& p, ActivationControl& ctl)
      : ctx(c), params(p), control(ctl), clock(ctl.clock()) {}

  InvocationContext ctx;
  const json& params;
  ActivationControl& control;
  Clock& clock;
  std::int64_t started_at = 0;
  std::int64_t trigger_at = 0;
  fs::path work_dir;
  LaunchOptions launch;
  InvocationOutcome outcome;

  // Completion signal from a threaded workload. Declared before the workload
  // so it outlives the worker thread.
  std::mutex mu;
  std::condition_variable_any cv;
  bool exited = false;

  std::unique_ptr<PartialsReceiver> receiver;
  std::unique_ptr<ManagedWorkload> workload;
};

namespace {

std::atomic<std::uint64_t> g_work_dir_counter{0};

fs::path default_scratch_dir() {
  return fs::temp_directory_path() / ("faaschain-" + std::to_string(::getpid()));
}

std::string error_text(const std::exception& e) {
  if (auto* err = dynamic_cast<const Error*>(&e)) return std::string(to_string(err->kind())) + ": " + err->what();
  return e.what();
}

}  // namespace

Runner::Runner(RunnerConfig config, RunnerDeps deps) : config_(std::move(config)), deps_(std::move(deps)) {
  config_.validate();
  if (!deps_.checkpoints || !deps_.results || !deps_.clock) {
    throw Error(ErrorKind::invalid_argument, "runner needs a checkpoint repository, a results repository and a clock");
  }
  if (!deps_.cooperative && !deps_.external) throw Error(ErrorKind::invalid_argument, "runner needs a checkpointer");
  if (deps_.scratch_dir.empty()) deps_.scratch_dir = default_scratch_dir();
}

Checkpointer& Runner::checkpointer_for(ExecutionMode mode) const {
  auto* cp = mode == ExecutionMode::cooperative ? deps_.cooperative : deps_.external;
  if (!cp) {
    throw Error(ErrorKind::tool_unavailable, "no checkpointer configured for mode " + std::string(to_string(mode)));
  }
  return *cp;
}

void Runner::emit(std::string_view event, const Invocation& inv, json fields) {
  if (!deps_.log) return;
  fields["chain_id"] = inv.ctx.chain_id.value;
  fields["seq"] = inv.ctx.seq;
  fields["activation_id"] = inv.ctx.activation_id;
  fields["at"] = inv.clock.now_ms();
  deps_.log->info(event, std::move(fields));
}

InvocationOutcome Runner::execute_invocation(const InvocationContext& ctx, const json& params,
                                             ActivationControl& control) {
  Invocation inv(ctx, params, control);
  auto& out = inv.outcome;
  out.chain_id = ctx.chain_id;
  out.seq = ctx.seq;
  out.checkpoint_trigger_ms = config_.checkpoint_trigger_ms;
  inv.started_at = inv.clock.now_ms();
  inv.trigger_at = inv.started_at + config_.checkpoint_trigger_ms;

  if (control.on_context) control.on_context(ctx);

  auto fail = [&](const std::string& message) {
    out.kind = OutcomeKind::failed;
    out.error = message;
    emit("failed", inv, {{"error", message}});
    try {
      deps_.results->mark_failed(ctx.chain_id, message);
    } catch (const std::exception& e) {
      emit("mark-failed-error", inv, {{"error", error_text(e)}});
    }
    return out;
  };

  try {
    deps_.results->record_invocation(ctx.chain_id, ctx.seq);
  } catch (const std::exception& e) {
    return fail("results repository: " + error_text(e));
  }
  emit("invocation-start", inv, {{"enabled", config_.enabled}});

  if (ctx.seq > config_.max_chain_length) {
    return fail("chain exceeded max_chain_length " + std::to_string(config_.max_chain_length));
  }
  if (config_.enabled && config_.checkpoint_trigger_ms >= ctx.timeout_ms) {
    return fail("checkpoint trigger " + std::to_string(config_.checkpoint_trigger_ms) +
                " ms is not below the action timeout " + std::to_string(ctx.timeout_ms) + " ms");
  }

  inv.work_dir = deps_.scratch_dir / ctx.chain_id.value /
                 ("seq-" + std::to_string(ctx.seq) + "-" + std::to_string(++g_work_dir_counter));
  struct Cleanup {
    Invocation& inv;
    ~Cleanup() {
      if (inv.workload) inv.workload->terminate();
      inv.workload.reset();
      inv.receiver.reset();
      std::error_code ec;
      fs::remove_all(inv.work_dir, ec);
    }
  } cleanup{inv};

  try {
    fs::create_directories(inv.work_dir);
    auto* results = deps_.results;
    const auto chain = ctx.chain_id;
    const auto seq = ctx.seq;
    inv.launch.partial_sink = [results, chain, seq](const json& payload) { results->put_partial(chain, seq, payload); };
    inv.launch.work_dir = inv.work_dir / "run";
    if (ctx.spec.mode == ExecutionMode::external_process) {
      inv.receiver = std::make_unique<PartialsReceiver>(inv.launch.partial_sink);
      inv.launch.env["LF_PARTIALS_URL"] = inv.receiver->url();
      inv.launch.env["LF_UNIT_MS"] = std::to_string(config_.unit_ms);
    }

    // Restore or launch.
    const auto restore_start = inv.clock.now_ms();
    if (config_.enabled) {
      auto restored = restore_if_available(ctx, inv.work_dir / "restore", inv.launch);
      out.restore = restored.decision;
      emit("restore", inv,
           {{"decision", to_string(out.restore.kind)},
            {"from_seq", out.restore.from_seq},
            {"reason", out.restore.reason},
            {"degraded", out.restore.degraded}});
      if (out.restore.kind == RestoreKind::failed) {
        out.timings.restore_ms = inv.clock.now_ms() - restore_start;
        return fail("restore failed (" + out.restore.reason + "): " + out.restore.detail);
      }
      inv.workload = std::move(restored.workload);
    }
    if (!inv.workload) inv.workload = checkpointer_for(ctx.spec.mode).launch(ctx.spec, std::nullopt, inv.launch);
    out.timings.restore_ms = inv.clock.now_ms() - restore_start;
    control.check();

    emit("work-start", inv);
    if (config_.enabled) emit("trigger-armed", inv, {{"trigger_at", inv.trigger_at}});

    if (ctx.spec.mode == ExecutionMode::external_process) {
      drive_external(inv);
    } else if (inv.clock.mode() == ClockMode::simulated) {
      drive_simulated(inv);
    } else {
      drive_threaded(inv);
    }
  } catch (const ActivationKilled&) {
    emit("killed", inv, {{"deadline", control.deadline_ms()}});
    if (inv.workload) emit("workload-output", inv, {{"tail", inv.workload->output_tail()}});
    throw;
  } catch (const std::exception& e) {
    if (inv.workload) emit("workload-output", inv, {{"tail", inv.workload->output_tail()}});
    return fail(error_text(e));
  }

  if (out.kind == OutcomeKind::failed && !out.error.empty()) {
    try {
      deps_.results->mark_failed(ctx.chain_id, out.error);
    } catch (const std::exception&) {
    }
  }
  return out;
}

Runner::Restored Runner::restore_if_available(const InvocationContext& ctx, const fs::path& work_dir,
                                              const LaunchOptions& launch) {
  Restored out;
  auto give_up = [&](std::string reason, std::string detail) {
    out.decision.reason = std::move(reason);
    out.decision.detail = std::move(detail);
    if (config_.restore_policy == RestorePolicy::restart_from_scratch) {
      out.decision.kind = RestoreKind::fresh;
      out.decision.degraded = true;
      if (deps_.log) {
        deps_.log->warn("restore-degraded", {{"chain_id", ctx.chain_id.value},
                                             {"seq", ctx.seq},
                                             {"reason", out.decision.reason},
                                             {"detail", out.decision.detail}});
      }
    } else {
      out.decision.kind = RestoreKind::failed;
    }
    out.workload.reset();
    return std::move(out);
  };

  std::optional<StoredCheckpoint> stored;
  try {
    stored = deps_.checkpoints->get_latest(ctx.chain_id);
  } catch (const Error& e) {
    return give_up(e.kind() == ErrorKind::corrupt ? "corrupt" : "restore-error", e.what());
  }
  if (!stored) return out;

  const auto& manifest = stored->manifest;
  out.decision.from_seq = manifest.seq;
  try {
    fs::create_directories(work_dir);
    for (const auto& f : manifest.files) {
      auto bytes = stored->reader(f.relative_path);
      if (!bytes) return give_up("corrupt", "missing blob " + f.relative_path);
      const auto target = work_dir / f.relative_path;
      fs::create_directories(target.parent_path());
      write_file_atomic(target, *bytes);
    }
  } catch (const std::exception& e) {
    return give_up("restore-error", std::string("download failed: ") + e.what());
  }
  auto report = verify_manifest(manifest, directory_reader(work_dir));
  if (!report.pass) {
    for (const auto& f : report.files) {
      if (!f.ok) return give_up("corrupt", f.relative_path + ": " + f.reason);
    }
  }
  try {
    out.workload = checkpointer_for(ctx.spec.mode).restore(manifest, work_dir, ctx.spec, launch);
  } catch (const Error& e) {
    return give_up("restore-error", std::string(to_string(e.kind())) + ": " + e.what());
  }
  out.decision.kind = RestoreKind::resumed;
  return out;
}

FinalizeStatus Runner::finalize(const InvocationContext& ctx, const json& result) {
  const auto now = deps_.clock->now_ms();
  auto status = deps_.results->finalize(ctx.chain_id, ctx.seq, result, config_.fencing_enabled, now);
  if (status == FinalizeStatus::duplicate_rejected && deps_.log) {
    deps_.log->warn("duplicate-final-rejected",
                    {{"chain_id", ctx.chain_id.value}, {"seq", ctx.seq}, {"payload", result}, {"at", now}});
  }
  return status;
}

void Runner::complete(Invocation& inv, const json& result) {
  auto& out = inv.outcome;
  out.result = result;
  out.manifest.reset();
  try {
    out.finalize = finalize(inv.ctx, result);
  } catch (const std::exception& e) {
    out.kind = OutcomeKind::failed;
    out.error = "results repository: " + error_text(e);
    emit("failed", inv, {{"error", out.error}});
    return;
  }
  out.kind = OutcomeKind::completed;
  emit("finalized", inv, {{"status", to_string(*out.finalize)}});
}

void Runner::drive_simulated(Invocation& inv) {
  auto* handle = dynamic_cast<CooperativeWorkload*>(inv.workload.get());
  if (!handle) throw Error(ErrorKind::precondition, "simulated driving needs a cooperative workload");
  const auto work_start = inv.clock.now_ms();
  for (;;) {
    // Completion is checked before the trigger, so a workload that finishes
    // exactly at the trigger instant completes.
    if (handle->completed()) {
      inv.outcome.timings.work_ms = inv.clock.now_ms() - work_start;
      complete(inv, *handle->result());
      return;
    }
    if (config_.enabled && inv.clock.now_ms() >= inv.trigger_at) {
      inv.outcome.timings.work_ms = inv.clock.now_ms() - work_start;
      checkpoint_and_reinvoke(inv);
      return;
    }
    inv.control.charge(config_.unit_ms);
    handle->step();
  }
}

void Runner::drive_threaded(Invocation& inv) {
  auto* handle = dynamic_cast<CooperativeWorkload*>(inv.workload.get());
  if (!handle) throw Error(ErrorKind::precondition, "threaded driving needs a cooperative workload");
  const auto unit_ms = config_.unit_ms;
  Clock& clock = inv.clock;
  const auto work_start = clock.now_ms();
  handle->start(
      [handle, unit_ms, &clock](std::stop_token stop) { return !handle->paced() || clock.sleep_for(unit_ms, stop); },
      [&inv] {
        {
          std::lock_guard lock(inv.mu);
          inv.exited = true;
        }
        inv.cv.notify_all();
      });

  const auto wake_at = config_.enabled ? std::min(inv.trigger_at, inv.control.deadline_ms()) : inv.control.deadline_ms();
  auto stop = inv.control.stop_token();
  {
    std::unique_lock lock(inv.mu);
    while (!inv.exited && !stop.stop_requested()) {
      const auto now = clock.now_ms();
      if (now >= wake_at) break;
      inv.cv.wait_for(lock, stop, std::chrono::milliseconds(std::min<std::int64_t>(wake_at - now, 50)),
                      [&] { return inv.exited; });
    }
  }
  inv.outcome.timings.work_ms = clock.now_ms() - work_start;
  if (stop.stop_requested()) throw ActivationKilled();

  if (handle->completed()) {
    complete(inv, *handle->result());
    return;
  }
  if (handle->state() == HandleState::failed) {
    throw Error(ErrorKind::precondition, "workload failed: " + handle->error().value_or("unknown error"));
  }
  if (!config_.enabled || clock.now_ms() >= inv.control.deadline_ms()) throw ActivationKilled();
  checkpoint_and_reinvoke(inv);
}

void Runner::drive_external(Invocation& inv) {
  auto* handle = dynamic_cast<ExternalWorkload*>(inv.workload.get());
  if (!handle) throw Error(ErrorKind::precondition, "external driving needs an external workload");
  Clock& clock = inv.clock;
  const auto work_start = clock.now_ms();
  const auto wake_at = config_.enabled ? std::min(inv.trigger_at, inv.control.deadline_ms()) : inv.control.deadline_ms();
  auto stop = inv.control.stop_token();

  std::optional<int> status;
  for (;;) {
    status = handle->exit_status();
    if (status || stop.stop_requested()) break;
    const auto now = clock.now_ms();
    if (now >= wake_at) break;
    clock.sleep_for(std::min<std::int64_t>(wake_at - now, 20), stop);
  }
  inv.outcome.timings.work_ms = clock.now_ms() - work_start;
  if (!status && stop.stop_requested()) throw ActivationKilled();

  if (status) {
    emit("workload-output", inv, {{"tail", handle->output_tail()}, {"exit_status", *status}});
    auto result = handle->result();
    if (*status != 0 || !result) {
      throw Error(ErrorKind::precondition,
                  "workload process exited with status " + std::to_string(*status) + " and no result");
    }
    complete(inv, *result);
    return;
  }
  if (!config_.enabled || clock.now_ms() >= inv.control.deadline_ms()) throw ActivationKilled();
  checkpoint_and_reinvoke(inv);
}

json Runner::successor_params(const Invocation& inv) const {
  json params = inv.params.is_object() ? inv.params : json::object();
  const auto next = advance_context(inv.ctx);
  params[kChainIdParam] = next.chain_id.value;
  params[kSeqParam] = next.seq;
  return params;
}

void Runner::checkpoint_and_reinvoke(Invocation& inv) {
  auto& out = inv.outcome;
  auto& clock = inv.clock;
  auto& checkpointer = checkpointer_for(inv.ctx.spec.mode);
  const auto ckpt_dir = inv.work_dir / "ckpt";

  emit("checkpoint-start", inv);
  auto t = clock.now_ms();
  CheckpointManifest manifest;
  try {
    manifest = checkpointer.checkpoint(*inv.workload, ckpt_dir, inv.ctx.chain_id, inv.ctx.seq);
  } catch (const Error& e) {
    out.timings.checkpoint_ms = clock.now_ms() - t;
    if (e.kind() == ErrorKind::already_completed) {
      // The workload won the race to the state cell; no checkpoint exists.
      emit("checkpoint-preempted", inv, {{"detail", e.what()}});
      auto result = inv.workload->result();
      if (!result) throw Error(ErrorKind::precondition, "workload completed without a result");
      complete(inv, *result);
      return;
    }
    throw Error(e.kind(), std::string("checkpoint failed: ") + e.what());
  }
  out.timings.checkpoint_ms = clock.now_ms() - t;
  const auto snapshot_at = clock.now_ms();
  emit("checkpoint-done", inv, {{"total_bytes", manifest.total_bytes()}, {"files", manifest.files.size()}});
  inv.control.check();

  auto* coop = dynamic_cast<CooperativeWorkload*>(inv.workload.get());
  const bool race = config_.delayed_termination_ms.has_value();
  // In real time the checkpointed workload runs on while the image is
  // uploaded and the successor invoked.
  if (race && coop && coop->started()) coop->resume();

  t = clock.now_ms();
  try {
    deps_.checkpoints->put(manifest, directory_reader(ckpt_dir));
  } catch (const std::exception& e) {
    out.timings.upload_ms = clock.now_ms() - t;
    throw Error(ErrorKind::storage, "upload failed: " + error_text(e));
  }
  out.timings.upload_ms = clock.now_ms() - t;
  out.manifest = manifest;
  emit("upload-done", inv, {{"upload_ms", out.timings.upload_ms}});
  inv.control.check();

  t = clock.now_ms();
  try {
    if (!deps_.invoker) throw Error(ErrorKind::precondition, "no invoker configured");
    out.next_activation_id = deps_.invoker->invoke_async(deps_.action_name, successor_params(inv));
  } catch (const std::exception& e) {
    out.timings.invoke_ms = clock.now_ms() - t;
    // The manifest stays in the repository; a manual invoke resumes the chain.
    throw Error(ErrorKind::precondition, "re-invocation failed: " + error_text(e));
  }
  out.timings.invoke_ms = clock.now_ms() - t;
  out.kind = OutcomeKind::checkpointed_and_reinvoked;
  emit("reinvoked", inv, {{"next_activation_id", *out.next_activation_id}});

  const auto cost = out.timings.checkpoint_ms + out.timings.upload_ms + out.timings.invoke_ms;
  const auto margin = inv.ctx.timeout_ms - config_.checkpoint_trigger_ms;
  if (margin < 2 * cost && deps_.log) {
    deps_.log->warn("trigger-margin-low", {{"chain_id", inv.ctx.chain_id.value},
                                           {"seq", inv.ctx.seq},
                                           {"margin_ms", margin},
                                           {"observed_cost_ms", cost}});
  }

  if (race) {
    const auto window = out.timings.upload_ms + out.timings.invoke_ms + *config_.delayed_termination_ms;
    std::optional<json> late;
    if (clock.mode() == ClockMode::simulated && coop && !coop->started()) {
      // The orphan's steps are placed on its own timeline starting at the
      // snapshot; it is stopped at the end of the window or the deadline.
      const auto limit = std::min(snapshot_at + window, inv.control.deadline_ms());
      auto shadow = snapshot_at;
      try {
        while (!coop->completed() && shadow + config_.unit_ms <= limit) {
          shadow += config_.unit_ms;
          coop->step();
        }
      } catch (const std::exception& e) {
        emit("orphan-failed", inv, {{"error", error_text(e)}});
      }
      if (auto* sim = dynamic_cast<SimulatedClock*>(&clock)) sim->advance_to(coop->completed() ? shadow : limit);
      if (coop->completed()) late = coop->result();
    } else if (coop) {
      std::unique_lock lock(inv.mu);
      inv.cv.wait_for(lock, inv.control.stop_token(),
                      std::chrono::milliseconds(*config_.delayed_termination_ms), [&] { return inv.exited; });
      if (coop->completed()) late = coop->result();
    } else if (auto* ext = dynamic_cast<ExternalWorkload*>(inv.workload.get())) {
      const auto until = clock.now_ms() + *config_.delayed_termination_ms;
      while (!ext->exit_status() && clock.now_ms() < until) {
        clock.sleep_for(std::min<std::int64_t>(until - clock.now_ms(), 20), inv.control.stop_token());
      }
      if (ext->exit_status() == 0) late = ext->result();
    }
    if (late) {
      try {
        out.orphan_finalize = finalize(inv.ctx, *late);
        emit("orphan-finalized", inv, {{"status", to_string(*out.orphan_finalize)}});
      } catch (const std::exception& e) {
        emit("orphan-finalize-error", inv, {{"error", error_text(e)}});
      }
    }
  }

  inv.workload->terminate();
  emit("terminated", inv);
}

}  // namespace faaschain
