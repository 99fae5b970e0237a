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

#include "faaschain/action_server.hpp"

#include <cstdlib>

namespace faaschain {

ActionServer::ActionServer(ActionServerOptions options, RunnerDeps deps, const WorkloadRegistry* registry,
                           IdSource& ids)
    : options_(std::move(options)), deps_(std::move(deps)), registry_(registry), ids_(ids) {
  options_.runner.validate();
  if (!deps_.clock) throw Error(ErrorKind::invalid_argument, "action server needs a clock");
}

bool ActionServer::initialized() const {
  std::lock_guard lock(init_mu_);
  return init_.has_value();
}

HttpReply ActionServer::handle_init(const json& body) {
  if (!body.is_object() || !body.contains("value") || !body["value"].is_object()) {
    return {400, {{"error", "bad request: init body needs a 'value' object"}}};
  }
  const auto& value = body["value"];
  for (const char* key : {"name", "main", "code"}) {
    if (value.contains(key) && !value[key].is_string()) {
      return {400, {{"error", std::string("bad request: '") + key + "' must be a string"}}};
    }
  }
  if (value.contains("binary") && !value["binary"].is_boolean()) {
    return {400, {{"error", "bad request: 'binary' must be a boolean"}}};
  }
  std::lock_guard lock(init_mu_);
  if (init_) return {403, {{"error", "already initialized"}}};
  init_ = value;
  return {200, {{"ok", true}}};
}

InvocationContext ActionServer::decode_context(const json& body, std::int64_t now_ms, std::int64_t deadline_ms) {
  if (!body.is_object() || !body.contains("value") || !body["value"].is_object()) {
    throw Error(ErrorKind::invalid_argument, "run body needs a 'value' object");
  }
  const auto& params = body["value"];
  InvocationContext ctx;
  // Only bin, bin_args, mode and env reach the workload; the reserved chain
  // keys are consumed here.
  try {
    ctx.spec = decode_workload_spec(params);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("bad parameters: ") + e.what());
  }

  if (auto it = params.find(kChainIdParam); it != params.end() && !it->is_null()) {
    if (!it->is_string() || !is_valid_chain_id(it->get<std::string>())) {
      throw Error(ErrorKind::invalid_argument, "invalid __chain_id");
    }
    ctx.chain_id.value = it->get<std::string>();
  } else {
    ctx.chain_id.value = ids_.next("chain");
  }
  if (auto it = params.find(kSeqParam); it != params.end() && !it->is_null()) {
    if (it->is_number_integer()) {
      ctx.seq = it->get<std::int64_t>();
    } else if (it->is_string()) {
      try {
        std::size_t used = 0;
        ctx.seq = std::stoll(it->get<std::string>(), &used);
        if (used != it->get<std::string>().size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorKind::invalid_argument, "invalid __seq");
      }
    } else {
      throw Error(ErrorKind::invalid_argument, "invalid __seq");
    }
  }
  ctx.activation_id = body.value("activation_id", std::string());
  ctx.timeout_ms = deadline_ms - now_ms;
  ctx.checkpoint_trigger_ms = options_.runner.checkpoint_trigger_ms;
  if (ctx.seq < 1) throw Error(ErrorKind::invalid_argument, "__seq must be >= 1");
  if (ctx.timeout_ms <= 0) throw Error(ErrorKind::invalid_argument, "deadline already passed");
  if (ctx.timeout_ms > kMaxActionTimeoutMs) {
    throw Error(ErrorKind::invalid_argument, "deadline exceeds the platform maximum timeout");
  }
  if (ctx.spec.mode == ExecutionMode::cooperative && registry_ && !registry_->contains(ctx.spec.bin)) {
    throw Error(ErrorKind::unknown_workload, "unknown workload '" + ctx.spec.bin + "'");
  }
  return ctx;
}

HttpReply ActionServer::handle_run(const json& body, std::stop_token stop) {
  const auto now = deps_.clock->now_ms();
  std::int64_t deadline = now + kDefaultActionTimeoutMs;
  if (body.is_object() && body.contains("deadline")) {
    if (!body["deadline"].is_number_integer()) return {400, {{"error", "bad request: deadline must be an integer"}}};
    deadline = body["deadline"].get<std::int64_t>();
  }
  ActivationControl control(*deps_.clock, deadline, std::move(stop));
  try {
    return handle_run(body, control);
  } catch (const ActivationKilled& e) {
    return {502, {{"error", e.what()}}};
  }
}

HttpReply ActionServer::handle_run(const json& body, ActivationControl& control) {
  if (!initialized()) return {400, {{"error", "not initialized"}}};
  if (options_.queue_when_busy) {
    std::lock_guard lock(run_mu_);
    running_ = true;
    struct Reset {
      std::atomic<bool>& flag;
      ~Reset() { flag = false; }
    } reset{running_};
    return run_locked(body, control);
  }
  bool expected = false;
  if (!running_.compare_exchange_strong(expected, true)) return {503, {{"error", "busy"}}};
  struct Reset {
    std::atomic<bool>& flag;
    ~Reset() { flag = false; }
  } reset{running_};
  return run_locked(body, control);
}

HttpReply ActionServer::run_locked(const json& body, ActivationControl& control) {
  InvocationContext ctx;
  try {
    ctx = decode_context(body, deps_.clock->now_ms(), control.deadline_ms());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::unknown_workload) return {400, {{"error", std::string("unknown workload: ") + e.what()}}};
    return {400, {{"error", std::string("bad request: ") + e.what()}}};
  }

  Runner runner(options_.runner, deps_);
  auto outcome = runner.execute_invocation(ctx, body["value"], control);
  if (outcome.kind == OutcomeKind::failed) return {502, {{"error", outcome.error}, {"outcome", outcome}}};
  return {200, {{"result", outcome}}};
}

int action_port_from_env() {
  const char* v = std::getenv("LF_PORT");
  if (!v || !*v) return 8080;
  try {
    int port = std::stoi(v);
    if (port > 0 && port < 65536) return port;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_argument, std::string("invalid LF_PORT '") + v + "'");
}

}  // namespace faaschain
