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

// Platform action interface: /init once, then /run per activation.
//
// ActionServer holds the protocol logic and is transport free so the gateway
// can host instances in-process; serve_action() in http.hpp puts one behind
// an HTTP listener.

#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>

#include "faaschain/clock.hpp"
#include "faaschain/core.hpp"
#include "faaschain/runner.hpp"
#include "faaschain/workloads.hpp"

namespace faaschain {

struct HttpReply {
  int status = 200;
  json body;
};

// Default activation budget when a run request carries no deadline.
inline constexpr std::int64_t kDefaultActionTimeoutMs = 60000;

struct ActionServerOptions {
  RunnerConfig runner;
  // Concurrent runs wait their turn instead of being rejected as busy.
  bool queue_when_busy = false;
};

class ActionServer {
 public:
  // `registry` (optional) is used to reject unknown cooperative workloads up
  // front; `ids` mints chain ids for requests without one.
  ActionServer(ActionServerOptions options, RunnerDeps deps, const WorkloadRegistry* registry, IdSource& ids);

  // 200 on success, 403 when already initialized, 400 on a malformed body.
  HttpReply handle_init(const json& body);

  // Body: {"value": params, "activation_id": string, "deadline": epoch ms}.
  // 200 {"result": outcome}; 400 for requests that cannot run; 502 when the
  // runner failed; 503 when another run is in flight. ActivationKilled
  // propagates so that the hosting platform can record the kill.
  HttpReply handle_run(const json& body, ActivationControl& control);
  // Builds the activation control from the body's deadline.
  HttpReply handle_run(const json& body, std::stop_token stop = {});

  bool initialized() const;
  Clock& clock() const { return *deps_.clock; }

  // Decodes a run body into a context. Throws Error(invalid_argument).
  InvocationContext decode_context(const json& body, std::int64_t now_ms, std::int64_t deadline_ms);

 private:
  HttpReply run_locked(const json& body, ActivationControl& control);

  ActionServerOptions options_;
  RunnerDeps deps_;
  const WorkloadRegistry* registry_;
  IdSource& ids_;

  mutable std::mutex init_mu_;
  std::optional<json> init_;
  std::atomic<bool> running_{false};
  std::mutex run_mu_;
};

// Reads LF_PORT (default 8080).
int action_port_from_env();

}  // namespace faaschain
