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

// HTTP transports: the action interface listener, the gateway API, and the
// clients the runner and the gateway use to reach remote instances.

#pragma once

#include <memory>
#include <string>

#include "faaschain/action_server.hpp"
#include "faaschain/gateway.hpp"
#include "faaschain/runner.hpp"

namespace faaschain {

// POST /init and POST /run in front of an ActionServer.
class ActionHttpServer {
 public:
  explicit ActionHttpServer(ActionServer& server);
  ~ActionHttpServer();

  // Binds and returns the port (pass 0 for an ephemeral one).
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  // Starts listen() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// POST /api/actions/{name}/invoke?blocking=true|false
// GET  /api/activations/{id}
// GET  /api/chains/{id}/report
class GatewayHttpServer {
 public:
  explicit GatewayHttpServer(Gateway& gateway);
  ~GatewayHttpServer();

  int bind(const std::string& host, int port);
  void listen();
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Invokes through a gateway's HTTP API (non-blocking).
class HttpInvoker final : public Invoker {
 public:
  explicit HttpInvoker(std::string base_url);
  std::string invoke_async(const std::string& action, const json& params) override;

 private:
  std::string base_url_;
};

// Action instance reached over HTTP at `base_url` (an action server).
std::unique_ptr<ActionInstance> make_http_action_instance(const std::string& base_url);

// Reads LF_GATEWAY_PORT (default 3233).
int gateway_port_from_env();

}  // namespace faaschain
