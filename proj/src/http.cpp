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

// All httplib use lives in this translation unit.

#include "faaschain/http.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "faaschain/partials_receiver.hpp"

namespace faaschain {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  auto start = scheme == std::string::npos ? 0 : scheme + 3;
  auto slash = url.find('/', start);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string trim_slash(std::string s) {
  while (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    return json::parse(req.body.empty() ? std::string("{}") : req.body);
  } catch (const json::exception& e) {
    reply_json(res, 400, {{"error", std::string("bad request: ") + e.what()}});
    return std::nullopt;
  }
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found:
    case ErrorKind::unknown_workload: return 404;
    case ErrorKind::throttled: return 429;
    case ErrorKind::precondition: return 409;
    case ErrorKind::busy: return 503;
    case ErrorKind::invalid_argument: return 400;
    default: return 500;
  }
}

struct ServerBase {
  httplib::Server server;
  std::thread thread;

  int bind(const std::string& host, int port) {
    if (port == 0) {
      int bound = server.bind_to_any_port(host);
      if (bound < 0) throw Error(ErrorKind::storage, "cannot bind " + host);
      return bound;
    }
    if (!server.bind_to_port(host, port)) {
      throw Error(ErrorKind::storage, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
  }
  void listen() { server.listen_after_bind(); }
  void start() {
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  void stop() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  ~ServerBase() { stop(); }
};

}  // namespace

// ---------------------------------------------------------------------------
// action server

struct ActionHttpServer::Impl : ServerBase {};

ActionHttpServer::ActionHttpServer(ActionServer& action) : impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/init", [&action](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    auto reply = action.handle_init(*body);
    reply_json(res, reply.status, reply.body);
  });
  impl_->server.Post("/run", [&action](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    try {
      auto reply = action.handle_run(*body);
      reply_json(res, reply.status, reply.body);
    } catch (const std::exception& e) {
      reply_json(res, 502, {{"error", e.what()}});
    }
  });
}

ActionHttpServer::~ActionHttpServer() = default;
int ActionHttpServer::bind(const std::string& host, int port) { return impl_->bind(host, port); }
void ActionHttpServer::listen() { impl_->listen(); }
void ActionHttpServer::start() { impl_->start(); }
void ActionHttpServer::stop() { impl_->stop(); }

// ---------------------------------------------------------------------------
// gateway

struct GatewayHttpServer::Impl : ServerBase {};

GatewayHttpServer::GatewayHttpServer(Gateway& gateway) : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  server.Post(R"(/api/actions/([^/]+)/invoke)", [&gateway](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    const bool blocking = req.has_param("blocking") && req.get_param_value("blocking") == "true";
    try {
      auto invocation = gateway.invoke(req.matches[1], *body, blocking);
      json out{{"activation_id", invocation.activation_id}};
      if (invocation.record) out["record"] = *invocation.record;
      reply_json(res, blocking ? 200 : 202, out);
    } catch (const Error& e) {
      reply_json(res, status_for(e.kind()), {{"error", e.what()}, {"kind", to_string(e.kind())}});
    }
  });
  server.Get(R"(/api/activations/([^/]+))", [&gateway](const httplib::Request& req, httplib::Response& res) {
    auto record = gateway.activation(req.matches[1]);
    if (!record) return reply_json(res, 404, {{"error", "unknown activation"}});
    reply_json(res, 200, *record);
  });
  server.Get(R"(/api/chains/([^/]+)/report)", [&gateway](const httplib::Request& req, httplib::Response& res) {
    try {
      reply_json(res, 200, gateway.chain_report(ChainId{req.matches[1]}));
    } catch (const Error& e) {
      reply_json(res, status_for(e.kind()), {{"error", e.what()}, {"kind", to_string(e.kind())}});
    }
  });
}

GatewayHttpServer::~GatewayHttpServer() = default;
int GatewayHttpServer::bind(const std::string& host, int port) { return impl_->bind(host, port); }
void GatewayHttpServer::listen() { impl_->listen(); }
void GatewayHttpServer::start() { impl_->start(); }
void GatewayHttpServer::stop() { impl_->stop(); }

// ---------------------------------------------------------------------------
// clients

HttpInvoker::HttpInvoker(std::string base_url) : base_url_(trim_slash(std::move(base_url))) {}

std::string HttpInvoker::invoke_async(const std::string& action, const json& params) {
  auto url = split_url(base_url_);
  httplib::Client client(url.origin);
  client.set_read_timeout(30, 0);
  const auto prefix = url.path == "/" ? std::string() : url.path;
  auto res = client.Post(prefix + "/api/actions/" + action + "/invoke?blocking=false", params.dump(),
                         "application/json");
  if (!res) throw Error(ErrorKind::storage, "invoke request to " + base_url_ + " failed");
  if (res->status == 429) throw Error(ErrorKind::throttled, "invoke throttled: " + res->body);
  if (res->status != 200 && res->status != 202) {
    throw Error(ErrorKind::precondition, "invoke rejected with status " + std::to_string(res->status) + ": " + res->body);
  }
  return json::parse(res->body).at("activation_id").get<std::string>();
}

namespace {

class HttpActionInstance final : public ActionInstance {
 public:
  explicit HttpActionInstance(const std::string& base_url) {
    auto url = split_url(trim_slash(base_url));
    origin_ = url.origin;
    prefix_ = url.path == "/" ? std::string() : url.path;
  }

  // A warm container answers a repeated init with 403; it is still usable.
  HttpReply init(const json& body) override {
    auto reply = post("/init", body, 30000);
    if (reply.status == 403) return {200, {{"ok", true}}};
    return reply;
  }

  HttpReply run(const json& body, ActivationControl& control) override {
    const auto budget = control.deadline_ms() - control.clock().now_ms();
    if (budget <= 0) throw ActivationKilled();
    auto reply = post("/run", body, budget + 1000);
    if (reply.status == -1) {
      if (control.expired()) throw ActivationKilled();
      return {502, {{"error", "no response from action instance"}}};
    }
    return reply;
  }

 private:
  HttpReply post(const std::string& path, const json& body, std::int64_t timeout_ms) {
    httplib::Client client(origin_);
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
    auto res = client.Post(prefix_ + path, body.dump(), "application/json");
    if (!res) return {-1, {{"error", "no response"}}};
    try {
      return {res->status, json::parse(res->body)};
    } catch (const json::exception&) {
      return {502, {{"error", "non-JSON response: " + res->body}}};
    }
  }

  std::string origin_;
  std::string prefix_;
};

}  // namespace

std::unique_ptr<ActionInstance> make_http_action_instance(const std::string& base_url) {
  return std::make_unique<HttpActionInstance>(base_url);
}

int gateway_port_from_env() {
  const char* v = std::getenv("LF_GATEWAY_PORT");
  if (!v || !*v) return 3233;
  try {
    int port = std::stoi(v);
    if (port > 0 && port < 65536) return port;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_argument, std::string("invalid LF_GATEWAY_PORT '") + v + "'");
}

// ---------------------------------------------------------------------------
// partials

struct PartialsReceiver::Impl : ServerBase {
  int port = 0;
};

PartialsReceiver::PartialsReceiver(PartialSink sink) : impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/partials", [sink = std::move(sink)](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    try {
      sink(*body);
      reply_json(res, 200, {{"ok", true}});
    } catch (const std::exception& e) {
      reply_json(res, 500, {{"error", e.what()}});
    }
  });
  impl_->port = impl_->bind("127.0.0.1", 0);
  impl_->start();
}

PartialsReceiver::~PartialsReceiver() = default;

std::string PartialsReceiver::url() const { return "http://127.0.0.1:" + std::to_string(impl_->port) + "/partials"; }

int http_post_json(const std::string& url, const json& body, std::int64_t timeout_ms) {
  auto parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
  auto res = client.Post(parts.path, body.dump(), "application/json");
  return res ? res->status : -1;
}

}  // namespace faaschain
