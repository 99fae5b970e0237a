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

#include <doctest.h>

#include <latch>
#include <thread>

#include "faaschain/action_server.hpp"
#include "generators.hpp"
#include "helpers.hpp"

using namespace faaschain;
using testing::TempDir;

namespace {

class NullInvoker final : public Invoker {
 public:
  std::string invoke_async(const std::string&, const json&) override { return "act-next"; }
};

// Counts how many runs are inside a step at once.
std::atomic<int> g_inside{0};
std::atomic<int> g_max_inside{0};

class ProbeWorkload final : public Workload {
 public:
  explicit ProbeWorkload(std::int64_t steps) : remaining_(steps) {}
  std::string_view name() const override { return "probe"; }
  bool done() const override { return remaining_ == 0; }
  void step(const PartialSink&) override {
    const int now = ++g_inside;
    int seen = g_max_inside.load();
    while (now > seen && !g_max_inside.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --g_inside;
    --remaining_;
  }
  CooperativeState snapshot() const override { return {"probe", 1, json{{"remaining", remaining_}}}; }
  json result() const override { return json{{"probe", "done"}}; }
  std::int64_t work_units_done() const override { return 0; }

 private:
  std::int64_t remaining_;
};

struct Server {
  std::unique_ptr<Clock> clock;
  SequentialIds ids;
  WorkloadRegistry registry = WorkloadRegistry::with_builtins();
  std::unique_ptr<CooperativeCheckpointer> coop;
  std::unique_ptr<CheckpointRepo> checkpoints;
  std::unique_ptr<ResultsRepo> results;
  NullInvoker invoker;
  TempDir scratch{"action"};
  std::unique_ptr<ActionServer> server;

  explicit Server(ClockMode mode = ClockMode::simulated, bool queue = false, RunnerConfig runner = {}) {
    clock = make_clock(mode);
    registry.add("probe", [](const std::vector<std::string>& args, const std::optional<CooperativeState>&,
                             const WorkloadOptions&) { return std::make_unique<ProbeWorkload>(std::stoll(args.at(0))); });
    coop = std::make_unique<CooperativeCheckpointer>(registry, *clock);
    checkpoints = make_checkpoint_repo({}, *clock);
    results = make_results_repo({}, *clock);
    RunnerDeps deps;
    deps.cooperative = coop.get();
    deps.checkpoints = checkpoints.get();
    deps.results = results.get();
    deps.invoker = &invoker;
    deps.clock = clock.get();
    deps.scratch_dir = scratch.path();
    deps.action_name = "f";
    server = std::make_unique<ActionServer>(ActionServerOptions{runner, queue}, deps, &registry, ids);
  }

  void init() { REQUIRE(server->handle_init(json{{"value", {{"name", "f"}, {"main", "main"}}}}).status == 200); }

  HttpReply run(const json& params) { return server->handle_run(json{{"value", params}}); }
};

}  // namespace

TEST_CASE("init is accepted once") {
  Server s;
  auto ok = s.server->handle_init(json{{"value", {{"name", "f"}, {"code", ""}, {"binary", false}}}});
  CHECK(ok.status == 200);
  CHECK(ok.body == json{{"ok", true}});
  CHECK(s.server->initialized());

  auto again = s.server->handle_init(json{{"value", json::object()}});
  CHECK(again.status == 403);
  CHECK(again.body["error"] == "already initialized");
}

TEST_CASE("malformed init bodies are bad requests") {
  Server s;
  for (const auto& body : {json::object(), json{{"value", 3}}, json{{"value", {{"name", 7}}}},
                           json{{"value", {{"binary", "yes"}}}}, json::array()}) {
    auto r = s.server->handle_init(body);
    CHECK(r.status == 400);
    CHECK(r.body["error"].get<std::string>().rfind("bad request", 0) == 0);
  }
  CHECK_FALSE(s.server->initialized());
}

TEST_CASE("run requires init") {
  Server s;
  auto r = s.run(testing::params("factors", {"12"}));
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "not initialized");
}

TEST_CASE("run factors of 12 without chain parameters") {
  Server s;
  s.init();
  auto r = s.run(testing::params("factors", {"12"}));
  REQUIRE(r.status == 200);
  CHECK(r.body.contains("result"));
  CHECK_FALSE(r.body.contains("error"));
  const auto& outcome = r.body["result"];
  CHECK(outcome["kind"] == "completed");
  CHECK(outcome["result"] == json::array({2, 2, 3}));
  CHECK(outcome["seq"] == 1);
  CHECK(is_valid_chain_id(outcome["chain_id"].get<std::string>()));
}

TEST_CASE("chain parameters are decoded and stripped") {
  Server s;
  auto params = testing::params("counter", {"5"});
  params[kChainIdParam] = "c9";
  params[kSeqParam] = 3;
  auto ctx = s.server->decode_context(json{{"value", params}, {"activation_id", "a1"}}, 1000, 61000);
  CHECK(ctx.chain_id.value == "c9");
  CHECK(ctx.seq == 3);
  CHECK(ctx.activation_id == "a1");
  CHECK(ctx.timeout_ms == 60000);
  CHECK(ctx.spec == WorkloadSpec{"counter", {"5"}});

  params[kSeqParam] = "4";
  CHECK(s.server->decode_context(json{{"value", params}}, 0, 1000).seq == 4);
  for (const json& bad : {json("4x"), json(0), json(1.5), json::array()}) {
    params[kSeqParam] = bad;
    CHECK_THROWS_AS(s.server->decode_context(json{{"value", params}}, 0, 1000), Error);
  }
  params[kSeqParam] = 1;
  params[kChainIdParam] = "../etc";
  CHECK_THROWS_AS(s.server->decode_context(json{{"value", params}}, 0, 1000), Error);
  params.erase(kChainIdParam);
  CHECK_THROWS_AS(s.server->decode_context(json{{"value", params}}, 0, kMaxActionTimeoutMs + 1), Error);
  CHECK_THROWS_AS(s.server->decode_context(json{{"value", params}}, 5, 5), Error);

  // Minted ids are distinct.
  auto a = s.server->decode_context(json{{"value", params}}, 0, 1000);
  auto b = s.server->decode_context(json{{"value", params}}, 0, 1000);
  CHECK(a.chain_id != b.chain_id);
}

TEST_CASE("run errors") {
  Server s;
  s.init();
  auto unknown = s.run(testing::params("nosuch", {}));
  CHECK(unknown.status == 400);
  CHECK(unknown.body["error"].get<std::string>().rfind("unknown workload", 0) == 0);

  auto bad_args = s.run(testing::params("factors", {"twelve"}));
  CHECK(bad_args.status == 502);
  CHECK(bad_args.body.contains("error"));
  CHECK(bad_args.body["outcome"]["kind"] == "failed");

  auto no_value = s.server->handle_run(json{{"deadline", 10}});
  CHECK(no_value.status == 400);

  auto bad_deadline = s.server->handle_run(json{{"value", testing::params("counter", {"1"})}, {"deadline", "soon"}});
  CHECK(bad_deadline.status == 400);
}

TEST_CASE("a run past its deadline is reported, not hung") {
  Server s;
  RunnerConfig rc;
  rc.enabled = false;
  Server off(ClockMode::simulated, false, rc);
  off.init();
  auto r = off.server->handle_run(json{{"value", testing::params("counter", {"70"})}, {"deadline", 10000}});
  CHECK(r.status == 502);
  CHECK(r.body.contains("error"));
}

TEST_CASE("property: every reply body is a JSON object with result xor error") {
  Server s;
  s.init();
  gen::Rng rng(51);
  for (int i = 0; i < 80; ++i) {
    json params = json::object();
    if (rng.coin()) params["bin"] = rng.pick(std::vector<std::string>{"factors", "counter", "matrix", "nosuch", ""});
    if (rng.coin()) params["bin_args"] = json::array({rng.pick(std::vector<std::string>{"1", "12", "x", "-3", "3"})});
    if (rng.range(0, 4) == 0) params[kSeqParam] = rng.pick(std::vector<json>{json(2), json("z"), json(nullptr)});
    auto r = s.run(params);
    REQUIRE(r.body.is_object());
    CHECK(json::parse(r.body.dump()) == r.body);
    if (r.status == 200) CHECK(r.body.contains("result") != r.body.contains("error"));
    else CHECK(r.body.contains("error"));
  }
}

TEST_CASE("concurrent runs: one executes, the rest are busy") {
  Server s(ClockMode::real);
  s.init();
  constexpr int kClients = 6;
  std::vector<HttpReply> replies(kClients);
  std::latch go(kClients);
  g_max_inside = 0;
  {
    std::vector<std::jthread> clients;
    for (int i = 0; i < kClients; ++i) {
      clients.emplace_back([&, i] {
        go.arrive_and_wait();
        replies[i] = s.run(testing::params("probe", {"60"}));
      });
    }
  }
  int ok = 0, busy = 0;
  for (const auto& r : replies) {
    if (r.status == 200) ++ok;
    if (r.status == 503) {
      ++busy;
      CHECK(r.body["error"] == "busy");
    }
  }
  CHECK(ok >= 1);
  CHECK(ok + busy == kClients);
  CHECK(busy >= 1);
  CHECK(g_max_inside == 1);
}

TEST_CASE("concurrent runs queue when configured") {
  Server s(ClockMode::real, true);
  s.init();
  constexpr int kClients = 4;
  std::vector<HttpReply> replies(kClients);
  std::latch go(kClients);
  g_max_inside = 0;
  {
    std::vector<std::jthread> clients;
    for (int i = 0; i < kClients; ++i) {
      clients.emplace_back([&, i] {
        go.arrive_and_wait();
        replies[i] = s.run(testing::params("probe", {"20"}));
      });
    }
  }
  for (const auto& r : replies) CHECK(r.status == 200);
  CHECK(g_max_inside == 1);
}

TEST_CASE("listen port comes from the environment") {
  ::unsetenv("LF_PORT");
  CHECK(action_port_from_env() == 8080);
  ::setenv("LF_PORT", "9090", 1);
  CHECK(action_port_from_env() == 9090);
  ::setenv("LF_PORT", "nope", 1);
  CHECK_THROWS_AS(action_port_from_env(), Error);
  ::unsetenv("LF_PORT");
}
