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

#include <numeric>
#include <set>

#include "faaschain/digest.hpp"
#include "generators.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace faaschain;
using testing::ChainSetup;
using testing::SimPlatform;

namespace {

OutcomeKind kind_of(const ActivationRecord& rec) {
  auto outcome = testing::outcome_of(rec);
  REQUIRE(outcome);
  return (*outcome)["kind"] == "completed"                    ? OutcomeKind::completed
         : (*outcome)["kind"] == "checkpointed_and_reinvoked" ? OutcomeKind::checkpointed_and_reinvoked
                                                              : OutcomeKind::failed;
}

}  // namespace

TEST_CASE("action config validation") {
  ActionConfig a;
  a.name = "f";
  CHECK_NOTHROW(a.validate());
  a.timeout_ms = kMaxActionTimeoutMs + 1;
  CHECK_THROWS_AS(a.validate(), Error);
  a.timeout_ms = 1000;
  a.memory_mb = kMaxActionMemoryMb + 1;
  CHECK_THROWS_AS(a.validate(), Error);
  a.memory_mb = 128;
  a.concurrency_limit = 0;
  CHECK_THROWS_AS(a.validate(), Error);
  a.concurrency_limit = 3;
  a.name.clear();
  CHECK_THROWS_AS(a.validate(), Error);
  a.name = "g";
  auto back = json(a).get<ActionConfig>();
  CHECK(json(back) == json(a));
}

TEST_CASE("work under the trigger is a single activation") {
  SimPlatform p;
  auto run = p.run("counter", {"40"});
  REQUIRE(run.record);
  CHECK(run.record->status == ChainStatus::completed);
  REQUIRE(run.activations.size() == 1);
  const auto& rec = run.activations[0];
  CHECK(rec.outcome == ActivationOutcome::success);
  CHECK(rec.billed_ms == 40000);
  CHECK(rec.work_ms == 40000);
  CHECK(rec.seq == 1);
  CHECK(kind_of(rec) == OutcomeKind::completed);
  REQUIRE(run.report);
  CHECK(run.report->invocation_count == 1);
  CHECK_FALSE(run.report->double_billing_violated);
  CHECK(run.report->substitution_satisfied);
}

TEST_CASE("counter 70 chains into a second activation") {
  SimPlatform p;
  auto run = p.run("counter", {"70"});
  REQUIRE(run.activations.size() == 2);
  CHECK(run.activations[0].seq == 1);
  CHECK(kind_of(run.activations[0]) == OutcomeKind::checkpointed_and_reinvoked);
  CHECK(run.activations[0].outcome == ActivationOutcome::success);
  CHECK(run.activations[1].seq == 2);
  CHECK(kind_of(run.activations[1]) == OutcomeKind::completed);
  CHECK(run.activations[1].start >= run.activations[0].end);
  REQUIRE(run.record);
  CHECK(run.record->status == ChainStatus::completed);
  CHECK(run.record->final_result->payload == json{{"count", 70}});
  CHECK(run.record->final_result->winner_seq == 2);
  REQUIRE(run.report);
  CHECK(run.report->invocation_count == 2);
  CHECK(run.report->timeout_killed == 0);
  CHECK(run.report->double_billing_violated);
  CHECK(run.report->substitution_satisfied);
}

TEST_CASE("three links for work 120 with trigger 50") {
  SimPlatform p;
  auto run = p.run("counter", {"120"});
  REQUIRE(run.report);
  CHECK(run.report->invocation_count == 3);
  CHECK(run.report->activation_count == 3);
  CHECK(run.record->final_result->payload == json{{"count", 120}});
}

TEST_CASE("baseline without the runner is killed at the timeout") {
  ChainSetup s;
  s.enabled = false;
  SimPlatform p(s);
  auto run = p.run("counter", {"70"});
  REQUIRE(run.activations.size() == 1);
  const auto& rec = run.activations[0];
  CHECK(rec.outcome == ActivationOutcome::timeout_killed);
  CHECK(rec.billed_ms >= 60000);
  CHECK(rec.end - rec.start == 60000);
  CHECK_FALSE(rec.response.contains("result"));
  REQUIRE(run.record);
  CHECK(run.record->status == ChainStatus::failed);
  CHECK_FALSE(run.record->final_result);
  REQUIRE(run.report);
  CHECK(run.report->timeout_killed == 1);
  CHECK_FALSE(run.report->substitution_satisfied);
}

TEST_CASE("finishing one millisecond before the timeout succeeds") {
  ChainSetup s;
  s.enabled = false;
  s.unit_ms = 1;
  SimPlatform p(s);
  auto run = p.run("counter", {"59999"});
  REQUIRE(run.activations.size() == 1);
  CHECK(run.activations[0].outcome == ActivationOutcome::success);
  CHECK(run.activations[0].billed_ms == 59999);
  CHECK(run.record->final_result->payload == json{{"count", 59999}});

  auto over = p.run("counter", {"60001"});
  CHECK(over.activations.at(0).outcome == ActivationOutcome::timeout_killed);
  CHECK(over.activations.at(0).billed_ms == 60000);
}

TEST_CASE("property: chained runs never hit the timeout") {
  gen::Rng rng(gen::seed_or(73));
  for (int i = 0; i < 25; ++i) {
    ChainSetup s;
    s.unit_ms = 1000;
    s.timeout_ms = 1000 * rng.range(20, 90);
    s.trigger_ms = s.timeout_ms - 1000 * rng.range(5, 15);
    SimPlatform p(s);
    const auto limit = rng.range(1, 400);
    auto run = p.run("counter", {std::to_string(limit)});
    INFO("limit=" << limit << " timeout=" << s.timeout_ms << " trigger=" << s.trigger_ms);
    REQUIRE(run.report);
    CHECK(run.report->timeout_killed == 0);
    CHECK(run.record->status == ChainStatus::completed);
    CHECK(run.record->final_result->payload == json{{"count", limit}});
    const auto per_link = s.trigger_ms / s.unit_ms;
    CHECK(run.report->invocation_count == oracle::invocations(limit, per_link));
    // Billing adds up per activation.
    std::int64_t billed = 0;
    for (const auto& rec : run.activations) billed += rec.billed_ms;
    CHECK(run.report->total_billed_ms == billed);
    CHECK(run.report->double_billed_ms == run.report->total_billed_ms - run.report->single_shot_ms_estimate);
    CHECK(run.report->single_shot_ms_estimate == limit * s.unit_ms);
  }
}

TEST_CASE("simulated runs are deterministic") {
  auto once = [] {
    SimPlatform p;
    p.run("counter", {"120"});
    p.run("factors", {"360"});
    return p.platform.gateway().activations();
  };
  auto a = once();
  auto b = once();
  CHECK(a.size() == 4);
  CHECK(a == b);
  std::set<std::string> ids;
  for (const auto& rec : a) ids.insert(rec.activation_id);
  CHECK(ids.size() == a.size());
}

TEST_CASE("parameter digests cover the reserved chain keys") {
  SimPlatform p;
  const auto params = testing::params("counter", {"70"});
  auto run = p.platform.run_chain("f", params);
  REQUIRE(run.activations.size() == 2);
  CHECK(run.activations[0].params_digest == sha256_hex(canonical(params)));
  CHECK(run.activations[1].params_digest != run.activations[0].params_digest);

  // Only the reserved keys differ between the two links.
  json expected = params;
  expected[kChainIdParam] = run.chain_id.value;
  expected[kSeqParam] = 2;
  CHECK(run.activations[1].params_digest == sha256_hex(canonical(expected)));
}

TEST_CASE("gateway errors") {
  SimPlatform p;
  CHECK_THROWS_AS(p.platform.gateway().invoke("nope", json::object(), true), Error);
  try {
    p.platform.gateway().invoke("nope", json::object(), true);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::not_found);
  }
  CHECK_THROWS_AS(p.platform.gateway().action("nope"), Error);
  CHECK_THROWS_AS(p.platform.gateway().chain_report(ChainId{"nochain"}), Error);

  p.platform.results().record_invocation(ChainId{"open"}, 1);
  try {
    p.platform.gateway().chain_report(ChainId{"open"});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::precondition);
  }
  CHECK_FALSE(p.platform.gateway().activation("act-404"));
}

TEST_CASE("an action at its concurrency limit is throttled") {
  PlatformOptions opts;
  opts.clock_mode = ClockMode::real;
  LocalPlatform platform(opts);
  ChainSetup s;
  s.unit_ms = 10;
  s.trigger_ms = 5000;
  s.timeout_ms = 10000;
  auto cfg = testing::action_config("f", s);
  cfg.concurrency_limit = 1;
  platform.register_action(cfg);
  auto first = platform.gateway().invoke("f", testing::params("counter", {"20"}), false);
  try {
    platform.gateway().invoke("f", testing::params("counter", {"1"}), false);
    FAIL("expected throttling");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::throttled);
  }
  platform.gateway().wait_idle();
  auto rec = platform.gateway().activation(first.activation_id);
  REQUIRE(rec);
  CHECK(rec->outcome == ActivationOutcome::success);
  // Capacity is back once the first activation ended.
  auto again = platform.gateway().invoke("f", testing::params("counter", {"1"}), true);
  REQUIRE(again.record);
  CHECK(again.record->outcome == ActivationOutcome::success);
}

TEST_CASE("real-clock watchdog kills an overrunning activation") {
  PlatformOptions opts;
  opts.clock_mode = ClockMode::real;
  LocalPlatform platform(opts);
  ChainSetup s;
  s.enabled = false;
  s.unit_ms = 10;
  s.timeout_ms = 300;
  s.trigger_ms = 200;
  platform.register_action(testing::action_config("f", s));
  auto run = platform.run_chain("f", testing::params("counter", {"500"}));
  REQUIRE(run.activations.size() == 1);
  CHECK(run.activations[0].outcome == ActivationOutcome::timeout_killed);
  CHECK(run.activations[0].billed_ms == 300);
  REQUIRE(run.record);
  CHECK(run.record->status == ChainStatus::failed);
}

TEST_CASE("chain report JSON") {
  SimPlatform p;
  auto run = p.run("counter", {"70"});
  REQUIRE(run.report);
  json j = *run.report;
  CHECK(j["invocation_count"] == 2);
  CHECK(j["trilemma"]["double_billing_violated"] == true);
  CHECK(j["trilemma"]["substitution_satisfied"] == true);
  CHECK(j["status"] == "completed");
}
