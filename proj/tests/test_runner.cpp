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

#include <set>

#include "faaschain/gateway.hpp"
#include "faaschain/runner.hpp"
#include "generators.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace faaschain;
using testing::TempDir;

namespace {

class RecordingInvoker final : public Invoker {
 public:
  std::string invoke_async(const std::string& action, const json& params) override {
    if (fail) throw Error(ErrorKind::storage, "invoker down");
    calls.emplace_back(action, params);
    return "act-" + std::to_string(calls.size());
  }
  std::vector<std::pair<std::string, json>> calls;
  bool fail = false;
};

// Fails on its third step; used to check the failure path.
class FailingWorkload final : public Workload {
 public:
  explicit FailingWorkload(std::int64_t steps) : steps_(steps) {}
  std::string_view name() const override { return "boom"; }
  bool done() const override { return false; }
  void step(const PartialSink&) override {
    if (++steps_ == 3) throw std::runtime_error("boom at step 3");
  }
  CooperativeState snapshot() const override { return {"boom", 1, json{{"steps", steps_}}}; }
  json result() const override { return nullptr; }
  std::int64_t work_units_done() const override { return steps_; }

 private:
  std::int64_t steps_;
};

// Flips one byte of every blob read back from the wrapped repository.
class TamperingRepo final : public CheckpointRepo {
 public:
  explicit TamperingRepo(CheckpointRepo& inner) : inner_(inner) {}
  std::string put(const CheckpointManifest& m, const BlobReader& blobs) override { return inner_.put(m, blobs); }
  std::optional<StoredCheckpoint> get_latest(const ChainId& chain_id) override {
    auto found = inner_.get_latest(chain_id);
    if (!found || !tamper) return found;
    auto reader = found->reader;
    found->reader = [reader](const std::string& rel) -> std::optional<std::string> {
      auto bytes = reader(rel);
      if (bytes && !bytes->empty()) (*bytes)[0] ^= 0x01;
      return bytes;
    };
    return found;
  }
  bool tamper = false;

 private:
  CheckpointRepo& inner_;
};

struct Fixture {
  SimulatedClock clock;
  WorkloadRegistry registry = WorkloadRegistry::with_builtins();
  CooperativeCheckpointer coop{registry, clock};
  RepoConfig repo_config;
  std::unique_ptr<CheckpointRepo> stored;
  TamperingRepo checkpoints;
  std::unique_ptr<ResultsRepo> results;
  RecordingInvoker invoker;
  EventLog log;
  TempDir scratch{"runner"};
  RunnerConfig config;

  explicit Fixture(RepoConfig rc = {})
      : repo_config(rc),
        stored(make_checkpoint_repo(rc, clock)),
        checkpoints(*stored),
        results(make_results_repo(rc, clock)) {
    registry.add("boom", [](const std::vector<std::string>&, const std::optional<CooperativeState>& s,
                            const WorkloadOptions&) {
      return std::make_unique<FailingWorkload>(s ? s->payload["steps"].get<std::int64_t>() : 0);
    });
  }

  Runner runner() {
    RunnerDeps deps;
    deps.cooperative = &coop;
    deps.checkpoints = &checkpoints;
    deps.results = results.get();
    deps.invoker = &invoker;
    deps.clock = &clock;
    deps.log = &log;
    deps.scratch_dir = scratch.path();
    deps.action_name = "f";
    return Runner(config, deps);
  }

  InvocationContext context(const std::string& bin, std::vector<std::string> args, std::int64_t seq = 1,
                            std::int64_t timeout = 60000) {
    InvocationContext c;
    c.chain_id = {"c1"};
    c.seq = seq;
    c.spec = {bin, std::move(args)};
    c.timeout_ms = timeout;
    c.checkpoint_trigger_ms = config.checkpoint_trigger_ms;
    return c;
  }

  InvocationOutcome run(const InvocationContext& ctx) {
    ActivationControl control(clock, clock.now_ms() + ctx.timeout_ms);
    return runner().execute_invocation(ctx, encode_params(ctx), control);
  }

  // Follows re-invocations until the chain stops.
  std::vector<InvocationOutcome> run_chain(InvocationContext ctx) {
    std::vector<InvocationOutcome> outs;
    for (;;) {
      outs.push_back(run(ctx));
      if (outs.back().kind != OutcomeKind::checkpointed_and_reinvoked) return outs;
      const auto& next = invoker.calls.back().second;
      ctx.seq = next[kSeqParam].get<std::int64_t>();
    }
  }

  std::vector<std::string> event_names() const {
    std::vector<std::string> names;
    for (const auto& e : log.events()) names.push_back(e["event"].get<std::string>());
    return names;
  }
};

bool contains_in_order(const std::vector<std::string>& events, const std::vector<std::string>& expected) {
  std::size_t i = 0;
  for (const auto& e : events) {
    if (i < expected.size() && e == expected[i]) ++i;
  }
  return i == expected.size();
}

}  // namespace

TEST_CASE("work below the trigger completes without a checkpoint") {
  Fixture f;
  auto out = f.run(f.context("counter", {"40"}));
  CHECK(out.kind == OutcomeKind::completed);
  CHECK(out.result == json{{"count", 40}});
  CHECK(out.finalize == FinalizeStatus::accepted);
  CHECK(out.timings.work_ms == 40000);
  CHECK_FALSE(out.manifest);
  CHECK(f.invoker.calls.empty());
  CHECK_FALSE(f.stored->get_latest({"c1"}));
  CHECK(f.results->get({"c1"})->status == ChainStatus::completed);
  CHECK(f.clock.now_ms() == 40000);
}

TEST_CASE("counter to 70 checkpoints at the trigger and completes at seq 2") {
  Fixture f;
  auto first = f.run(f.context("counter", {"70"}));
  CHECK(first.kind == OutcomeKind::checkpointed_and_reinvoked);
  CHECK(first.timings.work_ms == 50000);
  REQUIRE(first.manifest);
  CHECK(first.manifest->seq == 1);
  CHECK(first.next_activation_id == std::optional<std::string>("act-1"));

  // The successor gets the same parameters with the chain keys advanced.
  REQUIRE(f.invoker.calls.size() == 1);
  CHECK(f.invoker.calls[0].first == "f");
  auto next = f.invoker.calls[0].second;
  CHECK(next[kChainIdParam] == "c1");
  CHECK(next[kSeqParam] == 2);
  auto original = encode_params(f.context("counter", {"70"}));
  next.erase(kSeqParam);
  original.erase(kSeqParam);
  CHECK(next == original);

  auto latest = f.stored->get_latest({"c1"});
  REQUIRE(latest);
  auto state = json::parse(*latest->reader(latest->manifest.restart.state_key));
  CHECK(state["payload"]["count"] == 50);

  auto second = f.run(f.context("counter", {"70"}, 2));
  CHECK(second.kind == OutcomeKind::completed);
  CHECK(second.restore.kind == RestoreKind::resumed);
  CHECK(second.restore.from_seq == 1);
  CHECK(second.result == json{{"count", 70}});
  CHECK(second.timings.work_ms == 20000);

  auto rec = f.results->get({"c1"});
  CHECK(rec->invocation_count == 2);
  REQUIRE(rec->partials.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(rec->partials[i].payload["count"] == 10 * (i + 1));
    CHECK(rec->partials[i].seq == (i < 5 ? 1 : 2));
  }
  CHECK(rec->final_result->winner_seq == 2);

  CHECK(contains_in_order(f.event_names(), {"invocation-start", "restore", "work-start", "trigger-armed",
                                            "checkpoint-start", "checkpoint-done", "upload-done", "reinvoked",
                                            "terminated", "invocation-start", "restore", "work-start",
                                            "finalized"}));
}

TEST_CASE("a failing workload fails the chain without a checkpoint") {
  Fixture f;
  auto out = f.run(f.context("boom", {}));
  CHECK(out.kind == OutcomeKind::failed);
  CHECK(out.error.find("boom at step 3") != std::string::npos);
  CHECK_FALSE(f.stored->get_latest({"c1"}));
  CHECK(f.invoker.calls.empty());
  auto rec = f.results->get({"c1"});
  CHECK(rec->status == ChainStatus::failed);
  CHECK(f.clock.now_ms() == 3000);
}

TEST_CASE("restore decisions") {
  SUBCASE("fresh on an empty repository") {
    Fixture f;
    auto out = f.run(f.context("counter", {"5"}));
    CHECK(out.restore.kind == RestoreKind::fresh);
    CHECK_FALSE(out.restore.degraded);
  }
  SUBCASE("corrupt image fails the chain") {
    Fixture f;
    f.run(f.context("counter", {"70"}));
    f.checkpoints.tamper = true;
    auto out = f.run(f.context("counter", {"70"}, 2));
    CHECK(out.kind == OutcomeKind::failed);
    CHECK(out.restore.kind == RestoreKind::failed);
    CHECK(out.restore.reason == "corrupt");
    CHECK(f.results->get({"c1"})->status == ChainStatus::failed);
  }
  SUBCASE("corrupt image degrades to a fresh start when allowed") {
    Fixture f;
    f.config.restore_policy = RestorePolicy::restart_from_scratch;
    f.run(f.context("counter", {"70"}));
    f.checkpoints.tamper = true;
    auto out = f.run(f.context("counter", {"70"}, 2));
    CHECK(out.restore.kind == RestoreKind::fresh);
    CHECK(out.restore.degraded);
    CHECK(out.restore.reason == "corrupt");
    CHECK_FALSE(f.log.events_named("restore-degraded").empty());
    CHECK(out.kind == OutcomeKind::checkpointed_and_reinvoked);
  }
  SUBCASE("state for other arguments is a restore error") {
    Fixture f;
    f.run(f.context("counter", {"80"}));
    auto out = f.run(f.context("counter", {"70"}, 2));
    CHECK(out.kind == OutcomeKind::failed);
    CHECK(out.restore.reason == "restore-error");
  }
  SUBCASE("unreadable manifest is corrupt") {
    TempDir root;
    Fixture f(RepoConfig{RepoBackend::local_fs, root.path(), {}});
    f.run(f.context("counter", {"70"}));
    const auto path = root.path() / "checkpoints" / "c1" / "1" / "manifest.json";
    std::filesystem::resize_file(path, 10);
    auto out = f.run(f.context("counter", {"70"}, 2));
    CHECK(out.restore.kind == RestoreKind::failed);
    CHECK(out.restore.reason == "corrupt");
  }
}

TEST_CASE("guards on chain length and trigger placement") {
  Fixture f;
  f.config.max_chain_length = 3;
  auto out = f.run(f.context("counter", {"5"}, 4));
  CHECK(out.kind == OutcomeKind::failed);
  CHECK(f.results->get({"c1"})->status == ChainStatus::failed);

  Fixture g;
  g.config.checkpoint_trigger_ms = 60000;
  auto ctx = g.context("counter", {"5"});
  ctx.checkpoint_trigger_ms = 50000;
  auto bad = g.run(ctx);
  CHECK(bad.kind == OutcomeKind::failed);

  RunnerConfig rc;
  rc.max_chain_length = 0;
  CHECK_THROWS_AS(rc.validate(), Error);
  rc = RunnerConfig{};
  rc.unit_ms = 0;
  CHECK_THROWS_AS(rc.validate(), Error);
}

TEST_CASE("re-invocation failure keeps the uploaded checkpoint") {
  Fixture f;
  f.invoker.fail = true;
  auto out = f.run(f.context("counter", {"70"}));
  CHECK(out.kind == OutcomeKind::failed);
  CHECK(out.error.find("re-invocation failed") != std::string::npos);
  auto latest = f.stored->get_latest({"c1"});
  REQUIRE(latest);
  CHECK(latest->manifest.seq == 1);

  // A manual re-invoke resumes from it.
  f.invoker.fail = false;
  auto resumed = f.run(f.context("counter", {"70"}, 2));
  CHECK(resumed.restore.kind == RestoreKind::resumed);
  CHECK(resumed.result == json{{"count", 70}});
}

TEST_CASE("runner disabled runs until killed") {
  Fixture f;
  f.config.enabled = false;
  CHECK_THROWS_AS(f.run(f.context("counter", {"70"})), ActivationKilled);
  CHECK(f.clock.now_ms() == 60000);
  CHECK_FALSE(f.stored->get_latest({"c1"}));
  CHECK_FALSE(f.results->get({"c1"})->final_result);
}

TEST_CASE("property: chained result equals the uninterrupted result") {
  gen::Rng rng(41);
  for (int i = 0; i < 60; ++i) {
    Fixture f;
    const auto unit = rng.range(1, 50);
    const auto slice = rng.range(1, 8);
    f.config.unit_ms = unit;
    f.config.checkpoint_trigger_ms = slice * unit;
    std::vector<std::string> args;
    std::string bin;
    json expected;
    switch (i % 3) {
      case 0: {
        const auto n = rng.urange(1, 5000);
        bin = "factors";
        args = {std::to_string(n)};
        expected = json(oracle::factorize(n));
        break;
      }
      case 1: {
        const auto size = rng.range(1, 12);
        const auto seed = rng.urange(0, 1000);
        bin = "matrix";
        args = {std::to_string(size), std::to_string(seed)};
        expected = json{{"rows", size}, {"cols", size}, {"checksum", oracle::matrix_checksum(size, seed)}};
        break;
      }
      default: {
        const auto limit = rng.range(0, 60);
        bin = "counter";
        args = {std::to_string(limit)};
        expected = json{{"count", limit}};
        break;
      }
    }
    auto ctx = f.context(bin, args, 1, f.config.checkpoint_trigger_ms + unit * rng.range(1, 3));
    auto outs = f.run_chain(ctx);
    REQUIRE(outs.back().kind == OutcomeKind::completed);
    CHECK(*outs.back().result == expected);
    CHECK(f.results->get({"c1"})->finals.size() == 1);
  }
}

TEST_CASE("property: no checkpoint is written when work ends before the trigger") {
  gen::Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    Fixture f;
    const auto slice = rng.range(2, 40);
    f.config.checkpoint_trigger_ms = slice * 1000;
    const auto work = rng.range(0, slice - 1);
    auto out = f.run(f.context("counter", {std::to_string(work)}, 1, slice * 1000 + 5000));
    CHECK(out.kind == OutcomeKind::completed);
    CHECK_FALSE(f.stored->get_latest({"c1"}));
    CHECK(f.log.events_named("checkpoint-start").empty());
  }
}

TEST_CASE("completion exactly at the trigger wins over the checkpoint") {
  Fixture f;
  auto out = f.run(f.context("counter", {"50"}));
  CHECK(out.kind == OutcomeKind::completed);
  CHECK_FALSE(f.stored->get_latest({"c1"}));
}

TEST_CASE("counter checkpoints have constant size along the chain") {
  for (std::int64_t slice : {500, 250, 125}) {
    Fixture f;
    f.config.unit_ms = 1;
    f.config.checkpoint_trigger_ms = slice;
    auto outs = f.run_chain(f.context("counter", {"1000"}, 1, slice + 100));
    CHECK(static_cast<std::int64_t>(outs.size()) == 1000 / slice);
    std::set<std::uint64_t> sizes;
    for (const auto& o : outs) {
      if (o.manifest) sizes.insert(o.manifest->total_bytes());
    }
    CHECK(sizes.size() == 1);
    CHECK(outs.back().result == json{{"count", 1000}});
  }
}

TEST_CASE("low trigger margin is logged") {
  RepoConfig slow;
  slow.backend = RepoBackend::stub_remote;
  // Margin is 10 s; an upload of 6 s leaves less than twice the cost.
  slow.latency.fixed_ms = 6000;
  Fixture f(slow);
  auto out = f.run(f.context("counter", {"70"}));
  CHECK(out.kind == OutcomeKind::checkpointed_and_reinvoked);
  CHECK(out.timings.upload_ms == 6000);
  CHECK_FALSE(f.log.events_named("trigger-margin-low").empty());

  Fixture fast;
  fast.run(fast.context("counter", {"70"}));
  CHECK(fast.log.events_named("trigger-margin-low").empty());
}

TEST_CASE("upload that would overrun the deadline kills the activation") {
  RepoConfig slow;
  slow.backend = RepoBackend::stub_remote;
  slow.latency.fixed_ms = 20000;
  Fixture f(slow);
  CHECK_THROWS_AS(f.run(f.context("counter", {"70"})), ActivationKilled);
  CHECK(f.invoker.calls.empty());
}

TEST_CASE("race configuration: orphan finalizes inside its window") {
  for (bool fencing : {false, true}) {
    CAPTURE(fencing);
    Fixture f;
    f.config.fencing_enabled = fencing;
    f.config.delayed_termination_ms = 5000;
    auto first = f.run(f.context("counter", {"55"}));
    CHECK(first.kind == OutcomeKind::checkpointed_and_reinvoked);
    REQUIRE(first.orphan_finalize);
    CHECK(*first.orphan_finalize == FinalizeStatus::accepted);
    auto second = f.run(f.context("counter", {"55"}, 2));
    CHECK(second.result == json{{"count", 55}});
    auto rec = f.results->get({"c1"});
    if (fencing) {
      CHECK(second.finalize == FinalizeStatus::duplicate_rejected);
      CHECK(rec->finals.size() == 1);
      CHECK(rec->rejected.size() == 1);
    } else {
      CHECK(second.finalize == FinalizeStatus::accepted);
      CHECK(rec->finals.size() == 2);
    }
  }

  // Work left after the window: the orphan is stopped and never finalizes.
  Fixture g;
  g.config.delayed_termination_ms = 5000;
  auto out = g.run(g.context("counter", {"70"}));
  CHECK_FALSE(out.orphan_finalize);
  CHECK(g.results->get({"c1"})->finals.empty());
}

TEST_CASE("outcome JSON round-trips") {
  Fixture f;
  auto out = f.run(f.context("counter", {"70"}));
  auto back = json(out).get<InvocationOutcome>();
  CHECK(json(back) == json(out));
  CHECK(json(out)["kind"] == "checkpointed_and_reinvoked");
  CHECK(json(out)["timings"]["work_ms"] == 50000);

  RunnerConfig rc;
  rc.delayed_termination_ms = 10;
  CHECK(json(rc).get<RunnerConfig>().delayed_termination_ms == 10);
  CHECK(parse_restore_policy(to_string(RestorePolicy::restart_from_scratch)) == RestorePolicy::restart_from_scratch);
}

TEST_CASE("real clock: threaded chain posts every decade once") {
  PlatformOptions options;
  options.clock_mode = ClockMode::real;
  LocalPlatform platform(options);
  testing::ChainSetup s;
  s.unit_ms = 10;
  s.trigger_ms = 120;
  s.timeout_ms = 2000;
  platform.register_action(testing::action_config("f", s));
  auto run = platform.run_chain("f", testing::params("counter", {"30"}));
  REQUIRE(run.record);
  CHECK(run.record->status == ChainStatus::completed);
  CHECK(run.record->final_result->payload == json{{"count", 30}});
  CHECK(run.record->invocation_count >= 2);
  std::vector<json> posts;
  for (const auto& p : run.record->partials) posts.push_back(p.payload);
  CHECK(posts == std::vector<json>{{{"count", 10}}, {{"count", 20}}, {{"count", 30}}});
  for (const auto& a : run.activations) CHECK(a.outcome == ActivationOutcome::success);
}
