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

#include <condition_variable>
#include <fstream>
#include <thread>

#include "faaschain/checkpoint.hpp"
#include "faaschain/digest.hpp"
#include "faaschain/stores.hpp"
#include "generators.hpp"
#include "helpers.hpp"
#include "interleaving.hpp"

using namespace faaschain;
using testing::TempDir;

namespace {

constexpr std::uint64_t kMiB = 1024 * 1024;

struct Blobs {
  std::map<std::string, std::string> files;
  BlobReader reader() const {
    return [this](const std::string& rel) -> std::optional<std::string> {
      auto it = files.find(rel);
      if (it == files.end()) return std::nullopt;
      return it->second;
    };
  }
};

CheckpointManifest manifest_for(const ChainId& chain, std::int64_t seq, const Blobs& blobs) {
  CheckpointManifest m;
  m.chain_id = chain;
  m.seq = seq;
  m.created_at = 1000 * seq;
  for (const auto& [name, bytes] : blobs.files) m.files.push_back({name, bytes.size(), sha256_hex(bytes)});
  m.restart.state_key = blobs.files.empty() ? "" : blobs.files.begin()->first;
  return m;
}

// One backend under test, with its own clock so latency charges are visible.
struct Backend {
  std::string name;
  std::unique_ptr<TempDir> dir;
  SimulatedClock clock;
  std::unique_ptr<CheckpointRepo> checkpoints;
  std::unique_ptr<ResultsRepo> results;

  Backend(std::string n, RepoBackend kind, bool disk, LatencyModel latency = {}) : name(std::move(n)) {
    RepoConfig config;
    config.backend = kind;
    config.latency = latency;
    if (disk) {
      dir = std::make_unique<TempDir>("store");
      config.root = dir->path();
    }
    config.validate();
    checkpoints = make_checkpoint_repo(config, clock);
    results = make_results_repo(config, clock);
  }
};

std::vector<std::unique_ptr<Backend>> all_backends() {
  std::vector<std::unique_ptr<Backend>> out;
  LatencyModel slow{40, 20, 7};
  out.push_back(std::make_unique<Backend>("memory", RepoBackend::memory, false));
  out.push_back(std::make_unique<Backend>("local_fs", RepoBackend::local_fs, true));
  out.push_back(std::make_unique<Backend>("stub_remote/memory", RepoBackend::stub_remote, false, slow));
  out.push_back(std::make_unique<Backend>("stub_remote/local_fs", RepoBackend::stub_remote, true, slow));
  return out;
}

std::string error_kind(const std::function<void()>& fn) {
  try {
    fn();
    return "ok";
  } catch (const Error& e) {
    return std::string(to_string(e.kind()));
  }
}

// Applies one random operation and returns what an observer sees.
json apply_random_op(gen::Rng& rng, Backend& b, const std::vector<ChainId>& chains) {
  const auto& chain = rng.pick(chains);
  json obs{{"chain", chain.value}};
  switch (rng.range(0, 7)) {
    case 0: {
      const auto seq = rng.range(1, 4);
      obs["op"] = "record_invocation";
      obs["err"] = error_kind([&] { b.results->record_invocation(chain, seq); });
      break;
    }
    case 1: {
      const auto seq = rng.range(1, 3);
      const json payload{{"count", 10 * rng.range(1, 4)}};
      obs["op"] = "put_partial";
      obs["err"] = error_kind([&] { b.results->put_partial(chain, seq, payload); });
      break;
    }
    case 2: {
      const auto seq = rng.range(1, 3);
      const bool fencing = rng.coin();
      const json payload = gen::payload(rng);
      const auto at = rng.range(0, 1000);
      obs["op"] = "finalize";
      obs["err"] = error_kind([&] { obs["status"] = to_string(b.results->finalize(chain, seq, payload, fencing, at)); });
      break;
    }
    case 3: {
      obs["op"] = "mark_failed";
      const auto reason = rng.text(10, gen::kAnyText);
      obs["err"] = error_kind([&] { b.results->mark_failed(chain, reason); });
      break;
    }
    case 4: case 5: {
      Blobs blobs;
      for (auto n = rng.range(0, 3); n > 0; --n) blobs.files["blob" + std::to_string(n)] = rng.bytes(200);
      auto m = manifest_for(chain, rng.range(1, 4), blobs);
      if (!blobs.files.empty() && rng.range(0, 5) == 0) blobs.files.begin()->second += "!";
      obs["op"] = "ckpt_put";
      obs["err"] = error_kind([&] { obs["key"] = b.checkpoints->put(m, blobs.reader()); });
      break;
    }
    default: {
      obs["op"] = "get";
      obs["record"] = nullptr;
      if (auto r = b.results->get(chain)) obs["record"] = json(*r);
      obs["latest"] = nullptr;
      if (auto c = b.checkpoints->get_latest(chain)) {
        obs["latest"] = json(c->manifest);
        json contents = json::object();
        for (const auto& f : c->manifest.files) contents[f.relative_path] = sha256_hex(c->reader(f.relative_path).value());
        obs["contents"] = contents;
        obs["verified"] = verify_manifest(c->manifest, c->reader).pass;
      }
      break;
    }
  }
  return obs;
}

}  // namespace

TEST_CASE("repository config validation") {
  RepoConfig bad;
  bad.latency.fixed_ms = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  RepoConfig no_root;
  no_root.backend = RepoBackend::local_fs;
  CHECK_THROWS_AS(no_root.validate(), Error);
  RepoConfig unwritable;
  unwritable.backend = RepoBackend::local_fs;
  unwritable.root = "/proc/faaschain-cannot-exist";
  CHECK_THROWS_AS(unwritable.validate(), Error);

  CHECK(parse_repo_backend("local-fs") == RepoBackend::local_fs);
  CHECK(parse_repo_backend("stub_remote") == RepoBackend::stub_remote);
  CHECK_THROWS_AS(parse_repo_backend("s3"), Error);
}

TEST_CASE("object keys cannot escape the store") {
  TempDir dir;
  LocalFsObjectStore disk(dir.path());
  MemoryObjectStore mem;
  for (ObjectStore* s : std::vector<ObjectStore*>{&disk, &mem}) {
    CHECK_THROWS_AS(s->put("", "x"), Error);
    CHECK_THROWS_AS(s->put("/etc/x", "x"), Error);
    CHECK_THROWS_AS(s->put("a/../../b", "x"), Error);
    s->put("a/b/c", "1");
    s->put("a/b/d", "2");
    s->put("a/e", "3");
    CHECK(s->list("a/b/") == std::vector<std::string>{"a/b/c", "a/b/d"});
    CHECK(s->list("a/") == std::vector<std::string>{"a/b/c", "a/b/d", "a/e"});
    CHECK(s->get("a/e") == std::optional<std::string>("3"));
    CHECK_FALSE(s->get("a/zzz"));
  }
}

TEST_CASE("checkpoint repository examples") {
  for (auto& b : all_backends()) {
    CAPTURE(b->name);
    const ChainId c1{"c1"};
    CHECK_FALSE(b->checkpoints->get_latest(c1));

    Blobs blobs;
    blobs.files["state.json"] = R"({"count":50})";
    b->checkpoints->put(manifest_for(c1, 1, blobs), blobs.reader());
    auto latest = b->checkpoints->get_latest(c1);
    REQUIRE(latest);
    CHECK(latest->manifest.seq == 1);
    CHECK(latest->reader("state.json") == blobs.files["state.json"]);
    CHECK(verify_manifest(latest->manifest, latest->reader).pass);

    b->checkpoints->put(manifest_for(c1, 2, blobs), blobs.reader());
    b->checkpoints->put(manifest_for(c1, 3, blobs), blobs.reader());
    CHECK(b->checkpoints->get_latest(c1)->manifest.seq == 3);
    CHECK(error_kind([&] { b->checkpoints->put(manifest_for(c1, 3, blobs), blobs.reader()); }) == "precondition");

    auto tampered = blobs;
    auto m = manifest_for(c1, 4, blobs);
    tampered.files["state.json"] += " ";
    CHECK(error_kind([&] { b->checkpoints->put(m, tampered.reader()); }) == "precondition");
    CHECK(b->checkpoints->get_latest(c1)->manifest.seq == 3);

    // seq 10 sorts after 9 numerically, not textually.
    for (std::int64_t s = 9; s <= 10; ++s) b->checkpoints->put(manifest_for(c1, s, blobs), blobs.reader());
    CHECK(b->checkpoints->get_latest(c1)->manifest.seq == 10);
    CHECK_FALSE(b->checkpoints->get_latest({"c"}));
  }
}

TEST_CASE("stub remote charges the documented latency") {
  Backend b("stub", RepoBackend::stub_remote, false, LatencyModel{50, 30, 100});
  Blobs blobs;
  blobs.files["image.bin"] = std::string(kMiB, 'x');
  const auto before = b.clock.now_ms();
  b.checkpoints->put(manifest_for({"c1"}, 1, blobs), blobs.reader());
  // 100 ms fixed plus 50 ms per MiB for one MiB.
  CHECK(b.clock.now_ms() - before == 150);

  const auto t0 = b.clock.now_ms();
  auto latest = b.checkpoints->get_latest({"c1"});
  CHECK(b.clock.now_ms() - t0 == 100);
  const auto t1 = b.clock.now_ms();
  CHECK(latest->reader("image.bin")->size() == kMiB);
  CHECK(b.clock.now_ms() - t1 == 30);

  CHECK(LatencyModel{50, 30, 100}.put_cost_ms(kMiB / 2) == 125);
  CHECK(LatencyModel{}.put_cost_ms(10 * kMiB) == 0);
}

TEST_CASE("truncated manifest on disk is reported as corrupt") {
  TempDir dir;
  RepoConfig config{RepoBackend::local_fs, dir.path(), {}};
  SimulatedClock clock;
  auto repo = make_checkpoint_repo(config, clock);
  Blobs blobs;
  blobs.files["state.json"] = "{}";
  repo->put(manifest_for({"c1"}, 1, blobs), blobs.reader());
  const auto manifest_path = dir.path() / "checkpoints" / "c1" / "1" / "manifest.json";
  REQUIRE(std::filesystem::exists(manifest_path));
  CHECK(std::filesystem::exists(dir.path() / "checkpoints" / "c1" / "1" / "state.json"));
  std::filesystem::resize_file(manifest_path, std::filesystem::file_size(manifest_path) / 2);
  CHECK(error_kind([&] { repo->get_latest({"c1"}); }) == "corrupt");

  // A manifest copied to the wrong place is corrupt too, not silently used.
  std::filesystem::create_directories(dir.path() / "checkpoints" / "c2" / "7");
  std::filesystem::copy_file(dir.path() / "checkpoints" / "c1" / "1" / "state.json",
                             dir.path() / "checkpoints" / "c2" / "7" / "state.json");
  write_file_atomic(dir.path() / "checkpoints" / "c2" / "7" / "manifest.json",
                    canonical(json(manifest_for({"c1"}, 1, blobs))));
  CHECK(error_kind([&] { repo->get_latest({"c2"}); }) == "corrupt");
}

TEST_CASE("blobs without a manifest and temp files are invisible") {
  TempDir dir;
  RepoConfig config{RepoBackend::local_fs, dir.path(), {}};
  SimulatedClock clock;
  auto repo = make_checkpoint_repo(config, clock);
  Blobs blobs;
  blobs.files["state.json"] = "{}";
  repo->put(manifest_for({"c1"}, 1, blobs), blobs.reader());
  // An interrupted commit of seq 2: blob written, manifest only as a temp file.
  const auto seq2 = dir.path() / "checkpoints" / "c1" / "2";
  std::filesystem::create_directories(seq2);
  std::ofstream(seq2 / "state.json") << "{}";
  std::ofstream(seq2 / "manifest.json.tmp-123") << "{";
  CHECK(repo->get_latest({"c1"})->manifest.seq == 1);

  LocalFsObjectStore store(dir.path());
  for (const auto& key : store.list("checkpoints/")) CHECK(key.find(".tmp-") == std::string::npos);
}

TEST_CASE("results repository examples") {
  for (auto& b : all_backends()) {
    CAPTURE(b->name);
    auto& r = *b->results;
    const ChainId c1{"c1"};
    CHECK_FALSE(r.get(c1));

    for (int k = 10; k <= 50; k += 10) r.put_partial(c1, 1, json{{"count", k}});
    r.put_partial(c1, 1, json{{"count", 50}});
    for (int k = 60; k <= 70; k += 10) r.put_partial(c1, 2, json{{"count", k}});
    auto rec = r.get(c1);
    REQUIRE(rec);
    REQUIRE(rec->partials.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(rec->partials[i].payload["count"] == 10 * (i + 1));
    CHECK(rec->partials[5].seq == 2);

    r.record_invocation(c1, 1);
    r.record_invocation(c1, 2);
    r.record_invocation(c1, 2);
    CHECK(r.get(c1)->invocation_count == 2);
    CHECK(r.get(c1)->observed_seqs == std::vector<std::int64_t>{1, 2});

    CHECK(r.finalize(c1, 2, json{{"count", 70}}, true, 5) == FinalizeStatus::accepted);
    CHECK(r.finalize(c1, 1, json{{"count", 70}}, true, 6) == FinalizeStatus::duplicate_rejected);
    rec = r.get(c1);
    CHECK(rec->status == ChainStatus::completed);
    CHECK(rec->finals.size() == 1);
    CHECK(rec->final_result->winner_seq == 2);
    CHECK(rec->rejected.size() == 1);
    r.mark_failed(c1, "late");
    CHECK(r.get(c1)->status == ChainStatus::completed);

    const ChainId c2{"c2"};
    CHECK(r.finalize(c2, 1, json{{"count", 70}}, false, 1) == FinalizeStatus::accepted);
    CHECK(r.finalize(c2, 2, json{{"count", 70}}, false, 2) == FinalizeStatus::accepted);
    CHECK(r.get(c2)->finals.size() == 2);
    CHECK(r.get(c2)->final_result->winner_seq == 1);

    const ChainId c3{"c3"};
    r.mark_failed(c3, "boom");
    CHECK(r.get(c3)->status == ChainStatus::failed);
    CHECK(r.get(c3)->failure_reason == "boom");
    CHECK_THROWS_AS(r.get({"bad/id"}), Error);
  }
}

TEST_CASE("corrupt chain record is reported") {
  TempDir dir;
  RepoConfig config{RepoBackend::local_fs, dir.path(), {}};
  SimulatedClock clock;
  auto repo = make_results_repo(config, clock);
  repo->record_invocation({"c1"}, 1);
  std::ofstream(dir.path() / "chains" / "c1.json", std::ios::trunc) << "{\"chain_id\":";
  CHECK(error_kind([&] { repo->get({"c1"}); }) == "corrupt");
  CHECK(error_kind([&] { repo->record_invocation({"c1"}, 2); }) == "corrupt");
}

TEST_CASE("property: backends are observationally equivalent") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto backends = all_backends();
    std::vector<std::vector<json>> traces(backends.size());
    const std::vector<ChainId> chains{{"a"}, {"b"}, {"c-1"}};
    for (std::size_t i = 0; i < backends.size(); ++i) {
      gen::Rng rng(1000 + seed);
      for (int op = 0; op < 60; ++op) traces[i].push_back(apply_random_op(rng, *backends[i], chains));
    }
    for (std::size_t i = 1; i < backends.size(); ++i) {
      CAPTURE(backends[i]->name);
      CHECK(traces[i] == traces[0]);
    }
    // Only the stub backends spend time.
    CHECK(backends[0]->clock.now_ms() == 0);
    CHECK(backends[1]->clock.now_ms() == 0);
    CHECK(backends[2]->clock.now_ms() > 0);
    CHECK(backends[2]->clock.now_ms() == backends[3]->clock.now_ms());
  }
}

TEST_CASE("property: get_latest after put observes at least that seq") {
  for (auto& b : all_backends()) {
    CAPTURE(b->name);
    gen::Rng rng(77);
    std::map<std::string, std::int64_t> best;
    for (int i = 0; i < 40; ++i) {
      ChainId chain{rng.coin() ? "x" : "y"};
      const auto seq = rng.range(1, 30);
      Blobs blobs;
      blobs.files["s"] = rng.bytes(30);
      if (error_kind([&] { b->checkpoints->put(manifest_for(chain, seq, blobs), blobs.reader()); }) == "ok") {
        best[chain.value] = std::max(best[chain.value], seq);
      }
      CHECK(b->checkpoints->get_latest(chain)->manifest.seq == best[chain.value]);
    }
  }
}

TEST_CASE("concurrent finalizers: exactly one accepted with fencing") {
  for (auto& b : all_backends()) {
    CAPTURE(b->name);
    for (int round = 0; round < 20; ++round) {
      const ChainId chain{"race-" + std::to_string(round)};
      std::atomic<int> accepted{0};
      {
        std::vector<std::jthread> threads;
        for (int t = 0; t < 4; ++t) {
          threads.emplace_back([&, t] {
            if (b->results->finalize(chain, t + 1, json{{"t", t}}, true, t) == FinalizeStatus::accepted) ++accepted;
          });
        }
      }
      CHECK(accepted == 1);
      auto rec = b->results->get(chain);
      CHECK(rec->finals.size() == 1);
      CHECK(rec->rejected.size() == 3);
    }
  }
}

TEST_CASE("exhaustive two-writer interleavings: fencing admits exactly one final") {
  auto memory = [] { return std::make_shared<MemoryObjectStore>(); };
  TempDir dir;
  std::atomic<int> n{0};
  auto disk = [&] { return std::make_shared<LocalFsObjectStore>(dir / ("s" + std::to_string(n++))); };

  for (const auto& make : std::vector<std::function<std::shared_ptr<ObjectStore>()>>{memory, disk}) {
    auto fenced = interleave::explore_two_writers(make, true, true);
    CHECK(fenced.schedules > 1);
    CHECK(fenced.max_accepted == 1);
    CHECK(fenced.min_accepted == 1);
    CHECK(fenced.records_consistent);

    // Without fencing both writers append.
    auto open = interleave::explore_two_writers(make, false, true);
    CHECK(open.min_accepted == 2);
  }

  // Control: with the per-chain lock switched off some schedule loses the
  // fence, so the harness does reach the interesting interleavings.
  auto unlocked = interleave::explore_two_writers(memory, true, false);
  CHECK(unlocked.schedules > 1);
  CHECK(unlocked.max_accepted == 2);
}

TEST_CASE("partials are stored apart from the chain record") {
  TempDir dir;
  auto store = std::make_shared<LocalFsObjectStore>(dir.path());
  ObjectResultsRepo repo(store);
  const ChainId chain{"many"};
  repo.record_invocation(chain, 1);
  const auto before = store->get("chains/many.json")->size();
  for (int i = 0; i < 300; ++i) repo.put_partial(chain, 1 + i / 100, json{{"count", i}});
  repo.put_partial(chain, 1, json{{"count", 5}});
  CHECK(store->get("chains/many.json")->size() == before);
  auto rec = repo.get(chain);
  REQUIRE(rec);
  REQUIRE(rec->partials.size() == 300);
  for (int i = 0; i < 300; ++i) {
    CHECK(rec->partials[i].payload["count"] == i);
    CHECK(rec->partials[i].seq == 1 + i / 100);
  }

  store->put("chains/many.partials/000000000007.json", "{oops");
  try {
    repo.get(chain);
    FAIL("expected corrupt");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::corrupt);
  }
}
