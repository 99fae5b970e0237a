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

// Checkpoint repository and results repository.
//
// Both sit on a small object-store abstraction with an in-memory and a local
// filesystem backend. The stub_remote backend wraps either of them and
// charges transfer latency on the active clock, standing in for a remote
// object store or document database.
//
// local_fs layout:
//   <root>/checkpoints/<chain_id>/<seq>/manifest.json   (+ blob files)
//   <root>/chains/<chain_id>.json                        ChainRecord (no partials)
//   <root>/chains/<chain_id>.partials/<index>.json       one partial each
//   <root>/chains/<chain_id>.seen/<sha256>               partial dedup markers
// Every object is committed with write-temp-then-rename and a checkpoint's
// manifest is written after all of its blobs, so a manifest is never visible
// before the bytes it describes.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faaschain/clock.hpp"
#include "faaschain/core.hpp"

namespace faaschain {

enum class RepoBackend { memory, local_fs, stub_remote };

std::string_view to_string(RepoBackend backend);
RepoBackend parse_repo_backend(std::string_view text);

struct LatencyModel {
  double put_ms_per_mib = 0;
  double get_ms_per_mib = 0;
  std::int64_t fixed_ms = 0;

  std::int64_t put_cost_ms(std::uint64_t bytes) const;
  std::int64_t get_cost_ms(std::uint64_t bytes) const;
};

struct RepoConfig {
  RepoBackend backend = RepoBackend::memory;
  // local_fs root; for stub_remote, a non-empty root backs the stub with
  // local_fs instead of memory.
  std::filesystem::path root;
  LatencyModel latency;

  void validate() const;
};

class ObjectStore {
 public:
  virtual ~ObjectStore() = default;

  virtual void put(const std::string& key, std::string_view bytes) = 0;
  virtual std::optional<std::string> get(const std::string& key) const = 0;
  // Keys beginning with `prefix`, sorted.
  virtual std::vector<std::string> list(const std::string& prefix) const = 0;
  // Runs `fn` while holding an exclusive lock scoped to `key`.
  virtual void locked(const std::string& key, const std::function<void()>& fn) = 0;
};

class MemoryObjectStore final : public ObjectStore {
 public:
  void put(const std::string& key, std::string_view bytes) override;
  std::optional<std::string> get(const std::string& key) const override;
  std::vector<std::string> list(const std::string& prefix) const override;
  void locked(const std::string& key, const std::function<void()>& fn) override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> objects_;
  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// Keys map to paths below root. Locks combine an in-process mutex with an
// flock(2) on <root>/locks/<key>.lock so separate processes sharing the root
// (an action server and a gateway) serialize per chain too.
class LocalFsObjectStore final : public ObjectStore {
 public:
  explicit LocalFsObjectStore(std::filesystem::path root);

  void put(const std::string& key, std::string_view bytes) override;
  std::optional<std::string> get(const std::string& key) const override;
  std::vector<std::string> list(const std::string& prefix) const override;
  void locked(const std::string& key, const std::function<void()>& fn) override;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path root_;
  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

std::shared_ptr<ObjectStore> make_object_store(const RepoConfig& config);

// ---------------------------------------------------------------------------

struct StoredCheckpoint {
  CheckpointManifest manifest;
  BlobReader reader;
};

class CheckpointRepo {
 public:
  virtual ~CheckpointRepo() = default;

  // Stores the blobs (read through `blobs`) and then the manifest under
  // (chain_id, seq); returns the manifest key. The manifest must verify
  // against `blobs`, and a (chain_id, seq) pair can be written only once.
  virtual std::string put(const CheckpointManifest& manifest, const BlobReader& blobs) = 0;

  // Highest-seq manifest for the chain. Throws Error(corrupt) when the
  // stored manifest cannot be decoded; absent is not an error.
  virtual std::optional<StoredCheckpoint> get_latest(const ChainId& chain_id) = 0;
};

class ObjectCheckpointRepo final : public CheckpointRepo {
 public:
  explicit ObjectCheckpointRepo(std::shared_ptr<ObjectStore> store);

  std::string put(const CheckpointManifest& manifest, const BlobReader& blobs) override;
  std::optional<StoredCheckpoint> get_latest(const ChainId& chain_id) override;

 private:
  std::shared_ptr<ObjectStore> store_;
};

class StubRemoteCheckpointRepo final : public CheckpointRepo {
 public:
  StubRemoteCheckpointRepo(std::unique_ptr<CheckpointRepo> inner, LatencyModel latency, Clock& clock);

  // Charges fixed_ms + put_ms_per_mib * (blob bytes).
  std::string put(const CheckpointManifest& manifest, const BlobReader& blobs) override;
  // Charges fixed_ms; each blob read charges get_ms_per_mib * size.
  std::optional<StoredCheckpoint> get_latest(const ChainId& chain_id) override;

 private:
  std::unique_ptr<CheckpointRepo> inner_;
  LatencyModel latency_;
  Clock& clock_;
};

std::unique_ptr<CheckpointRepo> make_checkpoint_repo(const RepoConfig& config, Clock& clock);

// ---------------------------------------------------------------------------

enum class FinalizeStatus { accepted, duplicate_rejected };

std::string_view to_string(FinalizeStatus status);

class ResultsRepo {
 public:
  virtual ~ResultsRepo() = default;

  // Counts distinct seq values per chain.
  virtual void record_invocation(const ChainId& chain_id, std::int64_t seq) = 0;
  // Appends in arrival order; an identical (seq, payload) pair is kept once.
  virtual void put_partial(const ChainId& chain_id, std::int64_t seq, const json& payload) = 0;
  // With fencing: atomic first-writer-wins; later writers are recorded as
  // rejected duplicates. Without fencing: every call appends a final entry.
  virtual FinalizeStatus finalize(const ChainId& chain_id, std::int64_t seq, const json& payload, bool fencing,
                                  std::int64_t finished_at) = 0;
  // No effect on a completed chain.
  virtual void mark_failed(const ChainId& chain_id, const std::string& reason) = 0;
  virtual std::optional<ChainRecord> get(const ChainId& chain_id) = 0;
};

class ObjectResultsRepo final : public ResultsRepo {
 public:
  explicit ObjectResultsRepo(std::shared_ptr<ObjectStore> store);

  void record_invocation(const ChainId& chain_id, std::int64_t seq) override;
  void put_partial(const ChainId& chain_id, std::int64_t seq, const json& payload) override;
  FinalizeStatus finalize(const ChainId& chain_id, std::int64_t seq, const json& payload, bool fencing,
                          std::int64_t finished_at) override;
  void mark_failed(const ChainId& chain_id, const std::string& reason) override;
  std::optional<ChainRecord> get(const ChainId& chain_id) override;

 private:
  // Read-modify-write of one ChainRecord under the chain's lock.
  template <typename Fn>
  auto modify(const ChainId& chain_id, Fn&& fn);

  std::shared_ptr<ObjectStore> store_;
};

class StubRemoteResultsRepo final : public ResultsRepo {
 public:
  StubRemoteResultsRepo(std::unique_ptr<ResultsRepo> inner, LatencyModel latency, Clock& clock);

  void record_invocation(const ChainId& chain_id, std::int64_t seq) override;
  void put_partial(const ChainId& chain_id, std::int64_t seq, const json& payload) override;
  FinalizeStatus finalize(const ChainId& chain_id, std::int64_t seq, const json& payload, bool fencing,
                          std::int64_t finished_at) override;
  void mark_failed(const ChainId& chain_id, const std::string& reason) override;
  std::optional<ChainRecord> get(const ChainId& chain_id) override;

 private:
  std::unique_ptr<ResultsRepo> inner_;
  LatencyModel latency_;
  Clock& clock_;
};

std::unique_ptr<ResultsRepo> make_results_repo(const RepoConfig& config, Clock& clock);

}  // namespace faaschain
