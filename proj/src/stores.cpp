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

#include "faaschain/stores.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "faaschain/checkpoint.hpp"
#include "faaschain/digest.hpp"

namespace faaschain {

namespace fs = std::filesystem;

std::string_view to_string(RepoBackend backend) {
  switch (backend) {
    case RepoBackend::memory: return "memory";
    case RepoBackend::local_fs: return "local_fs";
    case RepoBackend::stub_remote: return "stub_remote";
  }
  return "memory";
}

RepoBackend parse_repo_backend(std::string_view text) {
  if (text == "memory") return RepoBackend::memory;
  if (text == "local_fs" || text == "local-fs") return RepoBackend::local_fs;
  if (text == "stub_remote" || text == "stub-remote") return RepoBackend::stub_remote;
  throw Error(ErrorKind::invalid_argument, "unknown repository backend '" + std::string(text) + "'");
}

std::int64_t LatencyModel::put_cost_ms(std::uint64_t bytes) const {
  return fixed_ms + std::llround(put_ms_per_mib * static_cast<double>(bytes) / (1024.0 * 1024.0));
}

std::int64_t LatencyModel::get_cost_ms(std::uint64_t bytes) const {
  return std::llround(get_ms_per_mib * static_cast<double>(bytes) / (1024.0 * 1024.0));
}

void RepoConfig::validate() const {
  if (latency.fixed_ms < 0 || latency.put_ms_per_mib < 0 || latency.get_ms_per_mib < 0) {
    throw Error(ErrorKind::invalid_argument, "latency parameters must be >= 0");
  }
  if (backend == RepoBackend::local_fs || (backend == RepoBackend::stub_remote && !root.empty())) {
    if (root.empty()) throw Error(ErrorKind::invalid_argument, "local_fs backend needs a root directory");
    std::error_code ec;
    fs::create_directories(root, ec);
    if (!fs::is_directory(root) || ::access(root.c_str(), W_OK) != 0) {
      throw Error(ErrorKind::invalid_argument, "repository root is not a writable directory: " + root.string());
    }
  }
}

namespace {

void check_key(const std::string& key) {
  if (key.empty() || key.front() == '/' || key.find("..") != std::string::npos) {
    throw Error(ErrorKind::invalid_argument, "invalid object key '" + key + "'");
  }
}

std::mutex& lock_for(std::mutex& guard, std::map<std::string, std::unique_ptr<std::mutex>>& locks,
                     const std::string& key) {
  std::lock_guard lock(guard);
  auto& slot = locks[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

}  // namespace

// ---------------------------------------------------------------------------
// object stores

void MemoryObjectStore::put(const std::string& key, std::string_view bytes) {
  check_key(key);
  std::lock_guard lock(mu_);
  objects_[key] = std::string(bytes);
}

std::optional<std::string> MemoryObjectStore::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = objects_.find(key);
  if (it == objects_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> MemoryObjectStore::list(const std::string& prefix) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (auto it = objects_.lower_bound(prefix); it != objects_.end() && it->first.starts_with(prefix); ++it) {
    out.push_back(it->first);
  }
  return out;
}

void MemoryObjectStore::locked(const std::string& key, const std::function<void()>& fn) {
  std::lock_guard lock(lock_for(locks_mu_, locks_, key));
  fn();
}

LocalFsObjectStore::LocalFsObjectStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path LocalFsObjectStore::path_for(const std::string& key) const {
  check_key(key);
  return root_ / key;
}

void LocalFsObjectStore::put(const std::string& key, std::string_view bytes) {
  write_file_atomic(path_for(key), bytes);
}

std::optional<std::string> LocalFsObjectStore::get(const std::string& key) const {
  return read_file(path_for(key));
}

std::vector<std::string> LocalFsObjectStore::list(const std::string& prefix) const {
  std::vector<std::string> out;
  // Walk from the deepest directory fully named by the prefix.
  auto slash = prefix.rfind('/');
  fs::path base = slash == std::string::npos ? root_ : root_ / prefix.substr(0, slash);
  std::error_code ec;
  if (!fs::is_directory(base, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(base, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    auto name = it->path().filename().string();
    if (name.find(".tmp-") != std::string::npos) continue;
    auto key = fs::relative(it->path(), root_).generic_string();
    if (key.starts_with(prefix)) out.push_back(std::move(key));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void LocalFsObjectStore::locked(const std::string& key, const std::function<void()>& fn) {
  check_key(key);
  std::lock_guard lock(lock_for(locks_mu_, locks_, key));
  auto lock_path = root_ / "locks" / (key + ".lock");
  fs::create_directories(lock_path.parent_path());
  int fd = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorKind::storage, "cannot open lock " + lock_path.string());
  struct Unlock {
    int fd;
    ~Unlock() {
      ::flock(fd, LOCK_UN);
      ::close(fd);
    }
  } guard{fd};
  if (::flock(fd, LOCK_EX) != 0) throw Error(ErrorKind::storage, "cannot lock " + lock_path.string());
  fn();
}

std::shared_ptr<ObjectStore> make_object_store(const RepoConfig& config) {
  config.validate();
  const bool on_disk = config.backend == RepoBackend::local_fs ||
                       (config.backend == RepoBackend::stub_remote && !config.root.empty());
  if (on_disk) return std::make_shared<LocalFsObjectStore>(config.root);
  return std::make_shared<MemoryObjectStore>();
}

// ---------------------------------------------------------------------------
// checkpoint repository

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string checkpoint_prefix(const ChainId& chain_id) {
  if (!is_valid_chain_id(chain_id.value)) {
    throw Error(ErrorKind::invalid_argument, "invalid chain id '" + chain_id.value + "'");
  }
  return "checkpoints/" + chain_id.value + "/";
}

void check_blob_name(const std::string& rel) {
  if (rel.empty() || rel.front() == '/' || rel.find("..") != std::string::npos || rel == kManifestName) {
    throw Error(ErrorKind::invalid_argument, "invalid checkpoint file name '" + rel + "'");
  }
}

}  // namespace

ObjectCheckpointRepo::ObjectCheckpointRepo(std::shared_ptr<ObjectStore> store) : store_(std::move(store)) {}

std::string ObjectCheckpointRepo::put(const CheckpointManifest& manifest, const BlobReader& blobs) {
  const auto dir = checkpoint_prefix(manifest.chain_id) + std::to_string(manifest.seq) + "/";
  for (const auto& f : manifest.files) check_blob_name(f.relative_path);

  std::string key = dir + kManifestName;
  store_->locked(dir, [&] {
    if (store_->get(key)) {
      throw Error(ErrorKind::precondition, "checkpoint already stored for " + manifest.chain_id.value + " seq " +
                                               std::to_string(manifest.seq));
    }
    // Blobs are read once, verified against the manifest, then committed.
    std::map<std::string, std::string> contents;
    auto report = verify_manifest(manifest, [&](const std::string& rel) -> std::optional<std::string> {
      auto bytes = blobs(rel);
      if (bytes) contents[rel] = *bytes;
      return bytes;
    });
    if (!report.pass) {
      for (const auto& f : report.files) {
        if (!f.ok) {
          throw Error(ErrorKind::precondition, "checkpoint does not verify: " + f.relative_path + ": " + f.reason);
        }
      }
    }
    for (const auto& [rel, bytes] : contents) store_->put(dir + rel, bytes);
    store_->put(key, canonical(json(manifest)));
  });
  return key;
}

std::optional<StoredCheckpoint> ObjectCheckpointRepo::get_latest(const ChainId& chain_id) {
  const auto prefix = checkpoint_prefix(chain_id);
  std::optional<std::int64_t> best;
  for (const auto& key : store_->list(prefix)) {
    auto rest = std::string_view(key).substr(prefix.size());
    auto slash = rest.find('/');
    if (slash == std::string_view::npos || rest.substr(slash + 1) != kManifestName) continue;
    auto seq_text = rest.substr(0, slash);
    if (seq_text.empty() || !std::all_of(seq_text.begin(), seq_text.end(), ::isdigit)) continue;
    auto seq = std::stoll(std::string(seq_text));
    if (!best || seq > *best) best = seq;
  }
  if (!best) return std::nullopt;

  const auto dir = prefix + std::to_string(*best) + "/";
  auto bytes = store_->get(dir + kManifestName);
  if (!bytes) throw Error(ErrorKind::corrupt, "manifest vanished for " + chain_id.value);
  CheckpointManifest manifest;
  try {
    manifest = json::parse(*bytes).get<CheckpointManifest>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, "corrupt manifest " + dir + kManifestName + ": " + e.what());
  }
  if (manifest.chain_id != chain_id || manifest.seq != *best) {
    throw Error(ErrorKind::corrupt, "manifest " + dir + kManifestName + " does not match its location");
  }
  auto store = store_;
  BlobReader reader = [store, dir](const std::string& rel) -> std::optional<std::string> {
    if (rel.empty() || rel.front() == '/' || rel.find("..") != std::string::npos) return std::nullopt;
    return store->get(dir + rel);
  };
  return StoredCheckpoint{std::move(manifest), std::move(reader)};
}

StubRemoteCheckpointRepo::StubRemoteCheckpointRepo(std::unique_ptr<CheckpointRepo> inner, LatencyModel latency,
                                                   Clock& clock)
    : inner_(std::move(inner)), latency_(latency), clock_(clock) {}

std::string StubRemoteCheckpointRepo::put(const CheckpointManifest& manifest, const BlobReader& blobs) {
  auto key = inner_->put(manifest, blobs);
  clock_.sleep_for(latency_.put_cost_ms(manifest.total_bytes()));
  return key;
}

std::optional<StoredCheckpoint> StubRemoteCheckpointRepo::get_latest(const ChainId& chain_id) {
  clock_.sleep_for(latency_.fixed_ms);
  auto found = inner_->get_latest(chain_id);
  if (!found) return found;
  auto inner_reader = std::move(found->reader);
  found->reader = [inner_reader, this](const std::string& rel) -> std::optional<std::string> {
    auto bytes = inner_reader(rel);
    if (bytes) clock_.sleep_for(latency_.get_cost_ms(bytes->size()));
    return bytes;
  };
  return found;
}

std::unique_ptr<CheckpointRepo> make_checkpoint_repo(const RepoConfig& config, Clock& clock) {
  auto repo = std::make_unique<ObjectCheckpointRepo>(make_object_store(config));
  if (config.backend != RepoBackend::stub_remote) return repo;
  return std::make_unique<StubRemoteCheckpointRepo>(std::move(repo), config.latency, clock);
}

// ---------------------------------------------------------------------------
// results repository

std::string_view to_string(FinalizeStatus status) {
  return status == FinalizeStatus::accepted ? "accepted" : "duplicate_rejected";
}

ObjectResultsRepo::ObjectResultsRepo(std::shared_ptr<ObjectStore> store) : store_(std::move(store)) {}

namespace {

std::string chain_key(const ChainId& chain_id) {
  if (!is_valid_chain_id(chain_id.value)) {
    throw Error(ErrorKind::invalid_argument, "invalid chain id '" + chain_id.value + "'");
  }
  return "chains/" + chain_id.value + ".json";
}

ChainRecord decode_record(const std::string& key, const std::string& bytes) {
  try {
    return json::parse(bytes).get<ChainRecord>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, "corrupt chain record " + key + ": " + e.what());
  }
}

}  // namespace

template <typename Fn>
auto ObjectResultsRepo::modify(const ChainId& chain_id, Fn&& fn) {
  const auto key = chain_key(chain_id);
  using R = std::invoke_result_t<Fn, ChainRecord&>;
  std::optional<std::conditional_t<std::is_void_v<R>, int, R>> out;
  store_->locked(key, [&] {
    ChainRecord record;
    if (auto bytes = store_->get(key)) {
      record = decode_record(key, *bytes);
    } else {
      record.chain_id = chain_id;
    }
    if constexpr (std::is_void_v<R>) {
      fn(record);
      out = 0;
    } else {
      out = fn(record);
    }
    store_->put(key, canonical(json(record)));
  });
  if constexpr (!std::is_void_v<R>) return std::move(*out);
}

void ObjectResultsRepo::record_invocation(const ChainId& chain_id, std::int64_t seq) {
  modify(chain_id, [&](ChainRecord& r) {
    auto& seqs = r.observed_seqs;
    if (std::find(seqs.begin(), seqs.end(), seq) == seqs.end()) {
      seqs.push_back(seq);
      std::sort(seqs.begin(), seqs.end());
    }
    r.invocation_count = static_cast<std::int64_t>(seqs.size());
  });
}

void ObjectResultsRepo::put_partial(const ChainId& chain_id, std::int64_t seq, const json& payload) {
  const auto key = chain_key(chain_id);
  const auto base = "chains/" + chain_id.value;
  const json entry = PartialEntry{seq, payload};
  const auto text = canonical(entry);
  store_->locked(key, [&] {
    const auto seen = base + ".seen/" + sha256_hex(text);
    if (store_->get(seen)) return;
    if (!store_->get(key)) {
      ChainRecord fresh;
      fresh.chain_id = chain_id;
      store_->put(key, canonical(json(fresh)));
    }
    std::int64_t next = 0;
    if (auto count = store_->get(base + ".partials/count")) next = std::stoll(*count);
    char name[32];
    std::snprintf(name, sizeof name, "%012lld.json", static_cast<long long>(next));
    store_->put(base + ".partials/" + name, text);
    store_->put(base + ".partials/count", std::to_string(next + 1));
    store_->put(seen, "");
  });
}

FinalizeStatus ObjectResultsRepo::finalize(const ChainId& chain_id, std::int64_t seq, const json& payload,
                                           bool fencing, std::int64_t finished_at) {
  return modify(chain_id, [&](ChainRecord& r) {
    FinalEntry entry{payload, finished_at, seq};
    if (fencing && r.final_result) {
      r.rejected.push_back(std::move(entry));
      return FinalizeStatus::duplicate_rejected;
    }
    if (!r.final_result) r.final_result = entry;
    r.finals.push_back(std::move(entry));
    r.status = ChainStatus::completed;
    r.failure_reason.clear();
    return FinalizeStatus::accepted;
  });
}

void ObjectResultsRepo::mark_failed(const ChainId& chain_id, const std::string& reason) {
  modify(chain_id, [&](ChainRecord& r) {
    if (r.status == ChainStatus::completed) return;
    r.status = ChainStatus::failed;
    r.failure_reason = reason;
  });
}

std::optional<ChainRecord> ObjectResultsRepo::get(const ChainId& chain_id) {
  const auto key = chain_key(chain_id);
  auto bytes = store_->get(key);
  if (!bytes) return std::nullopt;
  auto record = decode_record(key, *bytes);
  const auto prefix = "chains/" + chain_id.value + ".partials/";
  for (const auto& k : store_->list(prefix)) {
    if (!k.ends_with(".json")) continue;
    auto text = store_->get(k);
    if (!text) continue;
    try {
      record.partials.push_back(json::parse(*text).get<PartialEntry>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::corrupt, "corrupt partial " + k + ": " + e.what());
    }
  }
  return record;
}

StubRemoteResultsRepo::StubRemoteResultsRepo(std::unique_ptr<ResultsRepo> inner, LatencyModel latency, Clock& clock)
    : inner_(std::move(inner)), latency_(latency), clock_(clock) {}

void StubRemoteResultsRepo::record_invocation(const ChainId& chain_id, std::int64_t seq) {
  inner_->record_invocation(chain_id, seq);
  clock_.sleep_for(latency_.put_cost_ms(0));
}

void StubRemoteResultsRepo::put_partial(const ChainId& chain_id, std::int64_t seq, const json& payload) {
  inner_->put_partial(chain_id, seq, payload);
  clock_.sleep_for(latency_.put_cost_ms(payload.dump().size()));
}

FinalizeStatus StubRemoteResultsRepo::finalize(const ChainId& chain_id, std::int64_t seq, const json& payload,
                                               bool fencing, std::int64_t finished_at) {
  auto status = inner_->finalize(chain_id, seq, payload, fencing, finished_at);
  clock_.sleep_for(latency_.put_cost_ms(payload.dump().size()));
  return status;
}

void StubRemoteResultsRepo::mark_failed(const ChainId& chain_id, const std::string& reason) {
  inner_->mark_failed(chain_id, reason);
  clock_.sleep_for(latency_.put_cost_ms(0));
}

std::optional<ChainRecord> StubRemoteResultsRepo::get(const ChainId& chain_id) {
  auto record = inner_->get(chain_id);
  clock_.sleep_for(latency_.fixed_ms + (record ? latency_.get_cost_ms(json(*record).dump().size()) : 0));
  return record;
}

std::unique_ptr<ResultsRepo> make_results_repo(const RepoConfig& config, Clock& clock) {
  auto repo = std::make_unique<ObjectResultsRepo>(make_object_store(config));
  if (config.backend != RepoBackend::stub_remote) return repo;
  return std::make_unique<StubRemoteResultsRepo>(std::move(repo), config.latency, clock);
}

}  // namespace faaschain
