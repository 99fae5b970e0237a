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

// Shared domain model. Every type here is an immutable-by-convention value
// with a canonical JSON encoding (snake_case keys, sorted, compact); those
// encodings are the wire and file format for the rest of the system.

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "faaschain/error.hpp"

namespace faaschain {

using json = nlohmann::json;

// Platform ceiling for an action timeout.
inline constexpr std::int64_t kMaxActionTimeoutMs = 300000;

// Reserved invocation parameters that link successive links of a chain.
inline constexpr const char* kChainIdParam = "__chain_id";
inline constexpr const char* kSeqParam = "__seq";

struct ChainId {
  std::string value;

  bool empty() const { return value.empty(); }
  auto operator<=>(const ChainId&) const = default;
};

// Only [A-Za-z0-9._~-] is accepted so the id can sit in a URL path segment
// and a file name unchanged.
bool is_valid_chain_id(std::string_view value);

enum class ExecutionMode { cooperative, external_process };

struct WorkloadSpec {
  std::string bin;
  std::vector<std::string> bin_args;
  ExecutionMode mode = ExecutionMode::cooperative;
  std::map<std::string, std::string> env;

  bool operator==(const WorkloadSpec&) const = default;
};

struct InvocationContext {
  ChainId chain_id;
  std::int64_t seq = 1;
  WorkloadSpec spec;
  std::int64_t timeout_ms = 0;
  std::int64_t checkpoint_trigger_ms = 0;
  std::string activation_id;

  // Throws Error(invalid_argument) when an invariant does not hold.
  void validate() const;

  bool operator==(const InvocationContext&) const = default;
};

struct ManifestFile {
  std::string relative_path;
  std::uint64_t size_bytes = 0;
  std::string sha256_hex;

  bool operator==(const ManifestFile&) const = default;
};

// Mode specific instructions for bringing a checkpoint back to life.
// Cooperative images name the serialized state file; external images name the
// tool's restart script and list its opaque image files.
struct RestartDescriptor {
  ExecutionMode mode = ExecutionMode::cooperative;
  std::string state_key;
  std::string restart_script;
  std::vector<std::string> image_files;

  bool operator==(const RestartDescriptor&) const = default;
};

struct CheckpointManifest {
  ChainId chain_id;
  std::int64_t seq = 0;
  std::int64_t created_at = 0;
  std::vector<ManifestFile> files;
  RestartDescriptor restart;

  std::uint64_t total_bytes() const;
  bool operator==(const CheckpointManifest&) const = default;
};

enum class ChainStatus { running, completed, failed };

struct PartialEntry {
  std::int64_t seq = 0;
  json payload;

  bool operator==(const PartialEntry&) const = default;
};

struct FinalEntry {
  json payload;
  std::int64_t finished_at = 0;
  std::int64_t winner_seq = 0;

  bool operator==(const FinalEntry&) const = default;
};

// Authoritative per-chain state held by the results repository.
//
// `final_result` is the first stored final. With fencing on it is the only
// one and later attempts land in `rejected`; with fencing off every attempt
// is appended to `finals`, which is how duplicate results become visible.
struct ChainRecord {
  ChainId chain_id;
  ChainStatus status = ChainStatus::running;
  std::vector<PartialEntry> partials;
  std::optional<FinalEntry> final_result;
  std::vector<FinalEntry> finals;
  std::vector<FinalEntry> rejected;
  std::vector<std::int64_t> observed_seqs;
  std::int64_t invocation_count = 0;
  std::string failure_reason;

  bool operator==(const ChainRecord&) const = default;
};

enum class ActivationOutcome { success, timeout_killed, error };

struct ActivationRecord {
  std::string activation_id;
  std::string action_name;
  std::int64_t start = 0;
  std::int64_t end = 0;
  ActivationOutcome outcome = ActivationOutcome::success;
  std::int64_t billed_ms = 0;
  std::string params_digest;
  // Filled in once the action reports which chain link it ran.
  std::optional<ChainId> chain_id;
  std::int64_t seq = 0;
  std::int64_t work_ms = 0;
  json response;

  bool operator==(const ActivationRecord&) const = default;
};

// Returns a copy of ctx for the next link of the chain.
InvocationContext advance_context(const InvocationContext& ctx);

struct FileVerification {
  std::string relative_path;
  bool ok = false;
  std::string reason;  // "", "absent", "size-mismatch", "digest-mismatch"
};

struct VerificationReport {
  bool pass = true;
  std::vector<FileVerification> files;
};

using BlobReader = std::function<std::optional<std::string>(const std::string& relative_path)>;

// Recomputes every listed digest through `reader`. Never throws for missing
// or damaged blobs; those are reported per file.
VerificationReport verify_manifest(const CheckpointManifest& manifest, const BlobReader& reader);

// Canonical text form: sorted keys, no whitespace.
std::string canonical(const json& value);

// Parameter encoding used on invoke requests: {bin, bin_args, mode, env} plus
// the reserved chain keys when a context is given.
json encode_params(const WorkloadSpec& spec);
json encode_params(const InvocationContext& ctx);
// Accepts numeric bin_args ("bin_args [1]") by converting them to strings.
WorkloadSpec decode_workload_spec(const json& params);

std::string_view to_string(ExecutionMode mode);
std::string_view to_string(ChainStatus status);
std::string_view to_string(ActivationOutcome outcome);

void to_json(json& j, const ChainId& v);
void from_json(const json& j, ChainId& v);
void to_json(json& j, const ExecutionMode& v);
void from_json(const json& j, ExecutionMode& v);
void to_json(json& j, const WorkloadSpec& v);
void from_json(const json& j, WorkloadSpec& v);
void to_json(json& j, const InvocationContext& v);
void from_json(const json& j, InvocationContext& v);
void to_json(json& j, const ManifestFile& v);
void from_json(const json& j, ManifestFile& v);
void to_json(json& j, const RestartDescriptor& v);
void from_json(const json& j, RestartDescriptor& v);
void to_json(json& j, const CheckpointManifest& v);
void from_json(const json& j, CheckpointManifest& v);
void to_json(json& j, const ChainStatus& v);
void from_json(const json& j, ChainStatus& v);
void to_json(json& j, const PartialEntry& v);
void from_json(const json& j, PartialEntry& v);
void to_json(json& j, const FinalEntry& v);
void from_json(const json& j, FinalEntry& v);
void to_json(json& j, const ChainRecord& v);
void from_json(const json& j, ChainRecord& v);
void to_json(json& j, const ActivationOutcome& v);
void from_json(const json& j, ActivationOutcome& v);
void to_json(json& j, const ActivationRecord& v);
void from_json(const json& j, ActivationRecord& v);

}  // namespace faaschain
