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

#include "faaschain/core.hpp"

#include <algorithm>
#include <array>

#include "faaschain/digest.hpp"

namespace faaschain {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::unknown_workload: return "unknown-workload";
    case ErrorKind::not_found: return "not-found";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::dead_handle: return "dead-handle";
    case ErrorKind::already_completed: return "already-completed";
    case ErrorKind::incompatible_state: return "incompatible-state";
    case ErrorKind::tool_unavailable: return "tool-unavailable";
    case ErrorKind::tool_failure: return "tool-failure";
    case ErrorKind::storage: return "storage";
    case ErrorKind::corrupt: return "corrupt";
    case ErrorKind::throttled: return "throttled";
    case ErrorKind::busy: return "busy";
  }
  return "unknown";
}

bool is_valid_chain_id(std::string_view value) {
  if (value.empty() || value == "." || value == "..") return false;
  return std::all_of(value.begin(), value.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_' || c == '.' || c == '~';
  });
}

void InvocationContext::validate() const {
  if (!is_valid_chain_id(chain_id.value)) {
    throw Error(ErrorKind::invalid_argument, "invalid chain id '" + chain_id.value + "'");
  }
  if (seq < 1) throw Error(ErrorKind::invalid_argument, "seq must be >= 1");
  if (spec.bin.empty()) throw Error(ErrorKind::invalid_argument, "workload name is empty");
  if (timeout_ms <= 0 || timeout_ms > kMaxActionTimeoutMs) {
    throw Error(ErrorKind::invalid_argument,
                "timeout_ms must be in (0, " + std::to_string(kMaxActionTimeoutMs) + "]");
  }
  if (checkpoint_trigger_ms <= 0 || checkpoint_trigger_ms >= timeout_ms) {
    throw Error(ErrorKind::invalid_argument,
                "checkpoint trigger must satisfy 0 < trigger < timeout (trigger=" +
                    std::to_string(checkpoint_trigger_ms) +
                    ", timeout=" + std::to_string(timeout_ms) + ")");
  }
}

std::uint64_t CheckpointManifest::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& f : files) total += f.size_bytes;
  return total;
}

InvocationContext advance_context(const InvocationContext& ctx) {
  InvocationContext next = ctx;
  next.seq = ctx.seq + 1;
  next.activation_id.clear();
  return next;
}

VerificationReport verify_manifest(const CheckpointManifest& manifest, const BlobReader& reader) {
  VerificationReport report;
  for (const auto& file : manifest.files) {
    FileVerification check{file.relative_path, false, ""};
    std::optional<std::string> bytes;
    try {
      bytes = reader(file.relative_path);
    } catch (const std::exception&) {
      bytes.reset();
    }
    if (!bytes) {
      check.reason = "absent";
    } else if (bytes->size() != file.size_bytes) {
      check.reason = "size-mismatch";
    } else if (sha256_hex(*bytes) != file.sha256_hex) {
      check.reason = "digest-mismatch";
    } else {
      check.ok = true;
    }
    report.pass = report.pass && check.ok;
    report.files.push_back(std::move(check));
  }
  return report;
}

std::string canonical(const json& value) { return value.dump(); }

json encode_params(const WorkloadSpec& spec) { return json(spec); }

json encode_params(const InvocationContext& ctx) {
  json params = encode_params(ctx.spec);
  params[kChainIdParam] = ctx.chain_id.value;
  params[kSeqParam] = ctx.seq;
  return params;
}

WorkloadSpec decode_workload_spec(const json& params) {
  if (!params.is_object()) throw Error(ErrorKind::invalid_argument, "parameters must be an object");
  auto bin = params.find("bin");
  if (bin == params.end() || !bin->is_string() || bin->get<std::string>().empty()) {
    throw Error(ErrorKind::invalid_argument, "missing workload name 'bin'");
  }
  WorkloadSpec spec;
  spec.bin = bin->get<std::string>();
  if (auto args = params.find("bin_args"); args != params.end() && !args->is_null()) {
    if (!args->is_array()) throw Error(ErrorKind::invalid_argument, "'bin_args' must be a list");
    for (const auto& a : *args) {
      if (a.is_string()) {
        spec.bin_args.push_back(a.get<std::string>());
      } else if (a.is_number() || a.is_boolean()) {
        spec.bin_args.push_back(a.dump());
      } else {
        throw Error(ErrorKind::invalid_argument, "'bin_args' entries must be scalars");
      }
    }
  }
  if (auto mode = params.find("mode"); mode != params.end() && !mode->is_null()) {
    try {
      spec.mode = mode->get<ExecutionMode>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::invalid_argument, "unknown execution mode " + mode->dump());
    }
  }
  if (auto env = params.find("env"); env != params.end() && !env->is_null()) {
    if (!env->is_object()) throw Error(ErrorKind::invalid_argument, "'env' must be an object");
    for (const auto& [k, v] : env->items()) {
      if (!v.is_string()) throw Error(ErrorKind::invalid_argument, "'env' values must be strings");
      spec.env[k] = v.get<std::string>();
    }
  }
  return spec;
}

std::string_view to_string(ExecutionMode mode) {
  return mode == ExecutionMode::cooperative ? "cooperative" : "external-process";
}

std::string_view to_string(ChainStatus status) {
  switch (status) {
    case ChainStatus::running: return "running";
    case ChainStatus::completed: return "completed";
    case ChainStatus::failed: return "failed";
  }
  return "running";
}

std::string_view to_string(ActivationOutcome outcome) {
  switch (outcome) {
    case ActivationOutcome::success: return "success";
    case ActivationOutcome::timeout_killed: return "timeout_killed";
    case ActivationOutcome::error: return "error";
  }
  return "error";
}

namespace {

template <typename Enum, std::size_t N>
Enum enum_from(const json& j, const std::array<Enum, N>& values, const char* what) {
  const auto text = j.get<std::string>();
  for (auto v : values) {
    if (to_string(v) == text) return v;
  }
  throw json::other_error::create(501, std::string("unknown ") + what + " '" + text + "'", &j);
}

template <typename T>
void get_optional(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

}  // namespace

void to_json(json& j, const ChainId& v) { j = v.value; }
void from_json(const json& j, ChainId& v) { v.value = j.get<std::string>(); }

void to_json(json& j, const ExecutionMode& v) { j = std::string(to_string(v)); }
void from_json(const json& j, ExecutionMode& v) {
  v = enum_from(j, std::array{ExecutionMode::cooperative, ExecutionMode::external_process}, "mode");
}

void to_json(json& j, const WorkloadSpec& v) {
  j = json{{"bin", v.bin}, {"bin_args", v.bin_args}, {"mode", v.mode}, {"env", v.env}};
}
void from_json(const json& j, WorkloadSpec& v) {
  j.at("bin").get_to(v.bin);
  j.at("bin_args").get_to(v.bin_args);
  j.at("mode").get_to(v.mode);
  v.env.clear();
  get_optional(j, "env", v.env);
}

void to_json(json& j, const InvocationContext& v) {
  j = json{{"chain_id", v.chain_id},
           {"seq", v.seq},
           {"spec", v.spec},
           {"timeout_ms", v.timeout_ms},
           {"checkpoint_trigger_ms", v.checkpoint_trigger_ms},
           {"activation_id", v.activation_id}};
}
void from_json(const json& j, InvocationContext& v) {
  j.at("chain_id").get_to(v.chain_id);
  j.at("seq").get_to(v.seq);
  j.at("spec").get_to(v.spec);
  j.at("timeout_ms").get_to(v.timeout_ms);
  j.at("checkpoint_trigger_ms").get_to(v.checkpoint_trigger_ms);
  j.at("activation_id").get_to(v.activation_id);
}

void to_json(json& j, const ManifestFile& v) {
  j = json{{"relative_path", v.relative_path}, {"size_bytes", v.size_bytes}, {"sha256_hex", v.sha256_hex}};
}
void from_json(const json& j, ManifestFile& v) {
  j.at("relative_path").get_to(v.relative_path);
  j.at("size_bytes").get_to(v.size_bytes);
  j.at("sha256_hex").get_to(v.sha256_hex);
}

void to_json(json& j, const RestartDescriptor& v) {
  j = json{{"mode", v.mode},
           {"state_key", v.state_key},
           {"restart_script", v.restart_script},
           {"image_files", v.image_files}};
}
void from_json(const json& j, RestartDescriptor& v) {
  j.at("mode").get_to(v.mode);
  j.at("state_key").get_to(v.state_key);
  j.at("restart_script").get_to(v.restart_script);
  j.at("image_files").get_to(v.image_files);
}

void to_json(json& j, const CheckpointManifest& v) {
  j = json{{"chain_id", v.chain_id},
           {"seq", v.seq},
           {"created_at", v.created_at},
           {"files", v.files},
           {"restart", v.restart}};
}
void from_json(const json& j, CheckpointManifest& v) {
  j.at("chain_id").get_to(v.chain_id);
  j.at("seq").get_to(v.seq);
  j.at("created_at").get_to(v.created_at);
  j.at("files").get_to(v.files);
  j.at("restart").get_to(v.restart);
}

void to_json(json& j, const ChainStatus& v) { j = std::string(to_string(v)); }
void from_json(const json& j, ChainStatus& v) {
  v = enum_from(j, std::array{ChainStatus::running, ChainStatus::completed, ChainStatus::failed}, "status");
}

void to_json(json& j, const PartialEntry& v) { j = json{{"seq", v.seq}, {"payload", v.payload}}; }
void from_json(const json& j, PartialEntry& v) {
  j.at("seq").get_to(v.seq);
  v.payload = j.at("payload");
}

void to_json(json& j, const FinalEntry& v) {
  j = json{{"payload", v.payload}, {"finished_at", v.finished_at}, {"winner_seq", v.winner_seq}};
}
void from_json(const json& j, FinalEntry& v) {
  v.payload = j.at("payload");
  j.at("finished_at").get_to(v.finished_at);
  j.at("winner_seq").get_to(v.winner_seq);
}

void to_json(json& j, const ChainRecord& v) {
  j = json{{"chain_id", v.chain_id},
           {"status", v.status},
           {"partials", v.partials},
           {"final", v.final_result ? json(*v.final_result) : json(nullptr)},
           {"finals", v.finals},
           {"rejected", v.rejected},
           {"observed_seqs", v.observed_seqs},
           {"invocation_count", v.invocation_count},
           {"failure_reason", v.failure_reason}};
}
void from_json(const json& j, ChainRecord& v) {
  j.at("chain_id").get_to(v.chain_id);
  j.at("status").get_to(v.status);
  j.at("partials").get_to(v.partials);
  v.final_result.reset();
  if (auto it = j.find("final"); it != j.end() && !it->is_null()) v.final_result = it->get<FinalEntry>();
  v.finals.clear();
  v.rejected.clear();
  v.observed_seqs.clear();
  v.failure_reason.clear();
  get_optional(j, "finals", v.finals);
  get_optional(j, "rejected", v.rejected);
  get_optional(j, "observed_seqs", v.observed_seqs);
  j.at("invocation_count").get_to(v.invocation_count);
  get_optional(j, "failure_reason", v.failure_reason);
}

void to_json(json& j, const ActivationOutcome& v) { j = std::string(to_string(v)); }
void from_json(const json& j, ActivationOutcome& v) {
  v = enum_from(j,
                std::array{ActivationOutcome::success, ActivationOutcome::timeout_killed,
                           ActivationOutcome::error},
                "outcome");
}

void to_json(json& j, const ActivationRecord& v) {
  j = json{{"activation_id", v.activation_id},
           {"action_name", v.action_name},
           {"start", v.start},
           {"end", v.end},
           {"outcome", v.outcome},
           {"billed_ms", v.billed_ms},
           {"params_digest", v.params_digest},
           {"chain_id", v.chain_id ? json(*v.chain_id) : json(nullptr)},
           {"seq", v.seq},
           {"work_ms", v.work_ms},
           {"response", v.response}};
}
void from_json(const json& j, ActivationRecord& v) {
  j.at("activation_id").get_to(v.activation_id);
  j.at("action_name").get_to(v.action_name);
  j.at("start").get_to(v.start);
  j.at("end").get_to(v.end);
  j.at("outcome").get_to(v.outcome);
  j.at("billed_ms").get_to(v.billed_ms);
  j.at("params_digest").get_to(v.params_digest);
  v.chain_id.reset();
  if (auto it = j.find("chain_id"); it != j.end() && !it->is_null()) v.chain_id = it->get<ChainId>();
  v.seq = 0;
  v.work_ms = 0;
  get_optional(j, "seq", v.seq);
  get_optional(j, "work_ms", v.work_ms);
  v.response = j.value("response", json());
}

}  // namespace faaschain
