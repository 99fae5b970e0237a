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

// Checkpoint-and-restore with two interchangeable backends:
//
//  * CooperativeCheckpointer: the workload serializes its own state at a step
//    boundary. Deterministic, so chains can be verified exactly.
//  * ExternalCheckpointer: drives a memory-image tool (DMTCP style) through
//    command templates. Image files are opaque and never parsed.

#pragma once

#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>

#include "faaschain/clock.hpp"
#include "faaschain/core.hpp"
#include "faaschain/subprocess.hpp"
#include "faaschain/workloads.hpp"

namespace faaschain {

class ManagedWorkload {
 public:
  virtual ~ManagedWorkload() = default;

  virtual ExecutionMode mode() const = 0;
  virtual const WorkloadSpec& spec() const = 0;
  // Live until completed, failed, or terminated.
  virtual bool live() = 0;
  virtual bool completed() = 0;
  // Present once completed.
  virtual std::optional<json> result() = 0;
  virtual void terminate() = 0;
  // Captured stdout/stderr, when the backend has any.
  virtual std::string output_tail() { return ""; }
};

enum class HandleState { running, paused, completed, failed, terminated };

// A cooperative workload behind a handle. It can be driven inline, one unit
// at a time with step(), or on its own thread with start(). In threaded mode
// pause() is the checkpoint handshake: it returns once the worker is parked
// at a step boundary.
class CooperativeWorkload final : public ManagedWorkload {
 public:
  // Runs before each work unit on the worker thread; returning false stops
  // the worker (used for pacing and cancellation).
  using Pacer = std::function<bool(std::stop_token)>;

  CooperativeWorkload(WorkloadSpec spec, std::unique_ptr<Workload> workload, PartialSink sink);
  ~CooperativeWorkload() override;

  ExecutionMode mode() const override { return ExecutionMode::cooperative; }
  const WorkloadSpec& spec() const override { return spec_; }
  bool live() override;
  bool completed() override;
  std::optional<json> result() override;
  void terminate() override;

  HandleState state() const;
  bool paced() const;
  std::int64_t work_units_done() const;
  std::optional<std::string> error() const;

  // Inline driving. Throws dead_handle once terminated or failed.
  void step();

  // Threaded driving. `on_exit` runs on the worker after it completes or
  // fails (not after terminate()).
  void start(Pacer pacer, std::function<void()> on_exit);
  bool started() const;

  // Throws already_completed when the workload finished before the pause was
  // acknowledged and dead_handle when it failed or was terminated.
  void pause();
  void resume();

  // Precondition: at a step boundary (inline, paused, or completed).
  CooperativeState snapshot() const;

 private:
  void worker_loop(std::stop_token stop, Pacer pacer, std::function<void()> on_exit);

  WorkloadSpec spec_;
  std::unique_ptr<Workload> workload_;
  PartialSink sink_;

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  HandleState state_ = HandleState::running;
  bool pause_requested_ = false;
  std::optional<std::string> error_;
  std::jthread worker_;
};

struct LaunchOptions {
  PartialSink partial_sink;
  // Scratch directory for external processes (images, logs).
  std::filesystem::path work_dir;
  std::map<std::string, std::string> env;
};

class Checkpointer {
 public:
  virtual ~Checkpointer() = default;

  virtual ExecutionMode mode() const = 0;

  // `initial` resumes a cooperative workload from a known state.
  virtual std::unique_ptr<ManagedWorkload> launch(const WorkloadSpec& spec,
                                                  const std::optional<CooperativeState>& initial,
                                                  const LaunchOptions& options) = 0;

  // Writes the image into `out_dir` and describes it. The workload is left
  // paused (cooperative) or running (external); the caller decides whether to
  // resume or terminate it.
  virtual CheckpointManifest checkpoint(ManagedWorkload& workload, const std::filesystem::path& out_dir,
                                        const ChainId& chain_id, std::int64_t seq) = 0;

  // Restores from manifest files already placed in `work_dir`. Every file is
  // re-verified first; a failed verification is refused as a precondition
  // violation.
  virtual std::unique_ptr<ManagedWorkload> restore(const CheckpointManifest& manifest,
                                                   const std::filesystem::path& work_dir,
                                                   const WorkloadSpec& spec, const LaunchOptions& options) = 0;
};

// Name of the serialized state inside a cooperative image.
inline constexpr const char* kCooperativeStateFile = "state.json";

class CooperativeCheckpointer final : public Checkpointer {
 public:
  CooperativeCheckpointer(const WorkloadRegistry& registry, Clock& clock, WorkloadOptions options = {});

  ExecutionMode mode() const override { return ExecutionMode::cooperative; }

  std::unique_ptr<ManagedWorkload> launch(const WorkloadSpec& spec, const std::optional<CooperativeState>& initial,
                                          const LaunchOptions& options) override;
  CheckpointManifest checkpoint(ManagedWorkload& workload, const std::filesystem::path& out_dir,
                                const ChainId& chain_id, std::int64_t seq) override;
  std::unique_ptr<ManagedWorkload> restore(const CheckpointManifest& manifest, const std::filesystem::path& work_dir,
                                           const WorkloadSpec& spec, const LaunchOptions& options) override;

 private:
  const WorkloadRegistry& registry_;
  Clock& clock_;
  WorkloadOptions options_;
};

// Command templates for a memory-image checkpoint tool. Placeholders, all
// shell-quoted on substitution:
//   {command}     workload executable followed by bin and bin_args
//   {work_dir}    per-invocation scratch directory
//   {image_dir}   where the tool writes images for this process
//   {restore_dir} directory holding a downloaded image (restart only)
//   {pid}         process id of the launched command
// The defaults target DMTCP; a coordinator host can be exported through
// `env` (DMTCP_COORD_HOST).
struct ExternalToolConfig {
  std::string probe = "dmtcp_launch";
  std::string launch_cmd =
      "exec dmtcp_launch --new-coordinator --coord-port 0 --port-file {work_dir}/coord.port "
      "--ckptdir {image_dir} {command}";
  std::string checkpoint_cmd = "dmtcp_command --coord-port \"$(cat {work_dir}/coord.port)\" --bcheckpoint";
  std::string restart_cmd =
      "exec dmtcp_restart --new-coordinator --coord-port 0 --port-file {work_dir}/coord.port "
      "--ckptdir {image_dir} {restore_dir}/ckpt_*.dmtcp";
  std::string restart_script = "dmtcp_restart_script.sh";
  // Standalone workload executable (bin name is its first argument).
  std::string workload_exe = "faaschain-workload";
  std::map<std::string, std::string> env;
  std::int64_t command_timeout_ms = 120000;
};

// Handle over a process launched through the tool.
class ExternalWorkload final : public ManagedWorkload {
 public:
  ExternalWorkload(WorkloadSpec spec, Subprocess process, std::filesystem::path work_dir,
                   std::filesystem::path image_dir);

  ExecutionMode mode() const override { return ExecutionMode::external_process; }
  const WorkloadSpec& spec() const override { return spec_; }
  bool live() override;
  bool completed() override;
  // Last stdout line of the form {"result": ...}.
  std::optional<json> result() override;
  void terminate() override;
  std::string output_tail() override;

  pid_t pid() const { return process_.pid(); }
  std::optional<int> exit_status() { return process_.poll(); }
  const std::filesystem::path& work_dir() const { return work_dir_; }
  const std::filesystem::path& image_dir() const { return image_dir_; }

 private:
  WorkloadSpec spec_;
  Subprocess process_;
  std::filesystem::path work_dir_;
  std::filesystem::path image_dir_;
  bool terminated_ = false;
};

class ExternalCheckpointer final : public Checkpointer {
 public:
  ExternalCheckpointer(ExternalToolConfig config, Clock& clock);

  ExecutionMode mode() const override { return ExecutionMode::external_process; }

  // True when the probe command resolves on PATH.
  bool tool_available() const;

  std::unique_ptr<ManagedWorkload> launch(const WorkloadSpec& spec, const std::optional<CooperativeState>& initial,
                                          const LaunchOptions& options) override;
  CheckpointManifest checkpoint(ManagedWorkload& workload, const std::filesystem::path& out_dir,
                                const ChainId& chain_id, std::int64_t seq) override;
  std::unique_ptr<ManagedWorkload> restore(const CheckpointManifest& manifest, const std::filesystem::path& work_dir,
                                           const WorkloadSpec& spec, const LaunchOptions& options) override;

  const ExternalToolConfig& config() const { return config_; }

 private:
  std::string expand(const std::string& tmpl, const std::map<std::string, std::string>& vars) const;
  std::unique_ptr<ManagedWorkload> spawn(const WorkloadSpec& spec, const std::string& cmd_template,
                                         const std::filesystem::path& work_dir,
                                         const std::map<std::string, std::string>& vars,
                                         const LaunchOptions& options);
  void require_tool() const;

  ExternalToolConfig config_;
  Clock& clock_;
};

// Reads `relative_path` below `dir`; rejects paths escaping the directory.
BlobReader directory_reader(const std::filesystem::path& dir);
// Reads a file into a string; std::nullopt when it cannot be opened.
std::optional<std::string> read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
// Manifest entries (sorted by path) for files under `dir`, given relative to it.
std::vector<ManifestFile> describe_files(const std::filesystem::path& dir, const std::vector<std::string>& relative);

}  // namespace faaschain
