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

#include "faaschain/checkpoint.hpp"

#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include "faaschain/digest.hpp"

namespace faaschain {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// file helpers

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  static std::atomic<std::uint64_t> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::storage, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::storage, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::storage, "cannot commit " + path.string());
  }
}

std::vector<ManifestFile> describe_files(const fs::path& dir, const std::vector<std::string>& relative) {
  std::vector<std::string> names = relative;
  std::sort(names.begin(), names.end());
  std::vector<ManifestFile> out;
  for (const auto& name : names) {
    const auto path = dir / name;
    out.push_back({name, static_cast<std::uint64_t>(fs::file_size(path)), sha256_file(path)});
  }
  return out;
}

BlobReader directory_reader(const fs::path& dir) {
  return [dir](const std::string& rel) -> std::optional<std::string> {
    if (rel.empty() || rel.find("..") != std::string::npos || rel.front() == '/') return std::nullopt;
    return read_file(dir / rel);
  };
}

namespace {

void require_verified(const CheckpointManifest& manifest, const fs::path& dir) {
  auto report = verify_manifest(manifest, directory_reader(dir));
  if (report.pass) return;
  for (const auto& f : report.files) {
    if (!f.ok) {
      throw Error(ErrorKind::precondition,
                  "refusing to restore unverified checkpoint: " + f.relative_path + ": " + f.reason);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// CooperativeWorkload

CooperativeWorkload::CooperativeWorkload(WorkloadSpec spec, std::unique_ptr<Workload> workload, PartialSink sink)
    : spec_(std::move(spec)), workload_(std::move(workload)), sink_(std::move(sink)) {
  if (workload_->done()) state_ = HandleState::completed;
}

CooperativeWorkload::~CooperativeWorkload() { terminate(); }

bool CooperativeWorkload::live() {
  std::lock_guard lock(mu_);
  return state_ == HandleState::running || state_ == HandleState::paused;
}

bool CooperativeWorkload::completed() {
  std::lock_guard lock(mu_);
  return state_ == HandleState::completed;
}

std::optional<json> CooperativeWorkload::result() {
  std::lock_guard lock(mu_);
  if (state_ != HandleState::completed) return std::nullopt;
  return workload_->result();
}

void CooperativeWorkload::terminate() {
  {
    std::lock_guard lock(mu_);
    if (state_ == HandleState::running || state_ == HandleState::paused) state_ = HandleState::terminated;
    pause_requested_ = false;
  }
  cv_.notify_all();
  if (worker_.joinable() && worker_.get_id() != std::this_thread::get_id()) {
    worker_.request_stop();
    worker_.join();
  }
}

HandleState CooperativeWorkload::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

bool CooperativeWorkload::paced() const { return workload_->paced(); }

std::int64_t CooperativeWorkload::work_units_done() const {
  std::lock_guard lock(mu_);
  return workload_->work_units_done();
}

std::optional<std::string> CooperativeWorkload::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

void CooperativeWorkload::step() {
  std::lock_guard lock(mu_);
  if (worker_.joinable()) throw Error(ErrorKind::precondition, "workload is driven by its own thread");
  if (state_ == HandleState::completed) throw Error(ErrorKind::already_completed, "workload already completed");
  if (state_ != HandleState::running) throw Error(ErrorKind::dead_handle, "workload handle is not live");
  try {
    workload_->step(sink_);
  } catch (const std::exception& e) {
    state_ = HandleState::failed;
    error_ = e.what();
    throw;
  }
  if (workload_->done()) state_ = HandleState::completed;
}

void CooperativeWorkload::start(Pacer pacer, std::function<void()> on_exit) {
  std::lock_guard lock(mu_);
  if (worker_.joinable()) throw Error(ErrorKind::precondition, "workload already started");
  if (state_ == HandleState::failed || state_ == HandleState::terminated) {
    throw Error(ErrorKind::dead_handle, "workload handle is not live");
  }
  worker_ = std::jthread([this, pacer = std::move(pacer), on_exit = std::move(on_exit)](std::stop_token stop) {
    worker_loop(stop, pacer, on_exit);
  });
}

bool CooperativeWorkload::started() const {
  std::lock_guard lock(mu_);
  return worker_.joinable();
}

void CooperativeWorkload::worker_loop(std::stop_token stop, Pacer pacer, std::function<void()> on_exit) {
  for (;;) {
    {
      std::unique_lock lock(mu_);
      if (state_ == HandleState::terminated || state_ == HandleState::failed) return;
      if (workload_->done()) {
        state_ = HandleState::completed;
        break;
      }
      if (pause_requested_) {
        state_ = HandleState::paused;
        cv_.notify_all();
        cv_.wait(lock, stop, [&] { return !pause_requested_ || state_ == HandleState::terminated; });
        if (state_ == HandleState::terminated) return;
        if (stop.stop_requested()) {
          state_ = HandleState::terminated;
          cv_.notify_all();
          return;
        }
        state_ = HandleState::running;
        continue;
      }
    }
    if (pacer && !pacer(stop)) {
      std::lock_guard lock(mu_);
      if (state_ == HandleState::running || state_ == HandleState::paused) state_ = HandleState::terminated;
      cv_.notify_all();
      return;
    }
    std::lock_guard lock(mu_);
    if (state_ == HandleState::terminated) return;
    try {
      workload_->step(sink_);
    } catch (const std::exception& e) {
      state_ = HandleState::failed;
      error_ = e.what();
      break;
    }
  }
  cv_.notify_all();
  if (on_exit) on_exit();
}

void CooperativeWorkload::pause() {
  std::unique_lock lock(mu_);
  if (state_ == HandleState::completed) throw Error(ErrorKind::already_completed, "workload already completed");
  if (state_ == HandleState::failed || state_ == HandleState::terminated) {
    throw Error(ErrorKind::dead_handle, "workload handle is not live");
  }
  if (!worker_.joinable() || state_ == HandleState::paused) return;
  pause_requested_ = true;
  cv_.wait(lock, [&] { return state_ != HandleState::running; });
  if (state_ == HandleState::paused) return;
  pause_requested_ = false;
  if (state_ == HandleState::completed) throw Error(ErrorKind::already_completed, "workload completed before pausing");
  throw Error(ErrorKind::dead_handle, "workload stopped before pausing");
}

void CooperativeWorkload::resume() {
  {
    std::lock_guard lock(mu_);
    pause_requested_ = false;
  }
  cv_.notify_all();
}

CooperativeState CooperativeWorkload::snapshot() const {
  std::lock_guard lock(mu_);
  if (worker_.joinable() && state_ == HandleState::running) {
    throw Error(ErrorKind::precondition, "snapshot requires the workload to be paused");
  }
  return workload_->snapshot();
}

// ---------------------------------------------------------------------------
// CooperativeCheckpointer

CooperativeCheckpointer::CooperativeCheckpointer(const WorkloadRegistry& registry, Clock& clock,
                                                 WorkloadOptions options)
    : registry_(registry), clock_(clock), options_(options) {}

std::unique_ptr<ManagedWorkload> CooperativeCheckpointer::launch(const WorkloadSpec& spec,
                                                                 const std::optional<CooperativeState>& initial,
                                                                 const LaunchOptions& options) {
  auto workload = registry_.create(spec, initial, options_);
  return std::make_unique<CooperativeWorkload>(spec, std::move(workload), options.partial_sink);
}

CheckpointManifest CooperativeCheckpointer::checkpoint(ManagedWorkload& workload, const fs::path& out_dir,
                                                       const ChainId& chain_id, std::int64_t seq) {
  auto* handle = dynamic_cast<CooperativeWorkload*>(&workload);
  if (!handle) throw Error(ErrorKind::invalid_argument, "not a cooperative workload");
  handle->pause();
  const auto state = handle->snapshot();

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / kCooperativeStateFile, canonical(json(state)));

  CheckpointManifest manifest;
  manifest.chain_id = chain_id;
  manifest.seq = seq;
  manifest.created_at = clock_.now_ms();
  manifest.files = describe_files(out_dir, {kCooperativeStateFile});
  manifest.restart.mode = ExecutionMode::cooperative;
  manifest.restart.state_key = kCooperativeStateFile;
  return manifest;
}

std::unique_ptr<ManagedWorkload> CooperativeCheckpointer::restore(const CheckpointManifest& manifest,
                                                                  const fs::path& work_dir, const WorkloadSpec& spec,
                                                                  const LaunchOptions& options) {
  if (manifest.restart.mode != ExecutionMode::cooperative) {
    throw Error(ErrorKind::incompatible_state, "manifest was not written by a cooperative checkpointer");
  }
  require_verified(manifest, work_dir);
  auto bytes = read_file(work_dir / manifest.restart.state_key);
  if (!bytes) throw Error(ErrorKind::precondition, "state file missing: " + manifest.restart.state_key);
  CooperativeState state;
  try {
    state = json::parse(*bytes).get<CooperativeState>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::incompatible_state, std::string("unreadable state: ") + e.what());
  }
  return launch(spec, state, options);
}

// ---------------------------------------------------------------------------
// ExternalWorkload

ExternalWorkload::ExternalWorkload(WorkloadSpec spec, Subprocess process, fs::path work_dir, fs::path image_dir)
    : spec_(std::move(spec)),
      process_(std::move(process)),
      work_dir_(std::move(work_dir)),
      image_dir_(std::move(image_dir)) {}

bool ExternalWorkload::live() { return !terminated_ && !process_.poll(); }

bool ExternalWorkload::completed() {
  auto status = process_.poll();
  return !terminated_ && status && *status == 0;
}

std::optional<json> ExternalWorkload::result() {
  if (!completed()) return std::nullopt;
  auto text = read_file(work_dir_ / "stdout.log");
  if (!text) return std::nullopt;
  std::istringstream in(*text);
  std::string line;
  std::optional<json> found;
  while (std::getline(in, line)) {
    auto parsed = json::parse(line, nullptr, false);
    if (parsed.is_object() && parsed.contains("result")) found = parsed.at("result");
  }
  return found;
}

void ExternalWorkload::terminate() {
  if (!process_.poll()) {
    process_.kill(SIGKILL);
    process_.wait();
    terminated_ = true;
  }
}

std::string ExternalWorkload::output_tail() {
  return tail_file(work_dir_ / "stdout.log", 20) + tail_file(work_dir_ / "stderr.log", 20);
}

// ---------------------------------------------------------------------------
// ExternalCheckpointer

ExternalCheckpointer::ExternalCheckpointer(ExternalToolConfig config, Clock& clock)
    : config_(std::move(config)), clock_(clock) {}

bool ExternalCheckpointer::tool_available() const { return find_executable(config_.probe).has_value(); }

void ExternalCheckpointer::require_tool() const {
  if (clock_.mode() != ClockMode::real) {
    throw Error(ErrorKind::invalid_argument, "external-process workloads need the real clock");
  }
  if (!tool_available()) throw Error(ErrorKind::tool_unavailable, "tool unavailable: " + config_.probe);
}

std::string ExternalCheckpointer::expand(const std::string& tmpl,
                                         const std::map<std::string, std::string>& vars) const {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i);
      if (close != std::string::npos) {
        auto key = tmpl.substr(i + 1, close - i - 1);
        if (auto it = vars.find(key); it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

std::unique_ptr<ManagedWorkload> ExternalCheckpointer::spawn(const WorkloadSpec& spec, const std::string& cmd_template,
                                                             const fs::path& work_dir,
                                                             const std::map<std::string, std::string>& vars,
                                                             const LaunchOptions& options) {
  if (work_dir.empty()) throw Error(ErrorKind::invalid_argument, "external workloads need a work directory");
  const auto exe = find_executable(config_.workload_exe);
  if (!exe) throw Error(ErrorKind::unknown_workload, "workload executable not found: " + config_.workload_exe);

  const auto image_dir = work_dir / "image";
  fs::create_directories(image_dir);

  std::string command = shell_quote(fs::absolute(*exe).string()) + " " + shell_quote(spec.bin);
  for (const auto& a : spec.bin_args) command += " " + shell_quote(a);

  auto all_vars = vars;
  all_vars["command"] = command;
  all_vars["work_dir"] = shell_quote(work_dir.string());
  all_vars["image_dir"] = shell_quote(image_dir.string());

  std::map<std::string, std::string> env = config_.env;
  for (const auto& [k, v] : spec.env) env[k] = v;
  for (const auto& [k, v] : options.env) env[k] = v;

  auto process = Subprocess::spawn(
      {{"/bin/sh", "-c", expand(cmd_template, all_vars)}, env, work_dir, work_dir / "stdout.log",
       work_dir / "stderr.log"});
  return std::make_unique<ExternalWorkload>(spec, std::move(process), work_dir, image_dir);
}

std::unique_ptr<ManagedWorkload> ExternalCheckpointer::launch(const WorkloadSpec& spec,
                                                              const std::optional<CooperativeState>& initial,
                                                              const LaunchOptions& options) {
  require_tool();
  if (initial) throw Error(ErrorKind::invalid_argument, "external workloads resume from images, not state");
  return spawn(spec, config_.launch_cmd, options.work_dir, {}, options);
}

CheckpointManifest ExternalCheckpointer::checkpoint(ManagedWorkload& workload, const fs::path& out_dir,
                                                    const ChainId& chain_id, std::int64_t seq) {
  auto* handle = dynamic_cast<ExternalWorkload*>(&workload);
  if (!handle) throw Error(ErrorKind::invalid_argument, "not an external workload");
  if (auto status = handle->exit_status()) {
    if (*status == 0) throw Error(ErrorKind::already_completed, "process exited before the checkpoint");
    throw Error(ErrorKind::dead_handle, "process is not running (status " + std::to_string(*status) + ")");
  }
  if (!handle->live()) throw Error(ErrorKind::dead_handle, "process was terminated");

  std::map<std::string, std::string> vars{{"work_dir", shell_quote(handle->work_dir().string())},
                                          {"image_dir", shell_quote(handle->image_dir().string())},
                                          {"pid", std::to_string(handle->pid())}};
  auto env = config_.env;
  for (const auto& [k, v] : handle->spec().env) env[k] = v;
  auto res = run_shell(expand(config_.checkpoint_cmd, vars), env, handle->work_dir(),
                       std::chrono::milliseconds(config_.command_timeout_ms));
  if (res.exit_code != 0 || res.timed_out) {
    if (auto status = handle->exit_status(); status && *status == 0) {
      throw Error(ErrorKind::already_completed, "process exited while the checkpoint was taken");
    }
    throw Error(ErrorKind::tool_failure, "checkpoint command failed (exit " + std::to_string(res.exit_code) +
                                             (res.timed_out ? ", timed out" : "") + "): " + res.output);
  }

  fs::create_directories(out_dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(handle->image_dir())) {
    if (!fs::is_regular_file(entry.path())) continue;
    const auto name = entry.path().filename().string();
    fs::copy_file(entry.path(), out_dir / name, fs::copy_options::overwrite_existing);
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  if (!config_.restart_script.empty() &&
      std::find(names.begin(), names.end(), config_.restart_script) == names.end()) {
    throw Error(ErrorKind::tool_failure, "tool wrote no restart script '" + config_.restart_script + "'");
  }

  CheckpointManifest manifest;
  manifest.chain_id = chain_id;
  manifest.seq = seq;
  manifest.created_at = clock_.now_ms();
  manifest.files = describe_files(out_dir, names);
  manifest.restart.mode = ExecutionMode::external_process;
  manifest.restart.restart_script = config_.restart_script;
  manifest.restart.image_files = names;
  return manifest;
}

std::unique_ptr<ManagedWorkload> ExternalCheckpointer::restore(const CheckpointManifest& manifest,
                                                               const fs::path& work_dir, const WorkloadSpec& spec,
                                                               const LaunchOptions& options) {
  require_tool();
  if (manifest.restart.mode != ExecutionMode::external_process) {
    throw Error(ErrorKind::incompatible_state, "manifest was not written by an external checkpointer");
  }
  require_verified(manifest, work_dir);
  for (const auto& f : manifest.files) {
    if (f.relative_path.ends_with(".sh")) {
      fs::permissions(work_dir / f.relative_path, fs::perms::owner_exec, fs::perm_options::add);
    }
  }
  auto handle = spawn(spec, config_.restart_cmd, work_dir, {{"restore_dir", shell_quote(work_dir.string())}},
                      LaunchOptions{options.partial_sink, work_dir, options.env});
  return handle;
}

}  // namespace faaschain
