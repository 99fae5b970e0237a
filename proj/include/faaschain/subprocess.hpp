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

#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace faaschain {

struct ProcessOptions {
  std::vector<std::string> argv;
  // Added to (or replacing entries of) the parent environment.
  std::map<std::string, std::string> env;
  std::filesystem::path cwd;
  std::filesystem::path stdout_path;
  std::filesystem::path stderr_path;
};

// A child process in its own process group. The destructor kills the group
// and reaps the child if it is still running.
class Subprocess {
 public:
  static Subprocess spawn(const ProcessOptions& options);

  Subprocess(Subprocess&& other) noexcept;
  Subprocess& operator=(Subprocess&& other) noexcept;
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess();

  pid_t pid() const { return pid_; }

  // Exit status if the child has exited: the exit code, or 128 + signal.
  std::optional<int> poll();
  std::optional<int> wait_for(std::chrono::milliseconds timeout);
  int wait();
  // Signals the whole process group.
  void kill(int signal);

 private:
  explicit Subprocess(pid_t pid) : pid_(pid) {}

  pid_t pid_ = -1;
  std::optional<int> status_;
};

struct ShellResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string output;  // stdout and stderr interleaved
};

// Runs `command` under /bin/sh -c and captures its output.
ShellResult run_shell(const std::string& command, const std::map<std::string, std::string>& env,
                      const std::filesystem::path& cwd, std::chrono::milliseconds timeout);

// PATH lookup; names containing '/' are checked as paths.
std::optional<std::filesystem::path> find_executable(const std::string& name);

std::string shell_quote(const std::string& word);

// Last `max_lines` lines of a text file, or "" when it does not exist.
std::string tail_file(const std::filesystem::path& path, std::size_t max_lines);

}  // namespace faaschain
