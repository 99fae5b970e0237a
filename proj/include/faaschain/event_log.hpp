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

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "faaschain/core.hpp"

namespace faaschain {

enum class LogLevel { debug, info, warn, error, off };

LogLevel parse_log_level(std::string_view text);

// Structured JSON-lines log. One object per state transition, appended to
// <dir>/events.jsonl when a directory is configured; events at or above the
// echo level are also mirrored to stderr. A copy of every event is kept in
// memory so callers (and tests) can inspect a run after the fact.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(std::optional<std::filesystem::path> dir, LogLevel echo = LogLevel::warn);

  // Reads LF_LOG_DIR and LF_LOG_LEVEL.
  static std::unique_ptr<EventLog> from_env();

  void emit(LogLevel level, std::string_view event, json fields = json::object());
  void info(std::string_view event, json fields = json::object()) { emit(LogLevel::info, event, std::move(fields)); }
  void warn(std::string_view event, json fields = json::object()) { emit(LogLevel::warn, event, std::move(fields)); }

  std::vector<json> events() const;
  std::vector<json> events_named(std::string_view event) const;

 private:
  mutable std::mutex mu_;
  std::optional<std::ofstream> file_;
  LogLevel echo_ = LogLevel::off;
  std::vector<json> events_;
};

}  // namespace faaschain
