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

#include "faaschain/event_log.hpp"

#include <cstdlib>
#include <iostream>

namespace faaschain {

LogLevel parse_log_level(std::string_view text) {
  if (text == "debug") return LogLevel::debug;
  if (text == "info") return LogLevel::info;
  if (text == "warn" || text == "warning") return LogLevel::warn;
  if (text == "error") return LogLevel::error;
  if (text == "off" || text == "none") return LogLevel::off;
  throw Error(ErrorKind::invalid_argument, "unknown log level '" + std::string(text) + "'");
}

namespace {
std::string_view level_name(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    case LogLevel::off: return "off";
  }
  return "info";
}
}  // namespace

EventLog::EventLog(std::optional<std::filesystem::path> dir, LogLevel echo) : echo_(echo) {
  if (dir) {
    std::filesystem::create_directories(*dir);
    file_.emplace(*dir / "events.jsonl", std::ios::app);
    if (!*file_) throw Error(ErrorKind::storage, "cannot open log in " + dir->string());
  }
}

std::unique_ptr<EventLog> EventLog::from_env() {
  std::optional<std::filesystem::path> dir;
  if (const char* d = std::getenv("LF_LOG_DIR"); d && *d) dir = d;
  LogLevel level = LogLevel::warn;
  if (const char* l = std::getenv("LF_LOG_LEVEL"); l && *l) level = parse_log_level(l);
  return std::make_unique<EventLog>(dir, level);
}

void EventLog::emit(LogLevel level, std::string_view event, json fields) {
  json line = json::object();
  line["event"] = event;
  line["level"] = level_name(level);
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = std::move(v);
  }
  std::lock_guard lock(mu_);
  if (file_) *file_ << line.dump() << '\n' << std::flush;
  if (echo_ != LogLevel::off && level >= echo_) std::cerr << line.dump() << '\n';
  events_.push_back(std::move(line));
}

std::vector<json> EventLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<json> EventLog::events_named(std::string_view event) const {
  std::lock_guard lock(mu_);
  std::vector<json> out;
  for (const auto& e : events_) {
    if (e.value("event", "") == event) out.push_back(e);
  }
  return out;
}

}  // namespace faaschain
