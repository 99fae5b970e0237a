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

#include <stdexcept>
#include <string>
#include <string_view>

namespace faaschain {

enum class ErrorKind {
  invalid_argument,
  unknown_workload,
  not_found,
  precondition,
  dead_handle,
  already_completed,
  incompatible_state,
  tool_unavailable,
  tool_failure,
  storage,
  corrupt,
  throttled,
  busy,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports is an Error carrying a machine-readable
// kind; callers that need to branch (the runner, the HTTP layers) switch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace faaschain
