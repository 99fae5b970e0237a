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

#include <cstdint>
#include <memory>
#include <string>

#include "faaschain/core.hpp"
#include "faaschain/workloads.hpp"

namespace faaschain {

// Loopback HTTP endpoint that standalone workload processes post their
// partial results to (LF_PARTIALS_URL). Each POST body is one JSON payload
// and is handed to the sink.
class PartialsReceiver {
 public:
  explicit PartialsReceiver(PartialSink sink);
  ~PartialsReceiver();

  PartialsReceiver(const PartialsReceiver&) = delete;
  PartialsReceiver& operator=(const PartialsReceiver&) = delete;

  // http://127.0.0.1:<port>/partials
  std::string url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// POSTs a JSON body; returns the HTTP status, or -1 when no response came
// back.
int http_post_json(const std::string& url, const json& body, std::int64_t timeout_ms = 5000);

}  // namespace faaschain
