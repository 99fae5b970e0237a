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

// Standalone workload process for external-process mode.
//
//   faaschain-workload <bin> [bin_args...]
//
// LF_STATE_FILE   resume from this file when it exists; on SIGUSR1 the state
//                 is written there (atomically) at the next step boundary
// LF_PARTIALS_URL partial results are POSTed here; printed when unset
// LF_UNIT_MS      pacing of paced workloads (default 1000)
//
// Prints {"result": ...} as its last stdout line on completion.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "faaschain/checkpoint.hpp"
#include "faaschain/partials_receiver.hpp"
#include "faaschain/workloads.hpp"

namespace {

volatile std::sig_atomic_t g_dump_requested = 0;

void on_usr1(int) { g_dump_requested = 1; }

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace faaschain;
  if (argc < 2) {
    std::cerr << "usage: faaschain-workload <bin> [bin_args...]\n";
    return 2;
  }
  WorkloadSpec spec;
  spec.bin = argv[1];
  for (int i = 2; i < argc; ++i) spec.bin_args.emplace_back(argv[i]);

  const auto state_file = env_or("LF_STATE_FILE", "");
  const auto partials_url = env_or("LF_PARTIALS_URL", "");
  std::int64_t unit_ms = 1000;
  try {
    unit_ms = std::stoll(env_or("LF_UNIT_MS", "1000"));
  } catch (const std::exception&) {
    std::cerr << "invalid LF_UNIT_MS\n";
    return 2;
  }

  struct sigaction sa {};
  sa.sa_handler = on_usr1;
  sigemptyset(&sa.sa_mask);
  sa.sa_flags = SA_RESTART;
  sigaction(SIGUSR1, &sa, nullptr);

  try {
    std::optional<CooperativeState> initial;
    if (!state_file.empty()) {
      if (auto bytes = read_file(state_file)) initial = json::parse(*bytes).get<CooperativeState>();
    }
    auto registry = WorkloadRegistry::with_builtins();
    auto workload = registry.create(spec, initial);

    PartialSink sink = [&](const json& payload) {
      if (partials_url.empty()) {
        std::cout << json{{"partial", payload}}.dump() << std::endl;
        return;
      }
      // A lost partial is reported but does not stop the computation.
      const int status = http_post_json(partials_url, payload);
      if (status != 200) std::cerr << "partial post failed with status " << status << std::endl;
    };

    auto dump_if_requested = [&] {
      if (!g_dump_requested || state_file.empty()) return;
      g_dump_requested = 0;
      write_file_atomic(state_file, canonical(json(workload->snapshot())));
    };

    while (!workload->done()) {
      dump_if_requested();
      if (workload->paced()) std::this_thread::sleep_for(std::chrono::milliseconds(unit_ms));
      workload->step(sink);
    }
    dump_if_requested();
    std::cout << json{{"result", workload->result()}}.dump() << std::endl;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "faaschain-workload: " << e.what() << std::endl;
    return 1;
  }
}
