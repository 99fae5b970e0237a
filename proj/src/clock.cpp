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

#include "faaschain/clock.hpp"

#include <condition_variable>
#include <cstdio>
#include <thread>

#include "faaschain/error.hpp"

namespace faaschain {

std::string_view to_string(ClockMode mode) { return mode == ClockMode::real ? "real" : "simulated"; }

ClockMode parse_clock_mode(std::string_view text) {
  if (text == "real") return ClockMode::real;
  if (text == "simulated" || text == "sim") return ClockMode::simulated;
  throw Error(ErrorKind::invalid_argument, "unknown clock mode '" + std::string(text) + "'");
}

RealClock::RealClock()
    : origin_(std::chrono::steady_clock::now()),
      origin_epoch_ms_(std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count()) {}

std::int64_t RealClock::now_ms() const {
  auto elapsed = std::chrono::steady_clock::now() - origin_;
  return origin_epoch_ms_ + std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
}

bool RealClock::sleep_for(std::int64_t ms, std::stop_token stop) {
  if (ms <= 0) return !stop.stop_requested();
  if (!stop.stop_possible()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    return true;
  }
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  bool stopped = cv.wait_for(lock, stop, std::chrono::milliseconds(ms), [] { return false; });
  return !stopped && !stop.stop_requested();
}

bool SimulatedClock::sleep_for(std::int64_t ms, std::stop_token /*stop*/) {
  advance(ms);
  return true;
}

void SimulatedClock::advance(std::int64_t ms) {
  if (ms < 0) throw Error(ErrorKind::invalid_argument, "clock cannot move backwards");
  now_.fetch_add(ms);
}

void SimulatedClock::advance_to(std::int64_t t) {
  auto cur = now_.load();
  while (cur < t && !now_.compare_exchange_weak(cur, t)) {
  }
}

std::unique_ptr<Clock> make_clock(ClockMode mode) {
  if (mode == ClockMode::real) return std::make_unique<RealClock>();
  return std::make_unique<SimulatedClock>();
}

std::string SequentialIds::next(std::string_view prefix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(++counter_));
  return std::string(prefix) + "-" + buf;
}

RandomIds::RandomIds() : rng_(std::random_device{}()) {}

std::string RandomIds::next(std::string_view prefix) {
  std::uint64_t v;
  {
    std::lock_guard lock(mu_);
    v = rng_();
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(prefix) + "-" + buf;
}

std::unique_ptr<IdSource> make_id_source(ClockMode mode) {
  if (mode == ClockMode::simulated) return std::make_unique<SequentialIds>();
  return std::make_unique<RandomIds>();
}

}  // namespace faaschain
