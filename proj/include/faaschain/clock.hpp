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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <stop_token>
#include <string>
#include <string_view>

namespace faaschain {

enum class ClockMode { real, simulated };

std::string_view to_string(ClockMode mode);
ClockMode parse_clock_mode(std::string_view text);

// Millisecond time source shared by the gateway, the runner and the stores.
// Monotone non-decreasing in both modes.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual ClockMode mode() const = 0;
  virtual std::int64_t now_ms() const = 0;

  // Lets `ms` pass. Returns false when `stop` was requested first; in
  // simulated mode time simply advances and the call always succeeds.
  virtual bool sleep_for(std::int64_t ms, std::stop_token stop = {}) = 0;
};

// Wall time anchored to the epoch at construction, advanced by steady_clock.
class RealClock final : public Clock {
 public:
  RealClock();

  ClockMode mode() const override { return ClockMode::real; }
  std::int64_t now_ms() const override;
  bool sleep_for(std::int64_t ms, std::stop_token stop = {}) override;

 private:
  std::chrono::steady_clock::time_point origin_;
  std::int64_t origin_epoch_ms_;
};

// Virtual time. Only explicit charges move it: work units declared by
// cooperative workloads and latency charged by stub stores.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  ClockMode mode() const override { return ClockMode::simulated; }
  std::int64_t now_ms() const override { return now_.load(); }
  bool sleep_for(std::int64_t ms, std::stop_token stop = {}) override;

  void advance(std::int64_t ms);
  // No-op when `t` is in the past.
  void advance_to(std::int64_t t);

 private:
  std::atomic<std::int64_t> now_;
};

std::unique_ptr<Clock> make_clock(ClockMode mode);

// Mints activation and chain identifiers.
class IdSource {
 public:
  virtual ~IdSource() = default;
  virtual std::string next(std::string_view prefix) = 0;
};

// prefix-000001, prefix-000002, ... Used in simulated runs so that repeated
// runs produce identical records.
class SequentialIds final : public IdSource {
 public:
  std::string next(std::string_view prefix) override;

 private:
  std::atomic<std::uint64_t> counter_{0};
};

class RandomIds final : public IdSource {
 public:
  RandomIds();
  std::string next(std::string_view prefix) override;

 private:
  std::mutex mu_;
  std::mt19937_64 rng_;
};

std::unique_ptr<IdSource> make_id_source(ClockMode mode);

}  // namespace faaschain
