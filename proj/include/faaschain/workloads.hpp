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

// Checkpointable benchmark workloads: trial-division factorization, seeded
// integer matrix multiplication and the counting test function.
//
// Every workload is a resumable stepper. One call to step() performs exactly
// one work unit and leaves the workload at a step boundary, where its whole
// live state can be captured with snapshot() and later handed back to the
// registry to continue. Resuming from a snapshot and running to completion
// produces the same result and the same partial-post sequence as an
// uninterrupted run.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faaschain/core.hpp"

namespace faaschain {

using PartialSink = std::function<void(const json& payload)>;

// Invoked after each work unit. Returning false stops the run at that
// boundary so the state can be checkpointed.
using StepHook = std::function<bool()>;

struct CooperativeState {
  std::string workload_name;
  std::int64_t version = 0;
  json payload;

  bool operator==(const CooperativeState&) const = default;
};

void to_json(json& j, const CooperativeState& v);
void from_json(const json& j, CooperativeState& v);

class Workload {
 public:
  virtual ~Workload() = default;

  virtual std::string_view name() const = 0;
  virtual bool done() const = 0;
  // One work unit. Precondition: !done().
  virtual void step(const PartialSink& sink) = 0;
  virtual CooperativeState snapshot() const = 0;
  // Precondition: done().
  virtual json result() const = 0;
  virtual std::int64_t work_units_done() const = 0;
  // A paced workload's unit of work is waiting (the counter sleeps between
  // increments), so in real time the runner sleeps one unit per step. Compute
  // workloads take however long their step takes.
  virtual bool paced() const { return false; }
};

template <typename State, typename Result>
struct Progress {
  State state;
  std::optional<Result> result;
};

// ---------------------------------------------------------------------------
// factors

struct FactorsState {
  std::uint64_t n = 1;
  std::uint64_t n_remaining = 1;
  std::uint64_t divisor = 2;
  std::vector<std::uint64_t> factors_found;
  std::int64_t work_units_done = 0;

  bool operator==(const FactorsState&) const = default;
};

void to_json(json& j, const FactorsState& v);
void from_json(const json& j, FactorsState& v);

FactorsState factors_initial(std::uint64_t n);

// Trial division by increasing divisor (2, then odd numbers). A work unit is
// a block of up to `block_size` divisor probes or factor extractions.
Progress<FactorsState, std::vector<std::uint64_t>> factors_run(std::uint64_t n,
                                                               std::optional<FactorsState> state,
                                                               const StepHook& hook,
                                                               std::uint64_t block_size = 1);

// ---------------------------------------------------------------------------
// matrix

// Square operands A and B, row-major.
struct MatrixOperands {
  std::int64_t size = 0;
  std::vector<std::int32_t> a;
  std::vector<std::int32_t> b;

  // Entries drawn from std::mt19937 seeded with `seed`: A first, then B.
  static MatrixOperands seeded(std::int64_t size, std::uint64_t seed);
  static MatrixOperands identity(std::int64_t size);
};

struct MatrixState {
  std::int64_t size = 0;
  std::uint64_t seed = 0;
  std::int64_t next_row = 0;
  std::vector<std::vector<std::int64_t>> partial_product_rows;
  std::uint64_t checksum_partial = 0;

  bool operator==(const MatrixState&) const = default;
};

void to_json(json& j, const MatrixState& v);
void from_json(const json& j, MatrixState& v);

struct MatrixResult {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  // Sum of all product entries modulo 2^64.
  std::uint64_t checksum = 0;

  bool operator==(const MatrixResult&) const = default;
};

void to_json(json& j, const MatrixResult& v);

// Product entries accumulate in wrapping 64-bit arithmetic. One output row is
// one work unit.
std::vector<std::int64_t> matrix_product_row(const MatrixOperands& ops, std::int64_t row);

Progress<MatrixState, MatrixResult> matrix_run(std::int64_t size, std::uint64_t seed,
                                               std::optional<MatrixState> state, const StepHook& hook);
Progress<MatrixState, MatrixResult> matrix_run(const MatrixOperands& ops, std::optional<MatrixState> state,
                                               const StepHook& hook);

// ---------------------------------------------------------------------------
// counter

inline constexpr std::int64_t kCounterDefaultLimit = 70;
inline constexpr std::int64_t kCounterPostEvery = 10;

struct CounterState {
  std::int64_t limit = kCounterDefaultLimit;
  std::int64_t count = 0;
  // Greatest multiple of 10 already posted; carried across restores so a
  // resumed run never re-posts a partial.
  std::int64_t last_posted = 0;

  bool operator==(const CounterState&) const = default;
};

void to_json(json& j, const CounterState& v);
void from_json(const json& j, CounterState& v);

// Posts {"count": k} to `sink` at every multiple of 10.
Progress<CounterState, std::int64_t> counter_run(std::int64_t limit, std::optional<CounterState> state,
                                                 const PartialSink& sink, const StepHook& hook);

// ---------------------------------------------------------------------------
// registry

struct WorkloadOptions {
  std::uint64_t factor_block_size = 1;
};

class WorkloadRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Workload>(
      const std::vector<std::string>& args, const std::optional<CooperativeState>& state,
      const WorkloadOptions& options)>;

  // factors, matrix and counter.
  static WorkloadRegistry with_builtins();

  void add(std::string name, Factory factory);
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

  // Throws Error(unknown_workload) for unregistered names, invalid_argument
  // for bad arguments and incompatible_state when `state` was written by a
  // different workload, version or argument set.
  std::unique_ptr<Workload> create(const WorkloadSpec& spec, const std::optional<CooperativeState>& state,
                                   const WorkloadOptions& options = {}) const;

 private:
  std::map<std::string, Factory, std::less<>> factories_;
};

}  // namespace faaschain
