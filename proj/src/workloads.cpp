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

#include "faaschain/workloads.hpp"

#include <charconv>
#include <random>

namespace faaschain {

void to_json(json& j, const CooperativeState& v) {
  j = json{{"workload_name", v.workload_name}, {"version", v.version}, {"payload", v.payload}};
}
void from_json(const json& j, CooperativeState& v) {
  j.at("workload_name").get_to(v.workload_name);
  j.at("version").get_to(v.version);
  v.payload = j.at("payload");
}

namespace {

constexpr std::int64_t kStateVersion = 1;

std::int64_t parse_int(const std::string& text, const char* what) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::invalid_argument, std::string(what) + ": not an integer: '" + text + "'");
  }
  return value;
}

std::uint64_t parse_uint(const std::string& text, const char* what) {
  if (!text.empty() && text.front() == '-') {
    throw Error(ErrorKind::invalid_argument, std::string(what) + " must be positive, got " + text);
  }
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::invalid_argument, std::string(what) + ": not an unsigned integer: '" + text + "'");
  }
  return value;
}

template <typename State>
State decode_state(const CooperativeState& s, std::string_view expected_name) {
  if (s.workload_name != expected_name) {
    throw Error(ErrorKind::incompatible_state,
                "state belongs to '" + s.workload_name + "', not '" + std::string(expected_name) + "'");
  }
  if (s.version != kStateVersion) {
    throw Error(ErrorKind::incompatible_state, "unsupported state version " + std::to_string(s.version));
  }
  try {
    return s.payload.get<State>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::incompatible_state, std::string("malformed state payload: ") + e.what());
  }
}

template <typename State, typename Result, typename Stepper, typename Done, typename Finish>
Progress<State, Result> drive(State state, const StepHook& hook, Stepper&& step, Done&& done, Finish&& finish) {
  while (!done(state)) {
    step(state);
    if (hook && !hook()) break;
  }
  Progress<State, Result> out{std::move(state), std::nullopt};
  if (done(out.state)) out.result = finish(out.state);
  return out;
}

// --- factors ---------------------------------------------------------------

void factors_step(FactorsState& s, std::uint64_t block_size) {
  for (std::uint64_t i = 0; i < block_size && s.n_remaining != 1; ++i) {
    const auto d = static_cast<unsigned __int128>(s.divisor);
    if (d * d > s.n_remaining) {
      s.factors_found.push_back(s.n_remaining);
      s.n_remaining = 1;
      break;
    }
    if (s.n_remaining % s.divisor == 0) {
      s.n_remaining /= s.divisor;
      s.factors_found.push_back(s.divisor);
    } else {
      s.divisor = s.divisor == 2 ? 3 : s.divisor + 2;
    }
  }
  ++s.work_units_done;
}

class FactorsWorkload final : public Workload {
 public:
  FactorsWorkload(FactorsState state, std::uint64_t block_size)
      : state_(std::move(state)), block_size_(block_size) {}

  std::string_view name() const override { return "factors"; }
  bool done() const override { return state_.n_remaining == 1; }
  void step(const PartialSink&) override { factors_step(state_, block_size_); }
  CooperativeState snapshot() const override { return {"factors", kStateVersion, json(state_)}; }
  json result() const override { return json(state_.factors_found); }
  std::int64_t work_units_done() const override { return state_.work_units_done; }

 private:
  FactorsState state_;
  std::uint64_t block_size_;
};

// --- matrix ----------------------------------------------------------------

class MatrixWorkload final : public Workload {
 public:
  explicit MatrixWorkload(MatrixState state)
      : state_(std::move(state)), ops_(MatrixOperands::seeded(state_.size, state_.seed)) {}

  std::string_view name() const override { return "matrix"; }
  bool done() const override { return state_.next_row >= state_.size; }
  void step(const PartialSink&) override;
  CooperativeState snapshot() const override { return {"matrix", kStateVersion, json(state_)}; }
  json result() const override { return json(MatrixResult{state_.size, state_.size, state_.checksum_partial}); }
  std::int64_t work_units_done() const override { return state_.next_row; }

 private:
  MatrixState state_;
  MatrixOperands ops_;
};

void matrix_step(MatrixState& s, const MatrixOperands& ops) {
  auto row = matrix_product_row(ops, s.next_row);
  for (auto v : row) s.checksum_partial += static_cast<std::uint64_t>(v);
  s.partial_product_rows.push_back(std::move(row));
  ++s.next_row;
}

void MatrixWorkload::step(const PartialSink&) { matrix_step(state_, ops_); }

MatrixState matrix_initial(std::int64_t size, std::uint64_t seed) {
  if (size <= 0) throw Error(ErrorKind::invalid_argument, "matrix size must be >= 1");
  MatrixState s;
  s.size = size;
  s.seed = seed;
  return s;
}

// --- counter ---------------------------------------------------------------

void counter_step(CounterState& s, const PartialSink& sink) {
  ++s.count;
  if (s.count % kCounterPostEvery == 0 && s.count > s.last_posted) {
    if (sink) sink(json{{"count", s.count}});
    s.last_posted = s.count;
  }
}

CounterState counter_initial(std::int64_t limit) {
  if (limit < 0) throw Error(ErrorKind::invalid_argument, "counter limit must be >= 0");
  return CounterState{limit, 0, 0};
}

class CounterWorkload final : public Workload {
 public:
  explicit CounterWorkload(CounterState state) : state_(state) {}

  std::string_view name() const override { return "counter"; }
  bool done() const override { return state_.count >= state_.limit; }
  void step(const PartialSink& sink) override { counter_step(state_, sink); }
  CooperativeState snapshot() const override { return {"counter", kStateVersion, json(state_)}; }
  json result() const override { return json{{"count", state_.count}}; }
  std::int64_t work_units_done() const override { return state_.count; }
  bool paced() const override { return true; }

 private:
  CounterState state_;
};

}  // namespace

// ---------------------------------------------------------------------------

void to_json(json& j, const FactorsState& v) {
  j = json{{"n", v.n},
           {"n_remaining", v.n_remaining},
           {"divisor", v.divisor},
           {"factors_found", v.factors_found},
           {"work_units_done", v.work_units_done}};
}
void from_json(const json& j, FactorsState& v) {
  j.at("n").get_to(v.n);
  j.at("n_remaining").get_to(v.n_remaining);
  j.at("divisor").get_to(v.divisor);
  j.at("factors_found").get_to(v.factors_found);
  j.at("work_units_done").get_to(v.work_units_done);
}

FactorsState factors_initial(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, "factors: n must be >= 1");
  FactorsState s;
  s.n = n;
  s.n_remaining = n;
  return s;
}

Progress<FactorsState, std::vector<std::uint64_t>> factors_run(std::uint64_t n, std::optional<FactorsState> state,
                                                               const StepHook& hook, std::uint64_t block_size) {
  if (block_size == 0) throw Error(ErrorKind::invalid_argument, "factors: block size must be >= 1");
  FactorsState s = state ? std::move(*state) : factors_initial(n);
  if (s.n != n) throw Error(ErrorKind::incompatible_state, "factors: state was recorded for a different n");
  return drive<FactorsState, std::vector<std::uint64_t>>(
      std::move(s), hook, [&](FactorsState& st) { factors_step(st, block_size); },
      [](const FactorsState& st) { return st.n_remaining == 1; },
      [](const FactorsState& st) { return st.factors_found; });
}

MatrixOperands MatrixOperands::seeded(std::int64_t size, std::uint64_t seed) {
  if (size <= 0) throw Error(ErrorKind::invalid_argument, "matrix size must be >= 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937 rng(seq);
  MatrixOperands ops;
  ops.size = size;
  const auto n = static_cast<std::size_t>(size * size);
  ops.a.resize(n);
  ops.b.resize(n);
  for (auto& v : ops.a) v = static_cast<std::int32_t>(rng());
  for (auto& v : ops.b) v = static_cast<std::int32_t>(rng());
  return ops;
}

MatrixOperands MatrixOperands::identity(std::int64_t size) {
  if (size <= 0) throw Error(ErrorKind::invalid_argument, "matrix size must be >= 1");
  MatrixOperands ops;
  ops.size = size;
  const auto n = static_cast<std::size_t>(size * size);
  ops.a.assign(n, 0);
  for (std::int64_t i = 0; i < size; ++i) ops.a[static_cast<std::size_t>(i * size + i)] = 1;
  ops.b = ops.a;
  return ops;
}

std::vector<std::int64_t> matrix_product_row(const MatrixOperands& ops, std::int64_t row) {
  const auto n = static_cast<std::size_t>(ops.size);
  const auto r = static_cast<std::size_t>(row);
  std::vector<std::uint64_t> acc(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto lhs = static_cast<std::int64_t>(ops.a[r * n + k]);
    const auto* brow = &ops.b[k * n];
    for (std::size_t j = 0; j < n; ++j) {
      acc[j] += static_cast<std::uint64_t>(lhs * static_cast<std::int64_t>(brow[j]));
    }
  }
  return {acc.begin(), acc.end()};
}

void to_json(json& j, const MatrixState& v) {
  j = json{{"size", v.size},
           {"seed", v.seed},
           {"next_row", v.next_row},
           {"partial_product_rows", v.partial_product_rows},
           {"checksum_partial", v.checksum_partial}};
}
void from_json(const json& j, MatrixState& v) {
  j.at("size").get_to(v.size);
  j.at("seed").get_to(v.seed);
  j.at("next_row").get_to(v.next_row);
  j.at("partial_product_rows").get_to(v.partial_product_rows);
  j.at("checksum_partial").get_to(v.checksum_partial);
}

void to_json(json& j, const MatrixResult& v) {
  j = json{{"rows", v.rows}, {"cols", v.cols}, {"checksum", v.checksum}};
}

Progress<MatrixState, MatrixResult> matrix_run(const MatrixOperands& ops, std::optional<MatrixState> state,
                                               const StepHook& hook) {
  MatrixState s = state ? std::move(*state) : matrix_initial(ops.size, 0);
  if (s.size != ops.size) throw Error(ErrorKind::incompatible_state, "matrix: state size differs from operands");
  return drive<MatrixState, MatrixResult>(
      std::move(s), hook, [&](MatrixState& st) { matrix_step(st, ops); },
      [](const MatrixState& st) { return st.next_row >= st.size; },
      [](const MatrixState& st) { return MatrixResult{st.size, st.size, st.checksum_partial}; });
}

Progress<MatrixState, MatrixResult> matrix_run(std::int64_t size, std::uint64_t seed,
                                               std::optional<MatrixState> state, const StepHook& hook) {
  if (!state) state = matrix_initial(size, seed);
  if (state->seed != seed) throw Error(ErrorKind::incompatible_state, "matrix: state seed differs");
  return matrix_run(MatrixOperands::seeded(size, seed), std::move(state), hook);
}

void to_json(json& j, const CounterState& v) {
  j = json{{"limit", v.limit}, {"count", v.count}, {"last_posted", v.last_posted}};
}
void from_json(const json& j, CounterState& v) {
  j.at("limit").get_to(v.limit);
  j.at("count").get_to(v.count);
  j.at("last_posted").get_to(v.last_posted);
}

Progress<CounterState, std::int64_t> counter_run(std::int64_t limit, std::optional<CounterState> state,
                                                 const PartialSink& sink, const StepHook& hook) {
  CounterState s = state ? *state : counter_initial(limit);
  if (s.limit != limit) throw Error(ErrorKind::incompatible_state, "counter: state limit differs");
  return drive<CounterState, std::int64_t>(
      s, hook, [&](CounterState& st) { counter_step(st, sink); },
      [](const CounterState& st) { return st.count >= st.limit; },
      [](const CounterState& st) { return st.count; });
}

// ---------------------------------------------------------------------------

WorkloadRegistry WorkloadRegistry::with_builtins() {
  WorkloadRegistry r;
  r.add("factors", [](const std::vector<std::string>& args, const std::optional<CooperativeState>& state,
                      const WorkloadOptions& opts) -> std::unique_ptr<Workload> {
    if (args.size() != 1) throw Error(ErrorKind::invalid_argument, "factors expects one argument: n");
    if (opts.factor_block_size == 0) throw Error(ErrorKind::invalid_argument, "factors: block size must be >= 1");
    const auto n = parse_uint(args[0], "factors n");
    auto initial = factors_initial(n);
    if (state) {
      auto s = decode_state<FactorsState>(*state, "factors");
      if (s.n != n) throw Error(ErrorKind::incompatible_state, "factors: state was recorded for a different n");
      initial = std::move(s);
    }
    return std::make_unique<FactorsWorkload>(std::move(initial), opts.factor_block_size);
  });
  r.add("matrix", [](const std::vector<std::string>& args, const std::optional<CooperativeState>& state,
                     const WorkloadOptions&) -> std::unique_ptr<Workload> {
    if (args.empty() || args.size() > 2) {
      throw Error(ErrorKind::invalid_argument, "matrix expects arguments: size [seed]");
    }
    const auto size = parse_int(args[0], "matrix size");
    const auto seed = args.size() > 1 ? parse_uint(args[1], "matrix seed") : 0;
    auto initial = matrix_initial(size, seed);
    if (state) {
      auto s = decode_state<MatrixState>(*state, "matrix");
      if (s.size != size || s.seed != seed) {
        throw Error(ErrorKind::incompatible_state, "matrix: state was recorded for different operands");
      }
      initial = std::move(s);
    }
    return std::make_unique<MatrixWorkload>(std::move(initial));
  });
  r.add("counter", [](const std::vector<std::string>& args, const std::optional<CooperativeState>& state,
                      const WorkloadOptions&) -> std::unique_ptr<Workload> {
    if (args.size() > 1) throw Error(ErrorKind::invalid_argument, "counter expects at most one argument: limit");
    const auto limit = args.empty() ? kCounterDefaultLimit : parse_int(args[0], "counter limit");
    auto initial = counter_initial(limit);
    if (state) {
      auto s = decode_state<CounterState>(*state, "counter");
      if (s.limit != limit) throw Error(ErrorKind::incompatible_state, "counter: state limit differs");
      initial = s;
    }
    return std::make_unique<CounterWorkload>(initial);
  });
  return r;
}

void WorkloadRegistry::add(std::string name, Factory factory) { factories_[std::move(name)] = std::move(factory); }

bool WorkloadRegistry::contains(std::string_view name) const { return factories_.find(name) != factories_.end(); }

std::vector<std::string> WorkloadRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

std::unique_ptr<Workload> WorkloadRegistry::create(const WorkloadSpec& spec,
                                                   const std::optional<CooperativeState>& state,
                                                   const WorkloadOptions& options) const {
  auto it = factories_.find(spec.bin);
  if (it == factories_.end()) throw Error(ErrorKind::unknown_workload, "unknown workload '" + spec.bin + "'");
  return it->second(spec.bin_args, state, options);
}

}  // namespace faaschain
