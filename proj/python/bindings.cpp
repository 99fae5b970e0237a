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

// faaschain._core: thin bindings over the C++ library. Structured values cross
// the boundary as canonical JSON text; the Python package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "faaschain/bench.hpp"
#include "faaschain/digest.hpp"
#include "faaschain/gateway.hpp"
#include "faaschain/workloads.hpp"

namespace py = pybind11;
using namespace faaschain;

namespace {

std::string run_chain(const std::string& bin, const std::vector<std::string>& args, std::int64_t timeout_ms,
                      std::int64_t trigger_ms, std::int64_t unit_ms, bool enabled, bool fencing,
                      std::optional<std::int64_t> race_delay_ms) {
  py::gil_scoped_release release;
  LocalPlatform platform;
  ActionConfig action;
  action.name = "faaschain";
  action.timeout_ms = timeout_ms;
  action.runner.checkpoint_trigger_ms = trigger_ms;
  action.runner.unit_ms = unit_ms;
  action.runner.enabled = enabled;
  action.runner.fencing_enabled = fencing;
  action.runner.delayed_termination_ms = race_delay_ms;
  platform.register_action(action);
  auto run = platform.run_chain(action.name, json{{"bin", bin}, {"bin_args", args}});
  json out{{"chain_id", run.chain_id}, {"record", nullptr}, {"report", nullptr}, {"activations", run.activations}};
  if (run.record) out["record"] = *run.record;
  if (run.report) out["report"] = *run.report;
  return canonical(out);
}

py::tuple run_bench(const std::string& plan_json) {
  const auto j = json::parse(plan_json);
  BenchPlan plan;
  plan.workload = j.at("workload").get<std::string>();
  plan.args_sweep = parse_args_sweep(j.at("args"));
  plan.repetitions = j.value("repetitions", plan.repetitions);
  plan.timeout_ms = j.value("timeout_ms", plan.timeout_ms);
  plan.trigger_ms = j.value("trigger_ms", plan.trigger_ms);
  plan.unit_ms = j.value("unit_ms", plan.unit_ms);
  plan.fencing = j.value("fencing", plan.fencing);
  plan.factor_block_size = j.value("block_size", plan.factor_block_size);
  if (j.contains("race_delay_ms") && !j["race_delay_ms"].is_null()) {
    plan.delayed_termination_ms = j["race_delay_ms"].get<std::int64_t>();
  }
  BenchResult result;
  {
    py::gil_scoped_release release;
    result = run_plan(plan);
  }
  return py::make_tuple(to_csv(result.samples), canonical(json(result.summary)));
}

std::string run_workload(const std::string& bin, const std::vector<std::string>& args, std::uint64_t block_size) {
  auto registry = WorkloadRegistry::with_builtins();
  WorkloadOptions options;
  options.factor_block_size = block_size;
  auto w = registry.create({bin, args}, std::nullopt, options);
  std::vector<json> partials;
  PartialSink sink = [&](const json& p) { partials.push_back(p); };
  while (!w->done()) w->step(sink);
  return canonical(json{{"result", w->result()}, {"partials", partials}, {"steps", w->work_units_done()}});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Checkpoint-chained serverless execution (native core).";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = py::reinterpret_borrow<py::object>(error.ptr());
      py::object exc = type(std::string(to_string(e.kind())) + ": " + e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("sha256_hex", [](py::bytes data) { return sha256_hex(std::string(data)); }, py::arg("data"));
  m.def("canonical", [](const std::string& text) { return canonical(json::parse(text)); }, py::arg("json_text"),
        "Canonical form of a JSON document: sorted keys, no whitespace.");
  m.def("workloads", [] { return WorkloadRegistry::with_builtins().names(); });
  m.def("run_workload", &run_workload, py::arg("bin"), py::arg("args"), py::arg("block_size") = 1,
        "Runs a workload to completion without a platform; returns JSON text.");
  m.def("run_chain", &run_chain, py::arg("bin"), py::arg("args"), py::arg("timeout_ms") = 60000,
        py::arg("trigger_ms") = 50000, py::arg("unit_ms") = 1000, py::arg("enabled") = true,
        py::arg("fencing") = true, py::arg("race_delay_ms") = py::none(),
        "Runs one chain on a simulated local platform; returns JSON text.");
  m.def("run_bench", &run_bench, py::arg("plan_json"), "Returns (csv_text, summary_json_text).");
}
