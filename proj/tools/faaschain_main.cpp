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

// faaschain command line.
//
//   faaschain bench run --workload counter --args '[40,70,120]' --reps 20 \
//       --timeout-ms 90000 --trigger-ms 50000 --clock simulated --fencing on --out runs.csv
//   faaschain action serve      (LF_PORT, LF_CKPT_DIR, LF_LOG_DIR, LF_LOG_LEVEL)
//   faaschain gateway serve     (LF_GATEWAY_PORT, LF_CLOCK_MODE)

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "faaschain/bench.hpp"
#include "faaschain/gateway.hpp"
#include "faaschain/http.hpp"

namespace {

using namespace faaschain;

bool parse_on_off(const std::string& text) {
  if (text == "on" || text == "true" || text == "1") return true;
  if (text == "off" || text == "false" || text == "0") return false;
  throw Error(ErrorKind::invalid_argument, "expected on|off, got '" + text + "'");
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct RepoFlags {
  std::string backend = "memory";
  std::string root;
  std::int64_t fixed_ms = 0;
  double put_ms_per_mib = 0;
  double get_ms_per_mib = 0;

  void add(CLI::App* app) {
    app->add_option("--repo", backend, "memory | local_fs | stub_remote");
    app->add_option("--repo-root", root, "Directory for local_fs (or a disk-backed stub_remote)");
    app->add_option("--latency-fixed-ms", fixed_ms, "stub_remote fixed cost per operation");
    app->add_option("--latency-put-ms-per-mib", put_ms_per_mib, "stub_remote upload cost");
    app->add_option("--latency-get-ms-per-mib", get_ms_per_mib, "stub_remote download cost");
  }

  RepoConfig config() const {
    RepoConfig c;
    c.backend = parse_repo_backend(backend);
    c.root = root;
    c.latency = {put_ms_per_mib, get_ms_per_mib, fixed_ms};
    return c;
  }
};

struct RunnerFlags {
  std::int64_t trigger_ms = 50000;
  std::string fencing = "on";
  std::int64_t unit_ms = 1000;
  std::int64_t max_chain_length = 64;
  std::string restore_policy = "fail_chain";
  std::int64_t race_delay_ms = -1;
  bool disabled = false;

  void add(CLI::App* app) {
    app->add_option("--trigger-ms", trigger_ms, "Checkpoint trigger after activation start");
    app->add_option("--fencing", fencing, "on | off");
    app->add_option("--unit-ms", unit_ms, "Duration of one work unit");
    app->add_option("--max-chain-length", max_chain_length);
    app->add_option("--restore-policy", restore_policy, "fail_chain | restart_from_scratch");
    app->add_option("--race-delay-ms", race_delay_ms, "Delay termination after checkpoint (race configuration)");
    app->add_flag("--no-runner", disabled, "Run workloads without checkpointing");
  }

  RunnerConfig config() const {
    RunnerConfig c;
    c.checkpoint_trigger_ms = trigger_ms;
    c.fencing_enabled = parse_on_off(fencing);
    c.unit_ms = unit_ms;
    c.max_chain_length = max_chain_length;
    c.restore_policy = parse_restore_policy(restore_policy);
    if (race_delay_ms >= 0) c.delayed_termination_ms = race_delay_ms;
    c.enabled = !disabled;
    return c;
  }
};

int bench_run(const BenchPlan& base, const std::string& args_json, const std::string& clock, const std::string& fencing,
              const std::string& mode, std::int64_t race_delay_ms, const RepoFlags& repo, const std::string& out,
              const std::string& summary_path) {
  BenchPlan plan = base;
  plan.args_sweep = parse_args_sweep(json::parse(args_json));
  plan.clock_mode = parse_clock_mode(clock);
  plan.fencing = parse_on_off(fencing);
  plan.mode = json(mode).get<ExecutionMode>();
  if (race_delay_ms >= 0) plan.delayed_termination_ms = race_delay_ms;
  plan.repo = repo.config();
  if (plan.mode == ExecutionMode::external_process) plan.external_tool = ExternalToolConfig{};

  auto result = run_plan(plan);
  if (!out.empty()) emit_csv(result.samples, out);
  const auto summary = json(result.summary).dump(2);
  if (!summary_path.empty()) {
    std::ofstream(summary_path) << summary << "\n";
  }
  std::cout << summary << std::endl;
  if (result.exit_code() != 0) std::cerr << "more than half of the runs failed" << std::endl;
  return result.exit_code();
}

int action_serve(const std::string& host, int port, const RunnerFlags& runner, const std::string& gateway_url,
                 const std::string& action_name, bool queue) {
  const auto ckpt_dir = env_or("LF_CKPT_DIR", "");
  RepoConfig repo;
  if (!ckpt_dir.empty()) {
    repo.backend = RepoBackend::local_fs;
    repo.root = ckpt_dir;
  }
  RealClock clock;
  RandomIds ids;
  auto log = EventLog::from_env();
  auto registry = WorkloadRegistry::with_builtins();
  auto checkpoints = make_checkpoint_repo(repo, clock);
  auto results = make_results_repo(repo, clock);
  CooperativeCheckpointer cooperative(registry, clock);
  ExternalCheckpointer external(ExternalToolConfig{}, clock);
  HttpInvoker invoker(gateway_url);

  RunnerDeps deps;
  deps.cooperative = &cooperative;
  deps.external = &external;
  deps.checkpoints = checkpoints.get();
  deps.results = results.get();
  deps.invoker = &invoker;
  deps.clock = &clock;
  deps.log = log.get();
  if (!ckpt_dir.empty()) deps.scratch_dir = std::filesystem::path(ckpt_dir) / "scratch";
  deps.action_name = action_name;

  ActionServer server({runner.config(), queue}, deps, &registry, ids);
  ActionHttpServer http(server);
  const int bound = http.bind(host, port);
  std::cerr << "action server listening on " << host << ":" << bound << std::endl;
  http.listen();
  return 0;
}

int gateway_serve(const std::string& host, int port, const std::string& clock, const std::string& actions_file,
                  const RunnerFlags& runner, const RepoFlags& repo, std::int64_t timeout_ms) {
  PlatformOptions options;
  options.clock_mode = parse_clock_mode(clock);
  options.checkpoint_repo = repo.config();
  options.results_repo = repo.config();
  if (const char* dir = std::getenv("LF_LOG_DIR"); dir && *dir) options.log_dir = dir;
  options.log_echo = parse_log_level(env_or("LF_LOG_LEVEL", "warn"));
  LocalPlatform platform(options);

  std::vector<ActionConfig> actions;
  if (!actions_file.empty()) {
    std::ifstream in(actions_file);
    if (!in) throw Error(ErrorKind::invalid_argument, "cannot read " + actions_file);
    actions = json::parse(in).get<std::vector<ActionConfig>>();
  } else {
    ActionConfig action;
    action.name = "faaschain";
    action.timeout_ms = timeout_ms;
    action.runner = runner.config();
    actions.push_back(action);
  }
  for (auto& a : actions) platform.register_action(a);

  GatewayHttpServer http(platform.gateway());
  const int bound = http.bind(host, port);
  std::cerr << "gateway listening on " << host << ":" << bound << " (" << to_string(platform.clock().mode())
            << " clock)" << std::endl;
  http.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checkpoint-chained serverless execution"};
  app.require_subcommand(1);

  // bench run
  auto* bench = app.add_subcommand("bench", "Benchmark harness");
  bench->require_subcommand(1);
  auto* bench_run_cmd = bench->add_subcommand("run", "Run a benchmark plan and write CSV");
  BenchPlan plan;
  std::string args_json, clock = "simulated", fencing = "on", mode = "cooperative", out, summary_path;
  std::int64_t race_delay_ms = -1;
  RepoFlags bench_repo;
  bench_run_cmd->add_option("--workload", plan.workload)->required();
  bench_run_cmd->add_option("--args", args_json, "JSON list of argument sets, e.g. '[40,70,120]'")->required();
  bench_run_cmd->add_option("--reps", plan.repetitions);
  bench_run_cmd->add_option("--timeout-ms", plan.timeout_ms);
  bench_run_cmd->add_option("--trigger-ms", plan.trigger_ms);
  bench_run_cmd->add_option("--clock", clock, "simulated | real");
  bench_run_cmd->add_option("--fencing", fencing, "on | off");
  bench_run_cmd->add_option("--unit-ms", plan.unit_ms);
  bench_run_cmd->add_option("--block-size", plan.factor_block_size, "Divisor probes per factors work unit");
  bench_run_cmd->add_option("--race-delay-ms", race_delay_ms);
  bench_run_cmd->add_option("--mode", mode, "cooperative | external-process");
  bench_run_cmd->add_option("--parallel", plan.parallelism);
  bench_run_cmd->add_option("--out", out, "CSV output path");
  bench_run_cmd->add_option("--summary", summary_path, "Summary JSON output path");
  bench_repo.add(bench_run_cmd);

  // action serve
  auto* action = app.add_subcommand("action", "Action interface server");
  action->require_subcommand(1);
  auto* action_serve_cmd = action->add_subcommand("serve", "Serve /init and /run");
  std::string action_host = "0.0.0.0", gateway_url = "http://127.0.0.1:" + env_or("LF_GATEWAY_PORT", "3233"),
              action_name = "faaschain";
  int action_port = 0;
  bool queue = false;
  RunnerFlags action_runner;
  action_serve_cmd->add_option("--host", action_host);
  action_serve_cmd->add_option("--port", action_port, "Defaults to LF_PORT or 8080");
  action_serve_cmd->add_option("--gateway-url", gateway_url, "Where re-invocations are sent");
  action_serve_cmd->add_option("--action-name", action_name, "Action to re-invoke");
  action_serve_cmd->add_flag("--queue", queue, "Queue concurrent runs instead of rejecting them");
  action_runner.add(action_serve_cmd);

  // gateway serve
  auto* gateway = app.add_subcommand("gateway", "FaaS gateway simulator");
  gateway->require_subcommand(1);
  auto* gateway_serve_cmd = gateway->add_subcommand("serve", "Serve the gateway API");
  std::string gateway_host = "0.0.0.0", gateway_clock = env_or("LF_CLOCK_MODE", "real"), actions_file;
  int gateway_port = 0;
  std::int64_t gateway_timeout_ms = kDefaultActionTimeoutMs;
  RunnerFlags gateway_runner;
  RepoFlags gateway_repo;
  gateway_serve_cmd->add_option("--host", gateway_host);
  gateway_serve_cmd->add_option("--port", gateway_port, "Defaults to LF_GATEWAY_PORT or 3233");
  gateway_serve_cmd->add_option("--clock", gateway_clock, "real | simulated (LF_CLOCK_MODE)");
  gateway_serve_cmd->add_option("--actions", actions_file, "JSON list of action configurations");
  gateway_serve_cmd->add_option("--timeout-ms", gateway_timeout_ms, "Timeout of the default action");
  gateway_runner.add(gateway_serve_cmd);
  gateway_repo.add(gateway_serve_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench_run_cmd->parsed()) {
      return bench_run(plan, args_json, clock, fencing, mode, race_delay_ms, bench_repo, out, summary_path);
    }
    if (action_serve_cmd->parsed()) {
      return action_serve(action_host, action_port ? action_port : action_port_from_env(), action_runner, gateway_url,
                          action_name, queue);
    }
    if (gateway_serve_cmd->parsed()) {
      return gateway_serve(gateway_host, gateway_port ? gateway_port : gateway_port_from_env(), gateway_clock,
                           actions_file, gateway_runner, gateway_repo, gateway_timeout_ms);
    }
  } catch (const std::exception& e) {
    std::cerr << "faaschain: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
