// SPDX-License-Identifier: Apache-2.0
//
// hzpsim: plan / simulate / verify / sweep front end.
//
// Exit codes: 0 success, 1 config error, 2 no feasible plan,
// 3 equivalence verification failure.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>

#include "hzp/compare.hpp"
#include "hzp/config.hpp"
#include "hzp/memory.hpp"
#include "hzp/pipeline.hpp"
#include "hzp/sched.hpp"
#include "hzp/trace.hpp"
#include "hzp/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitEquivalence = 3;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

int write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return kExitOk;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot open output file: " << path << "\n";
    return kExitConfig;
  }
  out << text;
  return kExitOk;
}

struct PlanArgs {
  std::string config;
  std::string output;
  std::int64_t budget = 0;
  std::int64_t activations = 0;
};

int run_plan(const PlanArgs& args) {
  const auto vc = hzp::load_config_file(args.config);
  std::vector<hzp::PlanEntry> plans;
  try {
    plans = hzp::plan_search(vc.model, vc.topo, vc.parallel, args.budget,
                             args.activations);
  } catch (const hzp::MemoryError& e) {
    if (e.code() == hzp::MemoryError::Code::NoFeasibleConfig) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitInfeasible;
    }
    throw;
  }
  std::ostringstream csv;
  csv << "z1,z2,z3,pp,cp,static_bytes,spans_nodes_z2,spans_nodes_z3,"
         "comm_cost_estimate\n";
  for (const auto& p : plans) {
    csv << p.cfg.z1 << ',' << p.cfg.z2 << ',' << p.cfg.z3 << ',' << p.cfg.pp
        << ',' << p.cfg.cp << ',' << p.static_bytes << ','
        << (p.spans_nodes_z2 ? 1 : 0) << ',' << (p.spans_nodes_z3 ? 1 : 0)
        << ',' << fmt_double(p.comm_cost_estimate) << '\n';
  }
  return write_output(args.output, csv.str());
}

struct SimulateArgs {
  std::string config;
  std::string output;
  std::string trace;
  std::string mode = "async";
  std::string pp_variant = "1f1b";
  bool recompute = false;
  bool defer_rs = false;
  int rank = 0;
  int prelaunch_depth = 2;
  int rs_slots = 1;
};

int run_simulate(const SimulateArgs& args) {
  const auto vc = hzp::load_config_file(args.config);
  hzp::SchedMode mode;
  if (args.mode == "vanilla") {
    mode = hzp::SchedMode::Vanilla;
  } else if (args.mode == "async") {
    mode = hzp::SchedMode::Async;
  } else {
    std::cerr << "error: unknown --mode: " << args.mode << "\n";
    return kExitConfig;
  }
  const hzp::PipeVariant variant = hzp::parse_variant(args.pp_variant);
  const auto schedule = hzp::build_schedule(
      vc.parallel.pp, vc.parallel.vpp,
      static_cast<int>(vc.model.num_microbatches), variant);
  if (args.rank < 0 || args.rank >= vc.parallel.pp) {
    std::cerr << "error: --rank out of range\n";
    return kExitConfig;
  }

  hzp::GraphPolicy policy;
  policy.defer_rs = args.defer_rs;
  policy.rank = args.rank;
  policy.order = schedule.per_rank[args.rank];
  hzp::CostModel cost;
  cost.topo = vc.topo;
  auto graph = hzp::build_task_graph(vc.model, vc.parallel, cost, policy);
  hzp::apply_reuse(schedule, graph);
  hzp::recompute_rule(graph, args.recompute);

  const auto pools = hzp::make_pools(graph, args.prelaunch_depth, args.rs_slots);
  const auto timeline = hzp::simulate(graph, pools, mode);
  const auto mem =
      hzp::memory_trace(timeline, hzp::ledger(vc.model, vc.parallel), pools);

  std::ostringstream csv;
  hzp::write_summary_csv_header(csv);
  hzp::write_summary_csv_row(csv, timeline, mem);
  const int rc = write_output(args.output, csv.str());
  if (rc != kExitOk) return rc;

  if (!args.trace.empty()) {
    std::ofstream out(args.trace, std::ios::binary);
    if (!out) {
      std::cerr << "error: cannot open trace file: " << args.trace << "\n";
      return kExitConfig;
    }
    hzp::write_chrome_trace(out, timeline, "hzpsim rank " +
                                               std::to_string(args.rank));
  }
  return kExitOk;
}

struct VerifyArgs {
  std::string config;
  std::string output;
  std::string precision = "fp64";
  int steps = 3;
  std::uint64_t seed = 1;
  bool inject_fault = false;
};

int run_verify(const VerifyArgs& args) {
  const auto vc = hzp::load_config_file(args.config);
  hzp::Precision precision;
  if (args.precision == "fp64") {
    precision = hzp::Precision::Fp64;
  } else if (args.precision == "mixed") {
    precision = hzp::Precision::Mixed;
  } else {
    std::cerr << "error: unknown --precision: " << args.precision << "\n";
    return kExitConfig;
  }
  const auto grid = hzp::default_grid(
      {vc.parallel.dp}, {static_cast<int>(vc.model.num_microbatches)});
  const auto report = hzp::verify_equivalence(grid, args.seed, args.steps,
                                              precision, hzp::AdamParams{},
                                              args.inject_fault);
  const int rc = write_output(args.output, hzp::report_to_json(report) + "\n");
  if (rc != kExitOk) return rc;
  return report.all_pass ? kExitOk : kExitEquivalence;
}

struct SweepArgs {
  std::string config;
  std::string output;
  std::vector<std::int64_t> seq_lens;
  bool recompute = false;
};

int run_sweep(const SweepArgs& args) {
  const auto vc = hzp::load_config_file(args.config);
  std::ostringstream csv;
  csv << "seq_len,tp_bytes,hzp_bytes\n";
  for (const std::int64_t s : args.seq_lens) {
    hzp::ModelSpec spec = vc.model;
    spec.seq_len = s;
    const double tp_bytes =
        hzp::tp_comm_volume(spec, vc.parallel.tp, vc.parallel.cp, args.recompute);
    const double hzp_bytes = hzp::hzp_comm_volume(
        spec, vc.parallel, static_cast<int>(vc.model.num_microbatches));
    csv << s << ',' << fmt_double(tp_bytes) << ',' << fmt_double(hzp_bytes)
        << '\n';
  }
  return write_output(args.output, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HZP sharding planner, schedule simulator, and verifier"};
  app.require_subcommand(1);

  PlanArgs plan_args;
  auto* plan = app.add_subcommand("plan", "Rank feasible sharding configs");
  plan->add_option("config", plan_args.config, "Config JSON file")->required();
  plan->add_option("--budget", plan_args.budget, "Per-rank memory budget, bytes")
      ->required();
  plan->add_option("--activations", plan_args.activations,
                   "Per-rank activation bytes added to the static footprint");
  plan->add_option("-o,--output", plan_args.output, "Output CSV path");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Simulate one training iteration");
  sim->add_option("config", sim_args.config, "Config JSON file")->required();
  sim->add_option("--mode", sim_args.mode, "vanilla | async");
  sim->add_option("--trace", sim_args.trace, "Chrome trace output path");
  sim->add_option("--pp-variant", sim_args.pp_variant, "1f1b | interleaved");
  sim->add_flag("--recompute", sim_args.recompute,
                "Insert forward recomputation before each backward");
  sim->add_flag("--defer-rs", sim_args.defer_rs,
                "Defer reduce-scatters to the end of the backward pass");
  sim->add_option("--rank", sim_args.rank, "Pipeline rank to simulate");
  sim->add_option("--prelaunch-depth", sim_args.prelaunch_depth,
                  "Parameter all-gather pool slots");
  sim->add_option("--rs-slots", sim_args.rs_slots,
                  "Gradient reduce-scatter pool slots");
  sim->add_option("-o,--output", sim_args.output, "Summary CSV path");

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand(
      "verify", "Check sharded-vs-baseline training equivalence");
  verify->add_option("config", verify_args.config, "Config JSON file")
      ->required();
  verify->add_option("--precision", verify_args.precision, "fp64 | mixed");
  verify->add_option("--steps", verify_args.steps, "Optimizer steps per case");
  verify->add_option("--seed", verify_args.seed, "Base RNG seed");
  verify->add_flag("--inject-fault", verify_args.inject_fault,
                   "Perturb one parameter (negative-control hook)");
  verify->add_option("-o,--output", verify_args.output, "Report JSON path");

  SweepArgs sweep_args;
  auto* sweep =
      app.add_subcommand("sweep", "Communication volume vs. sequence length");
  sweep->add_option("config", sweep_args.config, "Config JSON file")->required();
  sweep->add_option("--seq-lens", sweep_args.seq_lens, "Sequence lengths")
      ->required()
      ->delimiter(',');
  sweep->add_flag("--recompute", sweep_args.recompute,
                  "Charge recomputation's forward collectives to TP");
  sweep->add_option("-o,--output", sweep_args.output, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) return run_plan(plan_args);
    if (sim->parsed()) return run_simulate(sim_args);
    if (verify->parsed()) return run_verify(verify_args);
    if (sweep->parsed()) return run_sweep(sweep_args);
  } catch (const hzp::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const hzp::EquivalenceFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEquivalence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
