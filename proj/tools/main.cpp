#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace gpufirst;
  CLI::App app{"Simulated GPU-first execution: host RPC, device allocators, multi-team kernels"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for randomized inputs (all commands are deterministic)");

  auto* demo = app.add_subcommand("demo", "Run the fscanf call-site program and compare with the host");
  std::string input = "3.5 7 9";
  demo->add_option("--input", input, "Contents of the host file read by fscanf");

  auto* alloc = app.add_subcommand("bench-alloc", "Allocate/use/free in every thread of a multi-team kernel");
  cli::alloc_grid grid;
  std::vector<std::string> allocators;
  alloc->add_option("--allocator", allocators, "generic | balanced:N,M[,ratio] (repeatable)");
  alloc->add_option("--teams", grid.teams, "Team counts")->delimiter(',');
  alloc->add_option("--threads", grid.threads, "Threads per team")->delimiter(',');
  alloc->add_option("--reps", grid.reps, "Repetitions per grid point")->capture_default_str();
  alloc->add_option("--block", grid.block_size, "Bytes allocated per thread")->capture_default_str();
  alloc->add_flag("--json", grid.json, "Emit one JSON object per grid point");

  auto* rpc = app.add_subcommand("bench-rpc", "Per-stage latency of fprintf-like RPC calls");
  rpc_bench_config rc;
  double delay_us = 0;
  bool rpc_json = false;
  rpc->add_option("--calls", rc.calls, "Number of calls")->capture_default_str()->check(CLI::PositiveNumber);
  rpc->add_option("--delay", delay_us, "Host handler delay in microseconds")->check(CLI::NonNegativeNumber);
  rpc->add_flag("--json", rpc_json, "Emit one JSON object per call");

  auto* lower = app.add_subcommand("lower", "Print the lowering plan of every external call site");
  std::string ir_file;
  lower->add_option("file", ir_file, "Mini-IR file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc_parse = app.exit(e);
    return rc_parse == 0 ? cli::ok : cli::usage;
  }

  try {
    if (*demo) return cli::cmd_demo(input, std::cout, std::cerr);
    if (*alloc) {
      if (!allocators.empty()) grid.allocators = allocators;
      return cli::cmd_bench_alloc(grid, std::cout, std::cerr);
    }
    if (*rpc) {
      rc.handler_delay = std::chrono::nanoseconds(static_cast<std::int64_t>(delay_us * 1000));
      return cli::cmd_bench_rpc(rc, rpc_json, std::cout);
    }
    if (*lower) return cli::cmd_lower(ir_file, std::cout, std::cerr);
  } catch (const error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == errc::config ? cli::usage : cli::fault;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return cli::fault;
  }
  return cli::usage;
}
