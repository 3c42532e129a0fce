#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "coag/config.hpp"
#include "coag/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"coaglab: coagulating Brownian particles, cell problem and Smoluchowski solver"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 0;
  std::string out;
  std::uint64_t seed = 0;
  bool print_config = false;
  bool quiet = false;

  const char* commands[][2] = {
      {"cell-problem", "Solve the cell problem and write beta_table.csv"},
      {"capacity-curve", "Write the effective-rate curve F(b) to f_curve.csv"},
      {"simulate", "Run particle replicas (events.jsonl, counts.csv, ...)"},
      {"pde", "Solve the truncated Smoluchowski system (macro_counts.csv)"},
      {"validate", "Compare existing artifacts and write report.json"},
      {"full", "Run every stage and validate"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Configuration file (YAML or JSON)")->required();
    sub->add_option("--workers", workers, "Replica worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Base seed (replica k uses seed ^ k*0x9E3779B97F4A7C15)");
    sub->add_flag("--print-config", print_config, "Print the canonical configuration and exit");
    sub->add_flag("-q,--quiet", quiet, "Suppress progress lines");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    coag::RunConfig cfg = coag::parse_config(config_path);
    cfg.command = command;
    if (print_config) {
      std::cout << coag::serialize(cfg);
      return 0;
    }
    coag::ExperimentOptions opt;
    opt.workers = workers;
    if (!out.empty()) opt.out = out;
    if (app.get_subcommands().front()->count("--seed")) opt.seed = seed;
    opt.log = quiet ? nullptr : &std::cerr;
    return coag::run_experiment(cfg, opt);
  } catch (const std::exception& e) {
    std::cerr << "coaglab: " << e.what() << '\n';
    return 2;
  }
}
