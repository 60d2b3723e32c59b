// Command-line front end:
//   safemarl <command> --config <path> --out <dir> --seeds <list>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "safemarl/harness/commands.h"

int main(int argc, char** argv) {
  CLI::App app{"Distributional multi-agent training with a death-count barrier"};
  safemarl::harness::RunSpec spec;
  std::string seeds = "0";
  app.add_option("command", spec.command, "train | eval | verify | ablate-gamma-b | ablate-beta | smoke")->required();
  app.add_option("--config", spec.config_path, "Configuration file (defaults apply when omitted)");
  app.add_option("--out", spec.out_dir, "Output directory")->required();
  app.add_option("--seeds", seeds, "Comma-separated seeds or ranges, e.g. 0,1,2 or 0-4");
  app.add_option("--log", spec.log_path, "verify: trajectory log to certify");
  app.add_option("--checkpoint", spec.checkpoint_path, "eval: checkpoint to load");
  CLI11_PARSE(app, argc, argv);

  try {
    spec.seeds = safemarl::harness::parse_seed_list(seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return safemarl::harness::run_command(spec, std::cout, std::cerr);
}
