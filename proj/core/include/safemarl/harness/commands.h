#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "safemarl/battlegrid/trajectory_log.h"
#include "safemarl/trainloop/replay.h"

namespace safemarl::harness {

struct RunSpec {
  std::string command;      // train | eval | verify | ablate-gamma-b | ablate-beta | smoke
  std::string config_path;  // empty: defaults
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::string log_path;         // verify: explicit trajectory log
  std::string checkpoint_path;  // eval: explicit checkpoint
};

inline const std::vector<double> kGammaBSweep = {0.4, 0.5, 0.7, 0.9, 0.99};
inline const std::vector<double> kBetaQSweep = {0.1, 0.3, 0.5, 0.7, 0.9};

// Runs one command. Returns 0 on success; on failure prints the cause to
// `err` and returns nonzero.
int run_command(const RunSpec& spec, std::ostream& out, std::ostream& err);

// Parses "0,1,2" (also accepts ranges "0-4").
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

env::EpisodeLog to_episode_log(const train::Episode& episode, std::uint64_t id);

// "0.4" -> "gamma_b_0.4.csv"; shortest round-trip formatting of the value.
std::string sweep_file_name(const std::string& prefix, double value, std::uint64_t seed, bool with_seed);

}  // namespace safemarl::harness
