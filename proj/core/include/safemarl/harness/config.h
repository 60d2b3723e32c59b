#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>

#include "safemarl/battlegrid/battle.h"
#include "safemarl/battlegrid/corridor.h"
#include "safemarl/certify/scenario.h"
#include "safemarl/trainloop/trainer.h"

// Run configuration file:
//
//   # comment
//   [env]
//   kind = battle            # battle | corridor
//   grid_width = 8
//   [train]
//   learning_rate = 0.001
//   [certify]
//   n_samples = 100
//
// Omitted keys keep their defaults. Unknown sections or keys and
// out-of-range values are rejected with the line number. After the file, any
// environment variable MB_<SECTION>_<KEY> (upper case) overrides a key.
namespace safemarl::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CertifyDefaults {
  std::size_t n_samples = 100;
  std::size_t removed = 0;
  std::size_t param_count = 1;
  double beta = 0.05;
  double omega = -1.0;  // negative: n_agents - 1

  certify::SafetyQuery query(std::size_t n_agents) const;
};

struct RunConfig {
  std::string env_kind = "battle";
  env::EnvConfig battle;
  env::CorridorConfig corridor;
  train::TrainConfig train;
  std::size_t checkpoint_every = 0;  // evaluations between checkpoints; 0 keeps only the final one
  CertifyDefaults certify;

  std::unique_ptr<env::Environment> make_env() const;
  void validate() const;
};

RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

// Applies MB_<SECTION>_<KEY> variables through `lookup` (getenv by default).
using EnvLookup = const char* (*)(const char*);
void apply_env_overrides(RunConfig& config, EnvLookup lookup = nullptr);

// Every key with its current value, in parse_config syntax.
std::string serialize_config(const RunConfig& config);

// FNV-1a of serialize_config, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace safemarl::harness
