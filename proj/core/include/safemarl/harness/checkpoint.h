#pragma once

#include <stdexcept>
#include <string>

#include "safemarl/diffcore/params.h"

// Text checkpoint of a ParameterSet:
//
//   safemarl-checkpoint 1
//   config_hash <hex>
//   param_count <total scalars>
//   tensors <count>
//   <name> <rows> <cols>
//   <values, %.17g, space separated>
//   ...
namespace safemarl::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const diff::ParameterSet& params, const std::string& config_hash);

// Fills `params` (which fixes the expected names and shapes). Returns the
// stored config hash.
std::string load_checkpoint(const std::string& path, diff::ParameterSet& params);

}  // namespace safemarl::harness
