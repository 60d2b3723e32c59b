#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "safemarl/trainloop/trainer.h"

// Metrics CSV: comment lines with the run seed and config hash, the fixed
// header, then one row per evaluation in epoch order.
namespace safemarl::harness {

inline constexpr const char* kMetricsHeader = "epoch,steps,return,win_rate,deaths,l_q,l_b,conflict_frac,epsilon";

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, std::uint64_t seed, const std::string& config_hash);
  // Appends one row and flushes it.
  void write(const train::MetricsRow& row);

 private:
  std::string path_;
  std::ofstream out_;
};

void write_metrics(const std::vector<train::MetricsRow>& rows, const std::string& path, std::uint64_t seed,
                   const std::string& config_hash);

struct MetricsFile {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<train::MetricsRow> rows;
};

MetricsFile read_metrics(std::istream& in);
MetricsFile read_metrics_file(const std::string& path);

}  // namespace safemarl::harness
