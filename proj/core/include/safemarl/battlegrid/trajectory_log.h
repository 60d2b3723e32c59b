#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

// Plain-text trajectory log, one transition per line:
//
//   # safemarl trajectory log v1
//   # seed=<run seed>
//   # columns: episode step actions reward deaths done win
//   <episode> <step> <a0,a1,...> <reward> <deaths> <done 0|1> <win 0|1>
//
// Lines starting with '#' and blank lines are ignored. Within an episode the
// step column counts up from 0 and only the final line has done=1.
namespace safemarl::env {

struct LogRecord {
  std::uint64_t episode = 0;
  int step = 0;
  std::vector<int> actions;
  double reward = 0.0;
  int deaths = 0;
  bool done = false;
  bool win = false;
  bool operator==(const LogRecord&) const = default;
};

struct EpisodeLog {
  std::uint64_t id = 0;
  std::vector<LogRecord> steps;

  int total_deaths() const;
  double total_return() const;
  bool win() const { return !steps.empty() && steps.back().win; }
};

class TrajectoryLogError : public std::runtime_error {
 public:
  TrajectoryLogError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TrajectoryLogWriter {
 public:
  TrajectoryLogWriter(std::ostream& out, std::uint64_t seed);
  void write(const LogRecord& record);
  void write(const EpisodeLog& episode);

 private:
  std::ostream& out_;
};

std::vector<EpisodeLog> read_trajectory_log(std::istream& in);
std::vector<EpisodeLog> read_trajectory_log_file(const std::string& path);

}  // namespace safemarl::env
