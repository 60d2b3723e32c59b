#include "safemarl/battlegrid/trajectory_log.h"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace safemarl::env {
namespace {

template <typename T>
bool parse_number(const std::string& tok, T& out) {
  const char* end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_flag(const std::string& tok, bool& out) {
  if (tok == "0") {
    out = false;
    return true;
  }
  if (tok == "1") {
    out = true;
    return true;
  }
  return false;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int EpisodeLog::total_deaths() const {
  int d = 0;
  for (const auto& r : steps) d += r.deaths;
  return d;
}

double EpisodeLog::total_return() const {
  double s = 0.0;
  for (const auto& r : steps) s += r.reward;
  return s;
}

TrajectoryLogError::TrajectoryLogError(std::size_t line, const std::string& what)
    : std::runtime_error("trajectory log line " + std::to_string(line) + ": " + what), line_(line) {}

TrajectoryLogWriter::TrajectoryLogWriter(std::ostream& out, std::uint64_t seed) : out_(out) {
  out_ << "# safemarl trajectory log v1\n"
       << "# seed=" << seed << "\n"
       << "# columns: episode step actions reward deaths done win\n";
}

void TrajectoryLogWriter::write(const LogRecord& r) {
  out_ << r.episode << ' ' << r.step << ' ';
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << r.actions[i];
  }
  out_ << ' ' << format_double(r.reward) << ' ' << r.deaths << ' ' << (r.done ? 1 : 0) << ' '
       << (r.win ? 1 : 0) << '\n';
}

void TrajectoryLogWriter::write(const EpisodeLog& episode) {
  for (const auto& r : episode.steps) write(r);
}

std::vector<EpisodeLog> read_trajectory_log(std::istream& in) {
  std::vector<EpisodeLog> episodes;
  bool open = false;  // last episode still expects more lines
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 7) {
      throw TrajectoryLogError(lineno, "expected 7 fields, found " + std::to_string(tok.size()));
    }
    LogRecord r;
    if (!parse_number(tok[0], r.episode)) throw TrajectoryLogError(lineno, "bad episode id");
    if (!parse_number(tok[1], r.step) || r.step < 0) throw TrajectoryLogError(lineno, "bad step");
    {
      std::istringstream as(tok[2]);
      for (std::string a; std::getline(as, a, ',');) {
        int v = 0;
        if (!parse_number(a, v) || v < 0) throw TrajectoryLogError(lineno, "bad action list");
        r.actions.push_back(v);
      }
      if (r.actions.empty()) throw TrajectoryLogError(lineno, "empty action list");
    }
    {
      char* end = nullptr;
      r.reward = std::strtod(tok[3].c_str(), &end);
      if (end != tok[3].c_str() + tok[3].size()) throw TrajectoryLogError(lineno, "bad reward");
    }
    if (!parse_number(tok[4], r.deaths) || r.deaths < 0) {
      throw TrajectoryLogError(lineno, "bad death count");
    }
    if (!parse_flag(tok[5], r.done)) throw TrajectoryLogError(lineno, "bad done flag");
    if (!parse_flag(tok[6], r.win)) throw TrajectoryLogError(lineno, "bad win flag");
    if (r.win && !r.done) throw TrajectoryLogError(lineno, "win without done");

    if (!open) {
      if (r.step != 0) throw TrajectoryLogError(lineno, "episode does not start at step 0");
      episodes.push_back(EpisodeLog{r.episode, {}});
    } else {
      const EpisodeLog& cur = episodes.back();
      if (r.episode != cur.id) {
        throw TrajectoryLogError(lineno, "episode " + std::to_string(cur.id) + " ends without done");
      }
      if (r.step != cur.steps.back().step + 1) throw TrajectoryLogError(lineno, "step out of order");
      if (r.actions.size() != cur.steps.back().actions.size()) {
        throw TrajectoryLogError(lineno, "action count changed within episode");
      }
    }
    open = !r.done;
    episodes.back().steps.push_back(std::move(r));
  }
  if (open) throw TrajectoryLogError(lineno, "last episode is incomplete");
  return episodes;
}

std::vector<EpisodeLog> read_trajectory_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory log " + path);
  return read_trajectory_log(in);
}

}  // namespace safemarl::env
