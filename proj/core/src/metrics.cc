#include "safemarl/harness/metrics.h"

#include <charconv>
#include <cstdio>
#include <istream>
#include <sstream>

namespace safemarl::harness {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
bool parse(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path, std::uint64_t seed, const std::string& config_hash)
    : path_(path), out_(path) {
  if (!out_) throw MetricsError("cannot write metrics file " + path);
  out_ << "# seed=" << seed << "\n# config_hash=" << config_hash << "\n" << kMetricsHeader << "\n";
  out_.flush();
  if (!out_) throw MetricsError("write failed for metrics file " + path);
}

void MetricsWriter::write(const train::MetricsRow& r) {
  out_ << r.epoch << ',' << r.steps << ',' << format_double(r.mean_return) << ',' << format_double(r.win_rate)
       << ',' << format_double(r.deaths) << ',' << format_double(r.l_q) << ',' << format_double(r.l_b) << ','
       << format_double(r.conflict_frac) << ',' << format_double(r.epsilon) << '\n';
  out_.flush();
  if (!out_) throw MetricsError("write failed for metrics file " + path_);
}

void write_metrics(const std::vector<train::MetricsRow>& rows, const std::string& path, std::uint64_t seed,
                   const std::string& config_hash) {
  MetricsWriter w(path, seed, config_hash);
  for (const auto& r : rows) w.write(r);
}

MetricsFile read_metrics(std::istream& in) {
  MetricsFile f;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  auto fail = [&](const std::string& what) {
    throw MetricsError("metrics line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# seed=", 0) == 0 && !parse(line.substr(7), f.seed)) fail("bad seed comment");
      if (line.rfind("# config_hash=", 0) == 0) f.config_hash = line.substr(14);
      continue;
    }
    if (!header) {
      if (line != kMetricsHeader) fail("unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 9) fail("expected 9 columns, found " + std::to_string(cells.size()));
    train::MetricsRow r;
    const bool ok = parse(cells[0], r.epoch) && parse(cells[1], r.steps) && parse(cells[2], r.mean_return) &&
                    parse(cells[3], r.win_rate) && parse(cells[4], r.deaths) && parse(cells[5], r.l_q) &&
                    parse(cells[6], r.l_b) && parse(cells[7], r.conflict_frac) && parse(cells[8], r.epsilon);
    if (!ok) fail("malformed value");
    if (r.win_rate < 0.0 || r.win_rate > 1.0) fail("win_rate outside [0,1]");
    if (!f.rows.empty() && r.epoch <= f.rows.back().epoch) fail("epochs out of order");
    f.rows.push_back(r);
  }
  if (!header) throw MetricsError("metrics file has no header");
  return f;
}

MetricsFile read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricsError("cannot open metrics file " + path);
  return read_metrics(in);
}

}  // namespace safemarl::harness
