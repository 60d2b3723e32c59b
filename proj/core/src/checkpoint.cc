#include "safemarl/harness/checkpoint.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace safemarl::harness {

void save_checkpoint(const std::string& path, const diff::ParameterSet& params, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out << "safemarl-checkpoint 1\n"
      << "config_hash " << config_hash << "\n"
      << "param_count " << params.total_size() << "\n"
      << "tensors " << params.count() << "\n";
  char buf[32];
  for (std::uint32_t i = 0; i < params.count(); ++i) {
    const diff::ParamId id{i};
    const diff::Tensor& t = params[id];
    out << params.name(id) << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t j = 0; j < t.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", t[j]);
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out.flush()) throw CheckpointError("write failed for checkpoint " + path);
}

std::string load_checkpoint(const std::string& path, diff::ParameterSet& params) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  auto fail = [&](const std::string& what) -> void { throw CheckpointError(path + ": " + what); };
  std::string word;
  int version = 0;
  std::string hash;
  std::size_t total = 0;
  std::size_t count = 0;
  if (!(in >> word >> version) || word != "safemarl-checkpoint" || version != 1) fail("not a version 1 checkpoint");
  if (!(in >> word >> hash) || word != "config_hash") fail("missing config_hash");
  if (!(in >> word >> total) || word != "param_count") fail("missing param_count");
  if (!(in >> word >> count) || word != "tensors") fail("missing tensor count");
  if (total != params.total_size() || count != params.count()) {
    fail("layout mismatch: checkpoint has " + std::to_string(total) + " values in " + std::to_string(count) +
         " tensors, network expects " + std::to_string(params.total_size()) + " in " +
         std::to_string(params.count()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const diff::ParamId id{i};
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    if (!(in >> name >> rows >> cols)) fail("truncated tensor header");
    diff::Tensor& t = params.mutable_tensor(id);
    if (name != params.name(id) || rows != t.rows() || cols != t.cols()) {
      fail("tensor " + std::to_string(i) + " is " + name + " " + std::to_string(rows) + "x" + std::to_string(cols) +
           ", expected " + params.name(id) + " " + t.shape_string());
    }
    for (std::size_t j = 0; j < t.size(); ++j) {
      std::string tok;
      if (!(in >> tok)) fail("truncated values for " + name);
      char* end = nullptr;
      t[j] = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) fail("bad value '" + tok + "' in " + name);
    }
  }
  return hash;
}

}  // namespace safemarl::harness
