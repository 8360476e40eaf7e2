#pragma once

// Text checkpoint container:
//
//   wdisc-checkpoint 1
//   config <key> <value>          (zero or more)
//   param <name> <rows> <cols>    (one per parameter, in set order)
//   <rows*cols row-major values, 17 significant digits, space-separated>
//
// Values round-trip exactly through the decimal representation.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "wdisc/tensor.hpp"

namespace wdisc {

using ConfigMap = std::map<std::string, std::string>;

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, x);
  if (ec != std::errc() || ptr != end) throw IoError("malformed number: '" + s + "'");
  return x;
}

inline void save_checkpoint(const std::filesystem::path& path, const ConfigMap& config, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out << "wdisc-checkpoint 1\n";
  for (const auto& [k, v] : config) out << "config " << k << ' ' << v << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (std::size_t k = 0; k < p.value.size(); ++k) out << (k ? " " : "") << format_double(p.value[k]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

struct Checkpoint {
  ConfigMap config;
  ParameterSet params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "wdisc-checkpoint 1") throw IoError("not a checkpoint: " + path.string());
  Checkpoint ck;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      ck.config[key] = value;
    } else if (kind == "param") {
      std::string name;
      std::size_t rows = 0, cols = 0;
      if (!(ls >> name >> rows >> cols)) throw IoError("malformed parameter header in " + path.string());
      Parameter& p = ck.params.add(name, rows, cols);
      std::string values;
      if (!std::getline(in, values)) throw IoError("truncated checkpoint: " + path.string());
      std::istringstream vs(values);
      std::string tok;
      std::size_t k = 0;
      while (vs >> tok) {
        if (k >= p.value.size()) throw IoError("too many values for " + name);
        p.value[k++] = parse_double(tok);
      }
      if (k != p.value.size()) throw IoError("too few values for " + name);
    } else if (!kind.empty()) {
      throw IoError("unexpected checkpoint record '" + kind + "'");
    }
  }
  return ck;
}

}  // namespace wdisc
