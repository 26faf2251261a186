#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tdlab/approx/mlp.hpp"
#include "tdlab/error.hpp"

// Text checkpoint for one network:
//
//   tdlab-mlp 1
//   sizes <n0> <n1> ... <nL>
//   activations <act_1> ... <act_{L-1}>      (hidden layers only)
//   <weights of layer 0, row-major, one output row per line>
//   <biases of layer 0>
//   ... repeated per layer
//
// Values use the shortest decimal form that round-trips to the same double.

namespace tdlab::approx {

inline constexpr int kCheckpointVersion = 1;

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw ConfigError("checkpoint: bad number '" + token + "'");
  }
  return v;
}

inline void write_mlp(std::ostream& out, const Mlp& net) {
  out << "tdlab-mlp " << kCheckpointVersion << '\n' << "sizes";
  for (auto s : net.layer_sizes()) out << ' ' << s;
  out << "\nactivations";
  for (auto a : net.hidden_activations()) out << ' ' << to_string(a);
  out << '\n';
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& p = net.layer(l);
    const std::size_t in = net.layer_sizes()[l];
    const std::size_t rows = net.layer_sizes()[l + 1];
    for (std::size_t o = 0; o < rows; ++o) {
      for (std::size_t i = 0; i < in; ++i) out << (i ? " " : "") << format_double(p.weights[o * in + i]);
      out << '\n';
    }
    for (std::size_t o = 0; o < rows; ++o) out << (o ? " " : "") << format_double(p.biases[o]);
    out << '\n';
  }
}

inline Mlp read_mlp(std::istream& in) {
  std::string line;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw ConfigError("checkpoint: unexpected end of input");
    return std::istringstream(line);
  };

  {
    auto header = next_line();
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != "tdlab-mlp") throw ConfigError("checkpoint: missing tdlab-mlp header");
    if (version != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::vector<std::size_t> sizes;
  {
    auto row = next_line();
    std::string key;
    row >> key;
    if (key != "sizes") throw ConfigError("checkpoint: expected 'sizes'");
    std::size_t s = 0;
    while (row >> s) sizes.push_back(s);
  }
  std::vector<Activation> acts;
  {
    auto row = next_line();
    std::string key;
    row >> key;
    if (key != "activations") throw ConfigError("checkpoint: expected 'activations'");
    std::string name;
    while (row >> name) acts.push_back(parse_activation(name));
  }
  Mlp net(sizes, acts);
  auto read_values = [&](std::vector<double>& dst, std::size_t offset, std::size_t count) {
    auto row = next_line();
    std::string token;
    std::size_t n = 0;
    while (row >> token) {
      if (n >= count) throw ConfigError("checkpoint: too many values in row");
      dst[offset + n++] = parse_double(token);
    }
    if (n != count) throw ConfigError("checkpoint: too few values in row");
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& p = net.layer(l);
    const std::size_t cols = sizes[l];
    const std::size_t rows = sizes[l + 1];
    for (std::size_t o = 0; o < rows; ++o) read_values(p.weights, o * cols, cols);
    read_values(p.biases, 0, rows);
  }
  if (!net.all_finite()) throw ConfigError("checkpoint: non-finite parameter");
  return net;
}

}  // namespace tdlab::approx
