#pragma once

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tdlab/approx/checkpoint.hpp"
#include "tdlab/error.hpp"
#include "tdlab/oracle/tabular.hpp"

// Plain-text tabular MDP file. Blank lines and lines starting with '#' are ignored.
//
//   tabular-mdp 1
//   states <S>
//   actions <A>
//   gamma <g>
//   terminal <S flags, 0 or 1>
//   reward                       followed by S rows of A values
//   transition                   followed by S*A rows of S values, row (s, a) at index s*A + a
//   policy                       optional; followed by S rows of A probabilities

namespace tdlab::oracle {

struct MdpFile {
  TabularMdp mdp;
  std::optional<StochasticPolicy> policy;
};

namespace detail {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream row(line);
      std::string tok;
      while (row >> tok) tokens_.push_back(tok);
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }

  std::string word() {
    if (done()) throw ConfigError("mdp file: unexpected end of input");
    return tokens_[pos_++];
  }

  void expect(const std::string& keyword) {
    const auto w = word();
    if (w != keyword) throw ConfigError("mdp file: expected '" + keyword + "', found '" + w + "'");
  }

  double number() { return approx::parse_double(word()); }

  std::size_t count() {
    const double v = number();
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) throw ConfigError("mdp file: expected a count");
    return static_cast<std::size_t>(v);
  }

 private:
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline MdpFile read_mdp(std::istream& in) {
  detail::TokenReader reader(in);
  reader.expect("tabular-mdp");
  if (reader.count() != 1) throw ConfigError("mdp file: unsupported version");
  MdpFile out;
  auto& mdp = out.mdp;
  reader.expect("states");
  mdp.n_states = reader.count();
  reader.expect("actions");
  mdp.n_actions = reader.count();
  require(mdp.n_states >= 1 && mdp.n_states <= kMaxStates && mdp.n_actions >= 1 && mdp.n_actions <= kMaxActions,
          "mdp file: state/action counts out of range");
  reader.expect("gamma");
  mdp.gamma = reader.number();
  reader.expect("terminal");
  mdp.terminal.resize(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) mdp.terminal[s] = reader.count() != 0;
  reader.expect("reward");
  mdp.reward.assign(mdp.n_states, std::vector<double>(mdp.n_actions));
  for (auto& row : mdp.reward)
    for (auto& r : row) r = reader.number();
  reader.expect("transition");
  mdp.transition.assign(mdp.n_states, std::vector<std::vector<double>>(mdp.n_actions, std::vector<double>(mdp.n_states)));
  for (auto& per_state : mdp.transition)
    for (auto& row : per_state)
      for (auto& p : row) p = reader.number();
  mdp.validate();
  if (!reader.done()) {
    reader.expect("policy");
    StochasticPolicy pol;
    pol.probs.assign(mdp.n_states, std::vector<double>(mdp.n_actions));
    for (auto& row : pol.probs)
      for (auto& p : row) p = reader.number();
    pol.validate(mdp);
    out.policy = std::move(pol);
  }
  if (!reader.done()) throw ConfigError("mdp file: trailing content");
  return out;
}

inline MdpFile read_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mdp file '" + path + "'");
  return read_mdp(in);
}

inline void write_mdp(std::ostream& out, const TabularMdp& mdp, const StochasticPolicy* policy = nullptr) {
  using approx::format_double;
  out << "tabular-mdp 1\nstates " << mdp.n_states << "\nactions " << mdp.n_actions << "\ngamma "
      << format_double(mdp.gamma) << "\nterminal";
  for (bool t : mdp.terminal) out << ' ' << (t ? 1 : 0);
  out << "\nreward\n";
  for (const auto& row : mdp.reward) {
    for (std::size_t a = 0; a < row.size(); ++a) out << (a ? " " : "") << format_double(row[a]);
    out << '\n';
  }
  out << "transition\n";
  for (const auto& per_state : mdp.transition) {
    for (const auto& row : per_state) {
      for (std::size_t n = 0; n < row.size(); ++n) out << (n ? " " : "") << format_double(row[n]);
      out << '\n';
    }
  }
  if (policy != nullptr) {
    out << "policy\n";
    for (const auto& row : policy->probs) {
      for (std::size_t a = 0; a < row.size(); ++a) out << (a ? " " : "") << format_double(row[a]);
      out << '\n';
    }
  }
}

}  // namespace tdlab::oracle
