#pragma once

#include <vector>

#include "tdlab/env/user_env.hpp"

namespace tdlab::agents {

/// An emitted action plus the emitting policy's log-likelihood of it.
struct PolicyOutput {
  env::SlateAction slate;
  std::vector<double> hyper_action;  // continuous backbones only
  double log_likelihood = 0.0;
  // Emitted without exploration noise: the density ratio is undefined at a
  // point mass, so importance weights for this action are fixed to 1.
  bool deterministic = false;
};

}  // namespace tdlab::agents
