#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <vector>

#include "tdlab/agents/policy_output.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/error.hpp"
#include "tdlab/random.hpp"

namespace tdlab::buffer {

/// One MRP step. `action.log_likelihood` is log p(a|s) under the behavior
/// policy at emission time and is never recomputed afterwards.
struct Transition {
  env::Observation obs;
  agents::PolicyOutput action;
  double reward = 0.0;
  env::Observation next_obs;
  bool done = false;
  std::uint64_t episode_id = 0;
  std::size_t step_index = 0;
};

/// Fixed-capacity FIFO ring of transitions with uniform sampling with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    require(capacity > 0, "replay buffer capacity must be positive");
    storage_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }
  std::uint64_t insertions() const { return insertions_; }

  void push(Transition t) {
    require(std::isfinite(t.reward), "transition reward must be finite");
    require(std::isfinite(t.action.log_likelihood), "transition log-likelihood must be finite");
    require(!t.obs.values.empty() && t.obs.values.size() == t.next_obs.values.size(),
            "transition observations must be non-empty and equally sized");
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++insertions_;
  }

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const {
    require(i < storage_.size(), "replay buffer index out of range");
    return storage_[(head_ + i) % storage_.size()];
  }

  std::vector<const Transition*> sample(std::size_t batch_size, Rng& rng) const {
    require(!storage_.empty(), "cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
    std::vector<const Transition*> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(&storage_[pick(rng)]);
    return batch;
  }

  /// Debug dump, oldest first: one transition per row.
  void write_csv(std::ostream& out) const {
    out << "episode,step,items,hyper_action,log_likelihood,reward,done\n";
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& t = at(i);
      out << t.episode_id << ',' << t.step_index << ',';
      for (std::size_t k = 0; k < t.action.slate.items.size(); ++k) out << (k ? " " : "") << t.action.slate.items[k];
      out << ',';
      for (std::size_t k = 0; k < t.action.hyper_action.size(); ++k) out << (k ? " " : "") << t.action.hyper_action[k];
      out << ',' << t.action.log_likelihood << ',' << t.reward << ',' << (t.done ? 1 : 0) << '\n';
    }
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // index of the oldest element once full
  std::uint64_t insertions_ = 0;
};

}  // namespace tdlab::buffer
