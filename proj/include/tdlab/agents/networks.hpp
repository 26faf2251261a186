#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tdlab/approx/mlp.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/error.hpp"

namespace tdlab::agents {

inline std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Evaluates an item-level critic q(obs ++ e_i) for every item at once. The
/// item half of the first layer is precomputed per network snapshot, so the
/// per-state cost is one hidden stack per item instead of a full forward pass.
class ItemScorer {
 public:
  ItemScorer(const approx::Mlp& net, const env::ItemEmbeddings& items) : net_(&net), items_(&items) {
    const std::size_t dim = items.dim();
    require_shape(net.input_size() > dim, "ItemScorer: critic input too small for item embeddings");
    obs_size_ = net.input_size() - dim;
    const auto& first = net.layer(0);
    const std::size_t in = net.input_size();
    const std::size_t h = net.layer_sizes()[1];
    item_part_.assign(items.size() * h, 0.0);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto e = items.row(i);
      for (std::size_t o = 0; o < h; ++o) {
        const double* row = first.weights.data() + o * in + obs_size_;
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) acc += row[d] * e[d];
        item_part_[i * h + o] = acc;
      }
    }
  }

  std::vector<double> scores(std::span<const double> obs) const {
    const auto& net = *net_;
    require_shape(obs.size() == obs_size_, "ItemScorer: observation size mismatch");
    const std::size_t in = net.input_size();
    const std::size_t h = net.layer_sizes()[1];
    const auto& first = net.layer(0);
    std::vector<double> obs_part(h);
    for (std::size_t o = 0; o < h; ++o) {
      const double* row = first.weights.data() + o * in;
      double acc = first.biases[o];
      for (std::size_t j = 0; j < obs_size_; ++j) acc += row[j] * obs[j];
      obs_part[o] = acc;
    }
    std::vector<double> out(items_->size());
    std::vector<double> x(h);
    std::vector<double> y;
    for (std::size_t i = 0; i < items_->size(); ++i) {
      const approx::Activation act0 = net.activation(0);
      x.resize(h);
      for (std::size_t o = 0; o < h; ++o) x[o] = approx::activate(act0, obs_part[o] + item_part_[i * h + o]);
      for (std::size_t l = 1; l < net.num_layers(); ++l) {
        const std::size_t lin = net.layer_sizes()[l];
        const std::size_t lout = net.layer_sizes()[l + 1];
        const auto& p = net.layer(l);
        const approx::Activation act = net.activation(l);
        y.resize(lout);
        for (std::size_t o = 0; o < lout; ++o) {
          y[o] = approx::activate(act, p.biases[o] + approx::dot(p.weights.data() + o * lin, x.data(), lin));
        }
        x.swap(y);
      }
      out[i] = x[0];
    }
    return out;
  }

 private:
  const approx::Mlp* net_;
  const env::ItemEmbeddings* items_;
  std::size_t obs_size_ = 0;
  std::vector<double> item_part_;
};

/// Forward caches of q(obs ++ e_k) for each slate item; Q(s, slate) is their mean.
struct SlateQ {
  std::vector<approx::Activations> caches;
  double value = 0.0;

  void evaluate(const approx::Mlp& net, std::span<const double> obs, const env::ItemEmbeddings& items,
                std::span<const std::size_t> slate) {
    caches.resize(slate.size());
    value = 0.0;
    for (std::size_t k = 0; k < slate.size(); ++k) {
      const auto input = concat(obs, items.row(slate[k]));
      net.forward(input, caches[k]);
      value += caches[k].result()[0];
    }
    value /= static_cast<double>(slate.size());
  }

  /// Adds d(upstream * Q)/d(params) into grads.
  void backward(const approx::Mlp& net, double upstream, approx::GradBuffer& grads) const {
    const double per_item = upstream / static_cast<double>(caches.size());
    for (const auto& c : caches) net.backward(c, std::span<const double>(&per_item, 1), &grads);
  }
};

}  // namespace tdlab::agents
