#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "tdlab/approx/mlp.hpp"
#include "tdlab/error.hpp"

namespace tdlab::approx {

inline constexpr double kFiniteDifferenceStep = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Scalar loss of a network output together with d(loss)/d(output).
struct LossWithGrad {
  double value = 0.0;
  std::vector<double> output_grad;
};

using OutputLoss = std::function<LossWithGrad(std::span<const double>)>;
using ParamObjective = std::function<double(const Mlp&)>;

/// Central-difference check of an arbitrary objective of the parameters against
/// a supplied analytic gradient. Returns the max relative error over parameters.
inline double grad_check(const Mlp& params, const ParamObjective& objective, const GradBuffer& analytic,
                         double step = kFiniteDifferenceStep) {
  require_shape(analytic.layers.size() == params.num_layers(), "grad_check: gradient shape mismatch");
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  analytic.for_each([&](double g) { flat.push_back(g); });
  require_shape(flat.size() == params.parameter_count(), "grad_check: gradient shape mismatch");

  Mlp probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double original = probe.parameter(i);
    probe.parameter(i) = original + step;
    const double up = objective(probe);
    probe.parameter(i) = original - step;
    const double down = objective(probe);
    probe.parameter(i) = original;
    if (!std::isfinite(up) || !std::isfinite(down)) throw DivergenceError("grad_check: non-finite loss");
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, relative_error(flat[i], numeric));
  }
  return worst;
}

/// Checks the gradient of loss(mlp(input)) with respect to every parameter.
inline double grad_check(const Mlp& params, std::span<const double> input, const OutputLoss& loss,
                         double step = kFiniteDifferenceStep) {
  Activations cache;
  params.forward(input, cache);
  const LossWithGrad at = loss(cache.result());
  if (!std::isfinite(at.value)) throw DivergenceError("grad_check: non-finite loss");
  GradBuffer analytic = params.zero_grad();
  params.backward(cache, at.output_grad, &analytic);
  std::vector<double> x(input.begin(), input.end());
  return grad_check(
      params, [&](const Mlp& p) { return loss(p.forward(x)).value; }, analytic, step);
}

}  // namespace tdlab::approx
