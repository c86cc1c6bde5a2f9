#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mpcnn/tensor.hpp"

namespace mpcnn {

/// Finite-difference gradient checking in 64-bit arithmetic.
///
/// The error reported for a tensor is the largest element-wise
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradcheckOptions {
  double epsilon = 1e-3;
  double floor = 1e-6;
  double tolerance = 1e-4;
};

double relative_error(double analytic, double numeric, double floor);

/// Central differences of `loss` w.r.t. every element of `x` (perturbed in place
/// and restored). Returns the max relative error against `analytic`.
double check_gradient(Tensor64& x, const Tensor64& analytic, const std::function<double()>& loss,
                      const GradcheckOptions& opt = {});

struct GradcheckResult {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a ReLU/pool kink
  bool passed = false;
};

/// As above, but `pattern` is evaluated right after each `loss` call; a
/// coordinate is skipped when the +eps or -eps evaluation lands on a different
/// piecewise-linear region than the unperturbed point.
void check_gradient_piecewise(Tensor64& x, const Tensor64& analytic, const std::function<double()>& loss,
                              const std::function<std::uint64_t()>& pattern, std::uint64_t base_pattern,
                              const GradcheckOptions& opt, GradcheckResult& result);

/// One randomized small instance per layer type (conv, maxpool, relu, lrn,
/// fully connected, dropout with a frozen mask, concat, softmax log-loss).
std::vector<GradcheckResult> run_layer_gradchecks(std::uint64_t seed, const GradcheckOptions& opt = {});

/// Whole-network check on a tiny two-path model (two conv blocks per path,
/// 8x8 inputs, 3 classes), covering every parameter tensor.
GradcheckResult run_network_gradcheck(std::uint64_t seed, const GradcheckOptions& opt = {});

}  // namespace mpcnn
