#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "siamreid/autodiff.hpp"

namespace siamreid {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Input index and flat coordinate of the worst mismatch.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds a scalar loss from leaf Vars holding the checked inputs. Must be a
// pure function of the input values (reseed any RNG inside).
using LossFn = std::function<Var(Graph<double>&, std::span<const Var>)>;

// |a - n| / max(1e-12, |a| + |n|) between the analytic gradient and central
// differences (f(x + eps) - f(x - eps)) / (2 eps), maximized over every
// coordinate of every input.
GradCheckResult grad_check(const LossFn& fn, const std::vector<Tensor<double>>& inputs, double eps = 1e-4);

// `floor` bounds the denominator so two vanishing gradients compare equal.
double relative_error(double analytic, double numeric, double floor = 1e-12);

struct GradCheckCase {
  std::string name;
  double tolerance;  // 1e-6 for smooth elementwise ops, 1e-4 otherwise
  std::function<GradCheckResult()> run;
};

// Every differentiable primitive on small random inputs, then a reduced-size
// copy of the micro network (pair batch through backbone, square layer and
// head) checked on a sample of parameter coordinates.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed = 0);

// Finite-difference check of the whole pair network with respect to
// `per_tensor` randomly chosen coordinates of every trainable tensor.
GradCheckResult network_grad_check(std::uint64_t seed, std::size_t per_tensor = 2, double eps = 1e-5);

}  // namespace siamreid
