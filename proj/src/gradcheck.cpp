#include "siamreid/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace siamreid {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const LossFn& fn, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.input(t, true));
  const Var loss = fn(g, vars);
  if (g.value(loss).size() != 1) {
    throw ContractViolation("grad_check: loss must be scalar, got " + shape_str(g.value(loss).shape()));
  }
  return g.value(loss)[0];
}

}  // namespace

GradCheckResult grad_check(const LossFn& fn, const std::vector<Tensor<double>>& inputs, double eps) {
  Graph<double> g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.input(t, true));
  const Var loss = fn(g, vars);
  g.backward(loss);

  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = g.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + eps;
      const double up = evaluate(fn, probe);
      probe[k][i] = x0 - eps;
      const double down = evaluate(fn, probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[i], numeric);
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace siamreid
