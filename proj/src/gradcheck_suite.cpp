#include <algorithm>
#include <cmath>

#include "siamreid/backbone.hpp"
#include "siamreid/gradcheck.hpp"
#include "siamreid/head.hpp"

namespace siamreid {

namespace {

constexpr double kSmooth = 1e-6;
constexpr double kDefault = 1e-4;

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Swish' vanishes near x = -1.2785, where a relative error only measures
// finite-difference round-off; sample points are pushed out of that band.
Tensor<double> swish_points(Shape shape, Rng& rng) {
  Tensor<double> t = random_tensor(std::move(shape), rng, 2.0);
  for (double& v : t.data())
    if (std::abs(v + 1.2785) < 0.1) v += v < -1.2785 ? -0.1 : 0.1;
  return t;
}

// Random projection so every output coordinate reaches the loss with its own weight.
Var project(Graph<double>& g, Var v, std::uint64_t seed) {
  Rng rng(seed);
  return weighted_sum(g, v, random_tensor(g.value(v).shape(), rng));
}

BackboneConfig tiny_network() {
  BackboneConfig c = BackboneConfig::micro();
  c.input_height = 32;
  c.input_width = 16;
  c.descriptor_dim = 8;
  for (auto& s : c.stages) s.channels = std::max(4, s.channels / 4);
  c.stem_channels = 4;
  return c;
}

}  // namespace

GradCheckResult network_grad_check(std::uint64_t seed, std::size_t per_tensor, double eps) {
  const BackboneConfig config = tiny_network();
  ParamMap<double> params;
  for (const auto& [name, t] : build_model(config, seed)) params.emplace(name, t.cast<double>());
  Rng rng(derive_seed(seed, "gradcheck"));
  const auto d = static_cast<std::size_t>(config.descriptor_dim);
  params.emplace("head.weight", random_tensor({2, d}, rng, 0.5));
  params.emplace("head.bias", random_tensor({2}, rng, 0.1));
  const auto h = static_cast<std::size_t>(config.input_height);
  const auto w = static_cast<std::size_t>(config.input_width);
  const Tensor<double> x1 = random_tensor({3, 3, h, w}, rng);
  const Tensor<double> x2 = random_tensor({3, 3, h, w}, rng);
  const std::vector<PairLabel> labels{PairLabel::same, PairLabel::different, PairLabel::same};

  auto loss_of = [&](Graph<double>& g) {
    ParamBinding<double> b(g, {&params});
    const Var f1 = forward_features(b, config, g.input(x1), Mode::train);
    const Var f2 = forward_features(b, config, g.input(x2), Mode::train);
    Rng mask(7);
    const HeadOutput<double> out = verification_forward(b, square_layer(g, f1, f2), 0.5, Mode::train, mask);
    return verification_loss(g, out.logits, std::span<const PairLabel>(labels)).loss;
  };

  Graph<double> g;
  const Var loss = loss_of(g);
  g.backward(loss);
  const ParamMap<double> grads = g.parameter_grads();

  GradCheckResult result;
  std::size_t input = 0;
  for (const auto& [name, grad] : grads) {
    Tensor<double>& p = params.at(name);
    for (std::size_t k = 0; k < std::min(per_tensor, p.size()); ++k) {
      const std::size_t i = rng.below(p.size());
      const double x0 = p[i];
      auto at = [&](double v) {
        p[i] = v;
        Graph<double> probe(false);
        return probe.value(loss_of(probe))[0];
      };
      const double numeric = (at(x0 + eps) - at(x0 - eps)) / (2.0 * eps);
      p[i] = x0;
      // Some coordinates are exactly flat (a BN shift feeding another BN), where
      // the difference quotient is pure rounding noise.
      const double err = relative_error(grad[i], numeric, 1e-6);
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result = {err, result.coordinates, input, i, grad[i], numeric};
      }
    }
    ++input;
  }
  return result;
}

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed) {
  using Inputs = std::vector<Tensor<double>>;
  std::vector<GradCheckCase> cases;
  auto add_case = [&](std::string name, double tol, Inputs inputs, LossFn fn) {
    cases.push_back({std::move(name), tol, [inputs = std::move(inputs), fn = std::move(fn)] {
                       return grad_check(fn, inputs);
                     }});
  };
  Rng rng(derive_seed(seed, "gradcheck"));
  const std::uint64_t proj = rng.next();

  add_case("conv2d", kDefault,
           {random_tensor({2, 3, 6, 5}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) {
             return project(g, conv2d(g, v[0], v[1], v[2], 1, 1), proj);
           });
  add_case("conv2d_stride2", kDefault, {random_tensor({2, 3, 7, 6}, rng), random_tensor({4, 3, 3, 3}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) {
             return project(g, conv2d(g, v[0], v[1], std::nullopt, 2, 1), proj);
           });
  add_case("depthwise_conv2d", kDefault, {random_tensor({2, 3, 6, 5}, rng), random_tensor({3, 1, 3, 3}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) {
             return project(g, depthwise_conv2d(g, v[0], v[1], 1, 1), proj);
           });
  add_case("depthwise_conv2d_k5s2", kDefault, {random_tensor({2, 2, 9, 7}, rng), random_tensor({2, 1, 5, 5}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) {
             return project(g, depthwise_conv2d(g, v[0], v[1], 2, 2), proj);
           });
  add_case("batch_norm", kDefault,
           {random_tensor({3, 2, 3, 2}, rng), random_tensor({2}, rng), random_tensor({2}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) {
             const Tensor<double> mean = Tensor<double>::zeros({2});
             const Tensor<double> var = Tensor<double>::ones({2});
             return project(g, batch_norm(g, v[0], v[1], v[2], mean, var, Mode::train, 0.99, 1e-3).out, proj);
           });
  add_case("swish", kSmooth, {swish_points({2, 3, 4, 4}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) { return project(g, swish(g, v[0]), proj); });
  add_case("global_avg_pool", kSmooth, {random_tensor({2, 3, 4, 3}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) { return project(g, global_avg_pool(g, v[0]), proj); });
  add_case("linear", kSmooth, {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) { return project(g, linear(g, v[0], v[1], v[2]), proj); });
  add_case("dropout", kSmooth, {random_tensor({4, 6}, rng)}, [proj](Graph<double>& g, std::span<const Var> v) {
    Rng mask(proj);
    return project(g, dropout(g, v[0], 0.5, Mode::train, mask), proj);
  });
  add_case("square_layer", kSmooth, {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) { return project(g, square_layer(g, v[0], v[1]), proj); });
  add_case("add", kSmooth, {random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)},
           [proj](Graph<double>& g, std::span<const Var> v) { return project(g, add(g, v[0], v[1]), proj); });
  add_case("softmax_cross_entropy", kSmooth, {random_tensor({4, 2}, rng, 2.0)},
           [](Graph<double>& g, std::span<const Var> v) {
             static const int targets[] = {0, 1, 1, 0};
             return softmax_cross_entropy(g, v[0], std::span<const int>(targets)).loss;
           });
  cases.push_back({"micro_network", kDefault, [seed] { return network_grad_check(seed); }});
  return cases;
}

}  // namespace siamreid
