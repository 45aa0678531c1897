#include "siamreid/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>

#include "siamreid/kernels.hpp"

namespace siamreid {

namespace {

using kernels::ConvGeometry;
using idx = std::ptrdiff_t;

// exp for float via Cody-Waite reduction and a degree-6 polynomial (about
// 2 ulp); written without calls so the swish loops vectorize.
inline float exp_poly(float x) {
  x = x < -87.0f ? -87.0f : x;
  x = x > 88.0f ? 88.0f : x;
  // Round to nearest via the 1.5 * 2^23 shift.
  const float k = (x * 1.44269504f + 12582912.0f) - 12582912.0f;
  const float r = x - k * 0.693145752f - k * 1.42860677e-6f;
  float p = 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const auto bits = static_cast<std::uint32_t>(static_cast<std::int32_t>(k) + 127) << 23;
  return p * std::bit_cast<float>(bits);
}

template <class T>
inline T exp_neg_abs(T x) {
  if constexpr (std::is_same_v<T, float>) {
    return exp_poly(-std::abs(x));
  } else {
    return std::exp(-std::abs(x));
  }
}

// Stable logistic: never exponentiates a positive argument.
template <class T>
inline T sigmoid(T x) {
  const T e = exp_neg_abs(x);
  const T s = T{1} / (T{1} + e);
  const T t = e * s;
  return x >= T{0} ? s : t;
}

template <class T>
T plane_sum(const T* __restrict p, std::size_t n) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

template <class T>
T plane_sq_dev(const T* __restrict p, std::size_t n, T m) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += (p[i] - m) * (p[i] - m);
  return s;
}

// sum dy * (x - m)
template <class T>
T plane_dot_centered(const T* __restrict dy, const T* __restrict x, std::size_t n, T m) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += dy[i] * (x[i] - m);
  return s;
}

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw ContractViolation(std::string(op) + ": expected a rank-" + std::to_string(rank) + " tensor, got " +
                            shape_str(shape));
  }
}

}  // namespace

template <class T>
Var Graph<T>::input(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <class T>
Var Graph<T>::parameter(const std::string& name, const Tensor<T>& value) {
  if (auto it = params_.find(name); it != params_.end()) {
    const Var v{it->second};
    if (this->value(v).shape() != value.shape()) {
      throw ContractViolation("parameter '" + name + "' re-registered with shape " + shape_str(value.shape()) +
                              ", first seen as " + shape_str(this->value(v).shape()));
    }
    return v;
  }
  const Var v = input(value, true);
  params_.emplace(name, v.id);
  return v;
}

template <class T>
std::optional<Var> Graph<T>::find_parameter(const std::string& name) const {
  if (auto it = params_.find(name); it != params_.end()) return Var{it->second};
  return std::nullopt;
}

template <class T>
Tensor<T> Graph<T>::grad(Var v) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(v.id));
  if (node.grad.empty()) return Tensor<T>::zeros(node.value.shape());
  return node.grad;
}

template <class T>
Var Graph<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.leaf = false;
  for (Var in : inputs) {
    if (in.valid() && requires_grad(in)) node.requires_grad = true;
  }
  if (record_ && node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <class T>
void Graph<T>::accumulate(Var v, Tensor<T> g) {
  Node& node = nodes_.at(static_cast<std::size_t>(v.id));
  if (!node.requires_grad) return;
  if (g.shape() != node.value.shape()) {
    throw ContractViolation("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                            shape_str(node.value.shape()));
  }
  if (node.grad.empty()) {
    node.grad = std::move(g);
    return;
  }
  auto dst = node.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
void Graph<T>::backward(Var loss) {
  if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size()) {
    throw ContractViolation("backward: unknown loss handle");
  }
  const Shape& shape = value(loss).shape();
  if (value(loss).size() != 1) {
    throw ContractViolation("backward needs a scalar loss, got shape " + shape_str(shape));
  }
  for (Node& node : nodes_) node.grad = Tensor<T>();
  if (!requires_grad(loss)) return;
  nodes_[static_cast<std::size_t>(loss.id)].grad = Tensor<T>::ones(shape);
  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, node.grad);
    if (!node.leaf) node.grad = Tensor<T>();
  }
}

template <class T>
ParamMap<T> Graph<T>::parameter_grads() const {
  ParamMap<T> out;
  for (const auto& [name, id] : params_) out.emplace(name, grad(Var{id}));
  return out;
}

template <class T>
Var conv2d(Graph<T>& g, Var input, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t padding) {
  const Tensor<T>& x = g.value(input);
  const Tensor<T>& w = g.value(weight);
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1)) {
    throw ContractViolation("conv2d: input " + shape_str(x.shape()) + " is incompatible with weight " +
                            shape_str(w.shape()));
  }
  if (bias && g.value(*bias).shape() != Shape{w.dim(0)}) {
    throw ContractViolation("conv2d: bias " + shape_str(g.value(*bias).shape()) + " does not match weight " +
                            shape_str(w.shape()));
  }
  const auto geom =
      ConvGeometry::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, padding);
  Tensor<T> y({geom.batch, geom.out_channels, geom.out_h, geom.out_w});
  std::span<const T> b = bias ? g.value(*bias).data() : std::span<const T>{};
  kernels::conv2d_forward<T>(geom, x.data(), w.data(), b, y.data());

  return g.record(std::move(y), {input, weight, bias.value_or(Var{})}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    if (gr.requires_grad(input)) {
      Tensor<T> dx(gr.value(input).shape());
      kernels::conv2d_backward_input<T>(geom, dy.data(), gr.value(weight).data(), dx.data());
      gr.accumulate(input, std::move(dx));
    }
    const bool want_b = bias && gr.requires_grad(*bias);
    if (gr.requires_grad(weight) || want_b) {
      Tensor<T> dw(gr.value(weight).shape());
      Tensor<T> db = want_b ? Tensor<T>({geom.out_channels}) : Tensor<T>();
      kernels::conv2d_backward_weight<T>(geom, gr.value(input).data(), dy.data(), dw.data(), db.data());
      gr.accumulate(weight, std::move(dw));
      if (want_b) gr.accumulate(*bias, std::move(db));
    }
  });
}

template <class T>
Var depthwise_conv2d(Graph<T>& g, Var input, Var weight, std::size_t stride, std::size_t padding) {
  const Tensor<T>& x = g.value(input);
  const Tensor<T>& w = g.value(weight);
  if (x.rank() != 4 || w.rank() != 4 || w.dim(0) != x.dim(1) || w.dim(1) != 1) {
    throw ContractViolation("depthwise_conv2d: input " + shape_str(x.shape()) + " is incompatible with weight " +
                            shape_str(w.shape()));
  }
  const auto geom =
      ConvGeometry::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(1), w.dim(2), w.dim(3), stride, padding);
  Tensor<T> y({geom.batch, geom.out_channels, geom.out_h, geom.out_w});
  kernels::depthwise_forward<T>(geom, x.data(), w.data(), y.data());

  return g.record(std::move(y), {input, weight}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    if (gr.requires_grad(input)) {
      Tensor<T> dx(gr.value(input).shape());
      kernels::depthwise_backward_input<T>(geom, dy.data(), gr.value(weight).data(), dx.data());
      gr.accumulate(input, std::move(dx));
    }
    if (gr.requires_grad(weight)) {
      Tensor<T> dw(gr.value(weight).shape());
      kernels::depthwise_backward_weight<T>(geom, gr.value(input).data(), dy.data(), dw.data());
      gr.accumulate(weight, std::move(dw));
    }
  });
}

template <class T>
BatchNormResult<T> batch_norm(Graph<T>& g, Var input, Var gamma, Var beta, const Tensor<T>& running_mean,
                              const Tensor<T>& running_var, Mode mode, double momentum, double epsilon) {
  const Tensor<T>& x = g.value(input);
  require_rank(x.shape(), 4, "batch_norm");
  const std::size_t n_batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  const Shape cshape{channels};
  if (g.value(gamma).shape() != cshape || g.value(beta).shape() != cshape || running_mean.shape() != cshape ||
      running_var.shape() != cshape) {
    throw ContractViolation("batch_norm: per-channel tensors must have shape " + shape_str(cshape) + " for input " +
                            shape_str(x.shape()));
  }
  const std::size_t count = n_batch * plane;
  if (mode == Mode::train && count < 2) {
    throw ContractViolation("batch_norm: train mode needs at least 2 values per channel, input is " +
                            shape_str(x.shape()));
  }

  std::vector<T> mean(channels), inv_std(channels);
  BatchNormResult<T> result{Var{}, running_mean, running_var};
  if (mode == Mode::train) {
    const T* xs = x.data().data();
#pragma omp parallel for schedule(static)
    for (idx c = 0; c < static_cast<idx>(channels); ++c) {
      // Vector partial sums per plane, planes accumulated in double.
      double s = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* p = xs + (n * channels + static_cast<std::size_t>(c)) * plane;
        s += plane_sum(p, plane);
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* p = xs + (n * channels + static_cast<std::size_t>(c)) * plane;
        v += plane_sq_dev(p, plane, static_cast<T>(m));
      }
      v /= static_cast<double>(count);
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(v + epsilon));
      const double unbiased = v * static_cast<double>(count) / static_cast<double>(count - 1);
      result.running_mean[c] = static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * m);
      result.running_var[c] = static_cast<T>(momentum * running_var[c] + (1.0 - momentum) * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + epsilon));
    }
  }

  const Tensor<T>& gm = g.value(gamma);
  const Tensor<T>& bt = g.value(beta);
  Tensor<T> y(x.shape());
#pragma omp parallel for schedule(static)
  for (idx nc = 0; nc < static_cast<idx>(n_batch * channels); ++nc) {
    const std::size_t c = static_cast<std::size_t>(nc) % channels;
    const T* __restrict p = x.data().data() + nc * plane;
    T* __restrict q = y.data().data() + nc * plane;
    const T scale = gm[c] * inv_std[c];
    const T mu = mean[c], shift = bt[c];
#pragma omp simd
    for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - mu) * scale + shift;
  }

  result.out = g.record(std::move(y), {input, gamma, beta}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& xv = gr.value(input);
    const Tensor<T>& gv = gr.value(gamma);
    std::vector<T> sum_dy(channels), sum_dy_xhat(channels);
    const T* xs = xv.data().data();
    const T* dys = dy.data().data();
#pragma omp parallel for schedule(static)
    for (idx c = 0; c < static_cast<idx>(channels); ++c) {
      double a = 0.0, b = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const std::size_t off = (n * channels + static_cast<std::size_t>(c)) * plane;
        a += plane_sum(dys + off, plane);
        b += plane_dot_centered(dys + off, xs + off, plane, mean[c]);
      }
      sum_dy[c] = static_cast<T>(a);
      sum_dy_xhat[c] = static_cast<T>(b * inv_std[c]);
    }
    if (gr.requires_grad(input)) {
      Tensor<T> dx(xv.shape());
      const T inv_count = T{1} / static_cast<T>(count);
      T* dxs = dx.data().data();
#pragma omp parallel for schedule(static)
      for (idx nc = 0; nc < static_cast<idx>(n_batch * channels); ++nc) {
        const std::size_t c = static_cast<std::size_t>(nc) % channels;
        const std::size_t off = static_cast<std::size_t>(nc) * plane;
        const T* __restrict xp = xs + off;
        const T* __restrict dyp = dys + off;
        T* __restrict dxp = dxs + off;
        const T k = gv[c] * inv_std[c];
        if (mode == Mode::train) {
          const T mu = mean[c], is = inv_std[c];
          const T mean_dy = inv_count * sum_dy[c];
          const T mean_dy_xhat = inv_count * sum_dy_xhat[c];
#pragma omp simd
          for (std::size_t i = 0; i < plane; ++i) dxp[i] = k * (dyp[i] - mean_dy - (xp[i] - mu) * is * mean_dy_xhat);
        } else {
#pragma omp simd
          for (std::size_t i = 0; i < plane; ++i) dxp[i] = k * dyp[i];
        }
      }
      gr.accumulate(input, std::move(dx));
    }
    gr.accumulate(gamma, Tensor<T>(Shape{channels}, std::vector<T>(sum_dy_xhat)));
    gr.accumulate(beta, Tensor<T>(Shape{channels}, std::move(sum_dy)));
  });
  return result;
}

template <class T>
Var swish(Graph<T>& g, Var input) {
  const Tensor<T>& x = g.value(input);
  Tensor<T> y(x.shape());
  const idx n = static_cast<idx>(x.size());
  {
    const T* __restrict xp = x.data().data();
    T* __restrict yp = y.data().data();
#pragma omp parallel for simd schedule(static)
    for (idx i = 0; i < n; ++i) yp[i] = xp[i] * sigmoid(xp[i]);
  }
  return g.record(std::move(y), {input}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& xv = gr.value(input);
    Tensor<T> dx(xv.shape());
    const T* __restrict xp = xv.data().data();
    const T* __restrict dyp = dy.data().data();
    T* __restrict dxp = dx.data().data();
#pragma omp parallel for simd schedule(static)
    for (idx i = 0; i < n; ++i) {
      const T s = sigmoid(xp[i]);
      dxp[i] = dyp[i] * (s + xp[i] * s * (T{1} - s));
    }
    gr.accumulate(input, std::move(dx));
  });
}

template <class T>
Var global_avg_pool(Graph<T>& g, Var input) {
  const Tensor<T>& x = g.value(input);
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t rows = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += x[r * plane + i];
    y[r] = s / static_cast<T>(plane);
  }
  return g.record(std::move(y), {input}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T> dx(gr.value(input).shape());
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t r = 0; r < rows; ++r) {
      const T v = dy[r] * inv;
      std::fill_n(dx.data().begin() + static_cast<idx>(r * plane), plane, v);
    }
    gr.accumulate(input, std::move(dx));
  });
}

template <class T>
Var linear(Graph<T>& g, Var input, Var weight, std::optional<Var> bias) {
  const Tensor<T>& x = g.value(input);
  const Tensor<T>& w = g.value(weight);
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw ContractViolation("linear: input " + shape_str(x.shape()) + " is incompatible with weight " +
                            shape_str(w.shape()));
  }
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  if (bias && g.value(*bias).shape() != Shape{dout}) {
    throw ContractViolation("linear: bias " + shape_str(g.value(*bias).shape()) + " does not match weight " +
                            shape_str(w.shape()));
  }
  Tensor<T> y({n, dout});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < dout; ++o) {
      T s = bias ? g.value(*bias)[o] : T{0};
      for (std::size_t k = 0; k < din; ++k) s += x[i * din + k] * w[o * din + k];
      y[i * dout + o] = s;
    }
  }
  return g.record(std::move(y), {input, weight, bias.value_or(Var{})}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& xv = gr.value(input);
    const Tensor<T>& wv = gr.value(weight);
    if (gr.requires_grad(input)) {
      Tensor<T> dx(xv.shape());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < dout; ++o) {
          const T d = dy[i * dout + o];
          for (std::size_t k = 0; k < din; ++k) dx[i * din + k] += d * wv[o * din + k];
        }
      gr.accumulate(input, std::move(dx));
    }
    if (gr.requires_grad(weight)) {
      Tensor<T> dw(wv.shape());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < dout; ++o) {
          const T d = dy[i * dout + o];
          for (std::size_t k = 0; k < din; ++k) dw[o * din + k] += d * xv[i * din + k];
        }
      gr.accumulate(weight, std::move(dw));
    }
    if (bias && gr.requires_grad(*bias)) {
      Tensor<T> db({dout});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < dout; ++o) db[o] += dy[i * dout + o];
      gr.accumulate(*bias, std::move(db));
    }
  });
}

template <class T>
Var dropout(Graph<T>& g, Var input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ContractViolation("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) return input;
  const Tensor<T>& x = g.value(input);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> mask(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < p ? T{0} : keep_scale;
    y[i] = x[i] * mask[i];
  }
  return g.record(std::move(y), {input}, [=, mask = std::move(mask)](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
    gr.accumulate(input, std::move(dx));
  });
}

template <class T>
Var squared_difference(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.shape() != bv.shape()) {
    throw ContractViolation("squared difference of mismatched shapes " + shape_str(av.shape()) + " and " +
                            shape_str(bv.shape()));
  }
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T d = av[i] - bv[i];
    y[i] = d * d;
  }
  return g.record(std::move(y), {a, b}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& x1 = gr.value(a);
    const Tensor<T>& x2 = gr.value(b);
    Tensor<T> da(dy.shape()), db(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T t = T{2} * (x1[i] - x2[i]) * dy[i];
      da[i] = t;
      db[i] = -t;
    }
    gr.accumulate(a, std::move(da));
    gr.accumulate(b, std::move(db));
  });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.shape() != bv.shape()) {
    throw ContractViolation("add of mismatched shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return g.record(std::move(y), {a, b}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    gr.accumulate(a, dy);
    gr.accumulate(b, dy);
  });
}

template <class T>
Var sum(Graph<T>& g, Var input) {
  const Tensor<T>& x = g.value(input);
  T s = 0;
  for (T v : x.data()) s += v;
  return g.record(Tensor<T>({1}, s), {input}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    gr.accumulate(input, Tensor<T>::full(gr.value(input).shape(), dy[0]));
  });
}

template <class T>
Var weighted_sum(Graph<T>& g, Var input, const Tensor<T>& weights) {
  const Tensor<T>& x = g.value(input);
  if (x.shape() != weights.shape()) {
    throw ContractViolation("weighted_sum: weights " + shape_str(weights.shape()) + " do not match input " +
                            shape_str(x.shape()));
  }
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  return g.record(Tensor<T>({1}, s), {input}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T> dx(weights.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = weights[i] * dy[0];
    gr.accumulate(input, std::move(dx));
  });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    const T m = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j] - m));
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - m)) / s);
  }
  return out;
}

template <class T>
CrossEntropyResult<T> softmax_cross_entropy(Graph<T>& g, Var logits, std::span<const int> targets) {
  const Tensor<T>& z = g.value(logits);
  if (z.rank() != 2 || z.dim(1) != 2) {
    throw ContractViolation("softmax_cross_entropy expects N x 2 logits, got " + shape_str(z.shape()));
  }
  const std::size_t n = z.dim(0);
  if (targets.size() != n) {
    throw ContractViolation("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(n) + " rows");
  }
  for (int t : targets) {
    if (t != 0 && t != 1) throw ContractViolation("softmax_cross_entropy: target index must be 0 or 1");
  }
  Tensor<T> probs = softmax(z);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z[i * 2], b = z[i * 2 + 1];
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    total += lse - (targets[i] == 0 ? a : b);
  }
  const T loss = static_cast<T>(total / static_cast<double>(n));
  std::vector<int> tgt(targets.begin(), targets.end());
  Var out = g.record(Tensor<T>({1}, loss), {logits}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T> dz(Shape{n, 2});
    const T scale = dy[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        const T q = static_cast<int>(j) == tgt[i] ? T{1} : T{0};
        dz[i * 2 + j] = (probs[i * 2 + j] - q) * scale;
      }
    }
    gr.accumulate(logits, std::move(dz));
  });
  return {out, std::move(probs)};
}

#define SIAMREID_INSTANTIATE_OPS(T)                                                                                   \
  template class Graph<T>;                                                                                            \
  template Var conv2d<T>(Graph<T>&, Var, Var, std::optional<Var>, std::size_t, std::size_t);                          \
  template Var depthwise_conv2d<T>(Graph<T>&, Var, Var, std::size_t, std::size_t);                                    \
  template BatchNormResult<T> batch_norm<T>(Graph<T>&, Var, Var, Var, const Tensor<T>&, const Tensor<T>&, Mode,       \
                                            double, double);                                                          \
  template Var swish<T>(Graph<T>&, Var);                                                                              \
  template Var global_avg_pool<T>(Graph<T>&, Var);                                                                    \
  template Var linear<T>(Graph<T>&, Var, Var, std::optional<Var>);                                                    \
  template Var dropout<T>(Graph<T>&, Var, double, Mode, Rng&);                                                        \
  template Var squared_difference<T>(Graph<T>&, Var, Var);                                                            \
  template Var add<T>(Graph<T>&, Var, Var);                                                                           \
  template Var sum<T>(Graph<T>&, Var);                                                                                \
  template Var weighted_sum<T>(Graph<T>&, Var, const Tensor<T>&);                                                     \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                                    \
  template CrossEntropyResult<T> softmax_cross_entropy<T>(Graph<T>&, Var, std::span<const int>);

SIAMREID_INSTANTIATE_OPS(float)
SIAMREID_INSTANTIATE_OPS(double)

#undef SIAMREID_INSTANTIATE_OPS

}  // namespace siamreid
