#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "siamreid/rng.hpp"
#include "siamreid/tensor.hpp"

namespace siamreid {

enum class Mode { train, eval };

// Handle to a value recorded in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
  friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

template <class T>
using ParamMap = std::map<std::string, Tensor<T>>;

// Tape of operation records. Records are appended in execution order, so
// walking them backwards is a reverse topological traversal. A graph is
// confined to one thread.
template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  // With record = false no backward closures or saved values are kept.
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var input(Tensor<T> value, bool requires_grad = false);

  // Registers a named trainable leaf. A second call with the same name
  // returns the same Var, so every use shares one record.
  Var parameter(const std::string& name, const Tensor<T>& value);
  std::optional<Var> find_parameter(const std::string& name) const;
  const std::map<std::string, int>& parameters() const { return params_; }

  const Tensor<T>& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient accumulated for v; zeros when v never received one.
  Tensor<T> grad(Var v) const;

  // Appends an op record. The closure is dropped unless some input needs a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward);

  // grad(v) += g. No-op when v does not require a gradient.
  void accumulate(Var v, Tensor<T> g);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  void backward(Var loss);

  // Gradient of each registered parameter (zeros for unreachable ones).
  ParamMap<T> parameter_grads() const;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool leaf = true;
    Backward backward;
  };

  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
  bool record_;
};

template <class T>
Var conv2d(Graph<T>& g, Var input, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t padding);

template <class T>
Var depthwise_conv2d(Graph<T>& g, Var input, Var weight, std::size_t stride, std::size_t padding);

template <class T>
struct BatchNormResult {
  Var out;
  // Running statistics after this call (unchanged in eval mode).
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

// Per-channel normalization. Train mode uses batch statistics and blends
// them into the running ones as running = momentum * running + (1 - momentum) * batch.
template <class T>
BatchNormResult<T> batch_norm(Graph<T>& g, Var input, Var gamma, Var beta, const Tensor<T>& running_mean,
                              const Tensor<T>& running_var, Mode mode, double momentum, double epsilon);

template <class T>
Var swish(Graph<T>& g, Var input);

template <class T>
Var global_avg_pool(Graph<T>& g, Var input);

// y = x W^T + b for x: N x Din, W: Dout x Din.
template <class T>
Var linear(Graph<T>& g, Var input, Var weight, std::optional<Var> bias);

// Inverted dropout; identity in eval mode or when p == 0.
template <class T>
Var dropout(Graph<T>& g, Var input, double p, Mode mode, Rng& rng);

template <class T>
Var squared_difference(Graph<T>& g, Var a, Var b);

template <class T>
Var add(Graph<T>& g, Var a, Var b);

// Scalar sum of all elements.
template <class T>
Var sum(Graph<T>& g, Var input);

// Scalar sum of input * weights for a constant weight tensor of the same shape.
template <class T>
Var weighted_sum(Graph<T>& g, Var input, const Tensor<T>& weights);

template <class T>
struct CrossEntropyResult {
  Var loss;         // scalar mean over rows
  Tensor<T> probs;  // N x 2 softmax probabilities
};

// Mean over rows of -log softmax(logits)[target]; targets are column indices.
template <class T>
CrossEntropyResult<T> softmax_cross_entropy(Graph<T>& g, Var logits, std::span<const int> targets);

// Row-wise max-shifted softmax of an N x K tensor.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace siamreid
