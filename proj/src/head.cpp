#include "siamreid/head.hpp"

#include <cmath>

namespace siamreid {

std::vector<int> target_indices(std::span<const PairLabel> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (PairLabel s : labels) out.push_back(target_index(s));
  return out;
}

VerificationHead VerificationHead::zeros(std::size_t dim, double dropout) {
  if (dim == 0) throw ContractViolation("verification head needs a positive descriptor dimension");
  VerificationHead h;
  h.params.emplace("head.weight", Tensor<float>::zeros({2, dim}));
  h.params.emplace("head.bias", Tensor<float>::zeros({2}));
  h.dropout = dropout;
  return h;
}

template <class T>
Var square_layer(Graph<T>& g, Var f1, Var f2) {
  if (g.value(f1).shape() != g.value(f2).shape()) {
    throw ContractViolation("square layer: descriptor shapes differ, " + shape_str(g.value(f1).shape()) + " vs " +
                            shape_str(g.value(f2).shape()));
  }
  return squared_difference(g, f1, f2);
}

template <class T>
Tensor<T> square_layer(const Tensor<T>& f1, const Tensor<T>& f2) {
  if (f1.shape() != f2.shape()) {
    throw ContractViolation("square layer: descriptor shapes differ, " + shape_str(f1.shape()) + " vs " +
                            shape_str(f2.shape()));
  }
  Tensor<T> out(f1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T d = f1[i] - f2[i];
    out[i] = d * d;
  }
  return out;
}

template <class T>
HeadOutput<T> verification_forward(ParamBinding<T>& b, Var fs, double dropout_p, Mode mode, Rng& rng) {
  Graph<T>& g = b.graph();
  const Var w = b.get("head.weight");
  const Tensor<T>& x = g.value(fs);
  if (x.rank() != 2 || x.dim(1) != g.value(w).dim(1)) {
    throw ContractViolation("verification head expects N x " + std::to_string(g.value(w).dim(1)) +
                            " input, got " + shape_str(x.shape()));
  }
  const Var dropped = dropout(g, fs, dropout_p, mode, rng);
  const Var logits = linear(g, dropped, w, b.get("head.bias"));
  return {logits, softmax(g.value(logits))};
}

template <class T>
CrossEntropyResult<T> verification_loss(Graph<T>& g, Var logits, std::span<const PairLabel> labels) {
  const auto targets = target_indices(labels);
  return softmax_cross_entropy(g, logits, std::span<const int>(targets));
}

double verification_loss(const Tensor<float>& probs, std::span<const PairLabel> labels) {
  if (probs.rank() != 2 || probs.dim(1) != 2 || probs.dim(0) != labels.size()) {
    throw ContractViolation("verification loss: probabilities " + shape_str(probs.shape()) + " do not match " +
                            std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto q = one_hot(labels[i]);
    for (std::size_t j = 0; j < 2; ++j) {
      if (q[j] != 0.0) total -= q[j] * std::log(static_cast<double>(probs[i * 2 + j]));
    }
  }
  return total / static_cast<double>(labels.size());
}

float score_descriptors(const VerificationHead& head, std::span<const float> f1, std::span<const float> f2) {
  const std::size_t d = head.dim();
  if (f1.size() != d || f2.size() != d) {
    throw ContractViolation("score: descriptors of length " + std::to_string(f1.size()) + "/" +
                            std::to_string(f2.size()) + " for a head of width " + std::to_string(d));
  }
  const Tensor<float>& w = head.weight();
  float logit[2] = {head.bias()[0], head.bias()[1]};
  for (std::size_t k = 0; k < d; ++k) {
    const float diff = f1[k] - f2[k];
    const float fs = diff * diff;
    logit[0] += fs * w[k];
    logit[1] += fs * w[d + k];
  }
  const Tensor<float> probs = softmax(Tensor<float>({1, 2}, std::vector<float>{logit[0], logit[1]}));
  return probs[0];
}

float pair_score(const ModelParams& model, const BackboneConfig& config, const VerificationHead& head,
                 const Tensor<float>& image_a, const Tensor<float>& image_b) {
  auto as_batch = [](const Tensor<float>& img) {
    if (img.rank() != 3) throw ContractViolation("pair_score expects 3 x H x W images, got " + shape_str(img.shape()));
    return img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  };
  const Tensor<float> fa = extract_descriptors(model, config, as_batch(image_a));
  const Tensor<float> fb = extract_descriptors(model, config, as_batch(image_b));
  return score_descriptors(head, fa.data(), fb.data());
}

#define SIAMREID_INSTANTIATE_HEAD(T)                                                                      \
  template Var square_layer<T>(Graph<T>&, Var, Var);                                                      \
  template Tensor<T> square_layer<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template HeadOutput<T> verification_forward<T>(ParamBinding<T>&, Var, double, Mode, Rng&);              \
  template CrossEntropyResult<T> verification_loss<T>(Graph<T>&, Var, std::span<const PairLabel>);

SIAMREID_INSTANTIATE_HEAD(float)
SIAMREID_INSTANTIATE_HEAD(double)

#undef SIAMREID_INSTANTIATE_HEAD

}  // namespace siamreid
