#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "siamreid/backbone.hpp"

namespace siamreid {

enum class PairLabel { same, different };

// Target distribution: (1, 0) for same, (0, 1) for different.
inline std::array<double, 2> one_hot(PairLabel s) {
  return s == PairLabel::same ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
}
inline int target_index(PairLabel s) { return s == PairLabel::same ? 0 : 1; }
std::vector<int> target_indices(std::span<const PairLabel> labels);

// Affine map from the squared-difference descriptor to (same, different)
// logits, with dropout on its input during training. Tensors live under
// "head.weight" (2 x D) and "head.bias" (2).
struct VerificationHead {
  ParamMap<float> params;
  double dropout = 0.5;

  static VerificationHead zeros(std::size_t dim, double dropout = 0.5);
  std::size_t dim() const { return params.at("head.weight").dim(1); }
  const Tensor<float>& weight() const { return params.at("head.weight"); }
  const Tensor<float>& bias() const { return params.at("head.bias"); }
};

// f_s = (f1 - f2)^2, elementwise. Parameterless and swap-symmetric.
template <class T>
Var square_layer(Graph<T>& g, Var f1, Var f2);
template <class T>
Tensor<T> square_layer(const Tensor<T>& f1, const Tensor<T>& f2);

template <class T>
struct HeadOutput {
  Var logits;       // N x 2
  Tensor<T> probs;  // softmax(logits)
};

// dropout(f_s) -> theta_s -> softmax. Head tensors are resolved through the binding.
template <class T>
HeadOutput<T> verification_forward(ParamBinding<T>& b, Var fs, double dropout, Mode mode, Rng& rng);

// Mean cross-entropy on the logits, via the fused stable softmax op.
template <class T>
CrossEntropyResult<T> verification_loss(Graph<T>& g, Var logits, std::span<const PairLabel> labels);

// Mean of -sum_i q_i log(q_hat_i) for given probabilities (N x 2).
double verification_loss(const Tensor<float>& probs, std::span<const PairLabel> labels);

// Probability-same for one pair of descriptors (length D each), eval mode.
float score_descriptors(const VerificationHead& head, std::span<const float> f1, std::span<const float> f2);

// Eval-mode probability that both 3 x H x W images show the same person.
float pair_score(const ModelParams& model, const BackboneConfig& config, const VerificationHead& head,
                 const Tensor<float>& image_a, const Tensor<float>& image_b);

}  // namespace siamreid
