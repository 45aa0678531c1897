#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "siamreid/autodiff.hpp"

namespace siamreid {

// One stage of MBConv blocks sharing kernel size, expansion and width.
struct StageSpec {
  int kernel = 3;     // 3 or 5
  int stride = 1;     // applied by the first block only
  int expansion = 1;  // >= 1; 1 skips the expand convolution
  int channels = 16;
  int layers = 1;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct BackboneConfig {
  int stem_channels = 16;
  std::vector<StageSpec> stages;
  int descriptor_dim = 64;
  double width_mult = 1.0;
  double depth_mult = 1.0;
  int input_height = 160;
  int input_width = 80;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;

  // Stem + one per MBConv block + head.
  int conv_layer_count() const;

  // Throws ContractViolation on a malformed stage table.
  void validate() const;

  // Stem 16 (stride 2); k3s1e1x16x1, k3s2e4x24x2, k5s2e4x40x2, k3s2e4x64x2; head conv to D = 64.
  static BackboneConfig micro();

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

// "k3s1e1c16n1;k3s2e4c24n2" <-> stage list.
std::string format_stages(const std::vector<StageSpec>& stages);
std::vector<StageSpec> parse_stages(const std::string& text);

// Nearest multiple of 8, bumped up one step if that falls below 90% of the value.
int round_channels(double channels);

// Compound width/depth scaling. Resolution is left to the caller.
BackboneConfig scale_config(const BackboneConfig& base, double width_mult, double depth_mult);

// A single MBConv block resolved from the stage table.
struct BlockSpec {
  std::string prefix;  // "blocks.<stage>.<layer>"
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int expansion = 1;

  int hidden_channels() const { return in_channels * expansion; }
  bool has_skip() const { return stride == 1 && in_channels == out_channels; }
};

std::vector<BlockSpec> block_specs(const BackboneConfig& config);

using ModelParams = ParamMap<float>;

bool is_running_stat(const std::string& name);

// Fan-in scaled normal convolution weights, unit BN scale, zero shift,
// running mean 0 / var 1. Deterministic in the seed.
ModelParams build_model(const BackboneConfig& config, std::uint64_t seed);

// Number of scalars build_model allocates, running statistics included.
std::size_t parameter_count(const BackboneConfig& config);

template <class T>
ParamMap<T> cast_params(const ParamMap<float>& params) {
  ParamMap<T> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<T>());
  return out;
}

// Resolves named tensors into graph Vars. Every trainable name maps to one
// Var per graph, so two forwards through the same binding share weights.
// Train-mode batch norm writes its updated running statistics here.
template <class T>
class ParamBinding {
 public:
  ParamBinding(Graph<T>& graph, std::vector<const ParamMap<T>*> sources) : graph_(graph), sources_(std::move(sources)) {}

  Graph<T>& graph() { return graph_; }

  Var get(const std::string& name) { return graph_.parameter(name, tensor(name)); }

  // Latest value of a (possibly non-trainable) tensor, pending updates first.
  const Tensor<T>& tensor(const std::string& name) const {
    if (auto it = updates_.find(name); it != updates_.end()) return it->second;
    for (const auto* src : sources_) {
      if (auto it = src->find(name); it != src->end()) return it->second;
    }
    throw ContractViolation("missing parameter tensor '" + name + "'");
  }

  void update(const std::string& name, Tensor<T> value) { updates_.insert_or_assign(name, std::move(value)); }
  const ParamMap<T>& updates() const { return updates_; }

 private:
  Graph<T>& graph_;
  std::vector<const ParamMap<T>*> sources_;
  ParamMap<T> updates_;
};

// conv -> batch norm (-> swish) over the tensors "<prefix>.conv.weight" and "<prefix>.bn.*".
template <class T>
Var conv_bn(ParamBinding<T>& b, const BackboneConfig& config, const std::string& prefix, Var x, std::size_t stride,
            bool depthwise, bool activate, Mode mode);

// Expand (1x1, skipped at expansion 1) -> depthwise -> project (1x1, no
// activation), identity skip when stride 1 and channels are preserved.
template <class T>
Var mbconv_forward(ParamBinding<T>& b, const BackboneConfig& config, const BlockSpec& block, Var x, Mode mode);

// Stem -> MBConv stages -> head 1x1 conv to descriptor_dim channels -> global
// average pool. Images: N x 3 x input_height x input_width.
template <class T>
Var forward_features(ParamBinding<T>& b, const BackboneConfig& config, Var images, Mode mode);

// Eval-mode descriptors (N x D) without recording a backward graph. Rows
// are processed in chunks; each row depends only on its own image.
Tensor<float> extract_descriptors(const ModelParams& params, const BackboneConfig& config,
                                  const Tensor<float>& images, std::size_t chunk = 32);

}  // namespace siamreid
