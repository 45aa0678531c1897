#include "siamreid/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

namespace siamreid {

namespace {

constexpr int kChannelDivisor = 8;
constexpr int kStemKernel = 3;
constexpr std::size_t kStemStride = 2;

void add_bn(ModelParams& p, const std::string& prefix, std::size_t channels) {
  p.emplace(prefix + ".bn.gamma", Tensor<float>::ones({channels}));
  p.emplace(prefix + ".bn.beta", Tensor<float>::zeros({channels}));
  p.emplace(prefix + ".bn.running_mean", Tensor<float>::zeros({channels}));
  p.emplace(prefix + ".bn.running_var", Tensor<float>::ones({channels}));
}

// Guards ceil/floor against products such as 5 * 1.2 = 6.000000000000001.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

int BackboneConfig::conv_layer_count() const {
  int layers = 2;
  for (const auto& s : stages) layers += s.layers;
  return layers;
}

void BackboneConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractViolation("invalid backbone config: " + what); };
  if (stem_channels <= 0) fail("stem channels must be positive");
  if (descriptor_dim <= 0) fail("descriptor dimension must be positive");
  if (stages.empty()) fail("at least one stage is required");
  if (input_height <= 0 || input_width <= 0) fail("input resolution must be positive");
  if (!(width_mult > 0.0) || !(depth_mult > 0.0)) fail("multipliers must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("batch-norm momentum must lie in [0, 1)");
  if (!(bn_epsilon > 0.0)) fail("batch-norm epsilon must be positive");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::string at = "stage " + std::to_string(i) + ": ";
    if (s.kernel != 3 && s.kernel != 5) fail(at + "kernel must be 3 or 5");
    if (s.stride != 1 && s.stride != 2) fail(at + "stride must be 1 or 2");
    if (s.expansion < 1) fail(at + "expansion ratio must be >= 1");
    if (s.channels <= 0) fail(at + "channels must be positive");
    if (s.layers < 1) fail(at + "layer count must be >= 1");
  }
}

BackboneConfig BackboneConfig::micro() {
  BackboneConfig c;
  c.stem_channels = 16;
  c.stages = {
      {3, 1, 1, 16, 1},
      {3, 2, 4, 24, 2},
      {5, 2, 4, 40, 2},
      {3, 2, 4, 64, 2},
  };
  c.descriptor_dim = 64;
  return c;
}

std::string format_stages(const std::vector<StageSpec>& stages) {
  std::ostringstream out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (i) out << ';';
    out << 'k' << s.kernel << 's' << s.stride << 'e' << s.expansion << 'c' << s.channels << 'n' << s.layers;
  }
  return out.str();
}

std::vector<StageSpec> parse_stages(const std::string& text) {
  static const std::regex item(R"(\s*k(\d+)s(\d+)e(\d+)c(\d+)n(\d+)\s*)");
  std::vector<StageSpec> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::smatch m;
    if (!std::regex_match(part, m, item)) {
      throw ContractViolation("cannot parse stage '" + part + "', expected e.g. k3s2e4c24n2");
    }
    out.push_back({std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4]), std::stoi(m[5])});
  }
  return out;
}

int round_channels(double channels) {
  channels = snap(channels);
  const int d = kChannelDivisor;
  int rounded = std::max(d, static_cast<int>(channels + d / 2.0) / d * d);
  if (rounded < 0.9 * channels) rounded += d;
  return rounded;
}

BackboneConfig scale_config(const BackboneConfig& base, double width_mult, double depth_mult) {
  if (!(width_mult > 0.0) || !(depth_mult > 0.0)) {
    throw ContractViolation("scale multipliers must be positive");
  }
  BackboneConfig out = base;
  out.stem_channels = round_channels(base.stem_channels * width_mult);
  for (auto& s : out.stages) {
    s.channels = round_channels(s.channels * width_mult);
    s.layers = static_cast<int>(std::ceil(snap(s.layers * depth_mult)));
  }
  out.width_mult = base.width_mult * width_mult;
  out.depth_mult = base.depth_mult * depth_mult;
  return out;
}

std::vector<BlockSpec> block_specs(const BackboneConfig& config) {
  std::vector<BlockSpec> blocks;
  int channels = config.stem_channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& st = config.stages[s];
    for (int l = 0; l < st.layers; ++l) {
      BlockSpec b;
      b.prefix = "blocks." + std::to_string(s) + "." + std::to_string(l);
      b.in_channels = channels;
      b.out_channels = st.channels;
      b.kernel = st.kernel;
      b.stride = l == 0 ? st.stride : 1;
      b.expansion = st.expansion;
      blocks.push_back(b);
      channels = st.channels;
    }
  }
  return blocks;
}

bool is_running_stat(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}

ModelParams build_model(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  // Weights are created first and filled afterwards in name order.
  std::map<std::string, double> stddev;
  auto conv = [&](const std::string& prefix, std::size_t out, std::size_t in, std::size_t k, std::size_t fan_in) {
    p.emplace(prefix + ".conv.weight", Tensor<float>({out, in, k, k}));
    stddev[prefix + ".conv.weight"] = std::sqrt(2.0 / static_cast<double>(fan_in));
    add_bn(p, prefix, out);
  };

  const auto stem = static_cast<std::size_t>(config.stem_channels);
  conv("stem", stem, 3, kStemKernel, 3 * kStemKernel * kStemKernel);
  int last = config.stem_channels;
  for (const auto& b : block_specs(config)) {
    const auto in = static_cast<std::size_t>(b.in_channels);
    const auto hidden = static_cast<std::size_t>(b.hidden_channels());
    const auto k = static_cast<std::size_t>(b.kernel);
    if (b.expansion > 1) conv(b.prefix + ".expand", hidden, in, 1, in);
    conv(b.prefix + ".depthwise", hidden, 1, k, k * k);
    conv(b.prefix + ".project", static_cast<std::size_t>(b.out_channels), hidden, 1, hidden);
    last = b.out_channels;
  }
  const auto d = static_cast<std::size_t>(config.descriptor_dim);
  conv("top", d, static_cast<std::size_t>(last), 1, static_cast<std::size_t>(last));

  Rng rng(seed);
  for (auto& [name, sd] : stddev) {
    for (float& v : p.at(name).data()) v = static_cast<float>(rng.normal() * sd);
  }
  return p;
}

std::size_t parameter_count(const BackboneConfig& config) {
  std::size_t total = 0;
  auto conv = [&](std::size_t weights, std::size_t out) { total += weights + 4 * out; };
  const auto stem = static_cast<std::size_t>(config.stem_channels);
  conv(stem * 3 * kStemKernel * kStemKernel, stem);
  std::size_t last = stem;
  for (const auto& b : block_specs(config)) {
    const auto in = static_cast<std::size_t>(b.in_channels);
    const auto hidden = static_cast<std::size_t>(b.hidden_channels());
    const auto out = static_cast<std::size_t>(b.out_channels);
    const auto k = static_cast<std::size_t>(b.kernel);
    if (b.expansion > 1) conv(hidden * in, hidden);
    conv(hidden * k * k, hidden);
    conv(out * hidden, out);
    last = out;
  }
  const auto d = static_cast<std::size_t>(config.descriptor_dim);
  conv(d * last, d);
  return total;
}

template <class T>
Var conv_bn(ParamBinding<T>& b, const BackboneConfig& config, const std::string& prefix, Var x, std::size_t stride,
            bool depthwise, bool activate, Mode mode) {
  Graph<T>& g = b.graph();
  const Var w = b.get(prefix + ".conv.weight");
  const std::size_t pad = g.value(w).dim(2) / 2;
  Var h = depthwise ? depthwise_conv2d(g, x, w, stride, pad) : conv2d(g, x, w, std::nullopt, stride, pad);
  const std::string mean_name = prefix + ".bn.running_mean";
  const std::string var_name = prefix + ".bn.running_var";
  auto bn = batch_norm(g, h, b.get(prefix + ".bn.gamma"), b.get(prefix + ".bn.beta"), b.tensor(mean_name),
                       b.tensor(var_name), mode, config.bn_momentum, config.bn_epsilon);
  if (mode == Mode::train) {
    b.update(mean_name, std::move(bn.running_mean));
    b.update(var_name, std::move(bn.running_var));
  }
  return activate ? swish(g, bn.out) : bn.out;
}

template <class T>
Var mbconv_forward(ParamBinding<T>& b, const BackboneConfig& config, const BlockSpec& block, Var x, Mode mode) {
  const Tensor<T>& xv = b.graph().value(x);
  if (xv.rank() != 4 || xv.dim(1) != static_cast<std::size_t>(block.in_channels)) {
    throw ContractViolation("mbconv " + block.prefix + ": expected " + std::to_string(block.in_channels) +
                            " input channels, got " + shape_str(xv.shape()));
  }
  Var h = x;
  if (block.expansion > 1) h = conv_bn(b, config, block.prefix + ".expand", h, 1, false, true, mode);
  h = conv_bn(b, config, block.prefix + ".depthwise", h, static_cast<std::size_t>(block.stride), true, true, mode);
  h = conv_bn(b, config, block.prefix + ".project", h, 1, false, false, mode);
  if (block.has_skip()) h = add(b.graph(), h, x);
  return h;
}

template <class T>
Var forward_features(ParamBinding<T>& b, const BackboneConfig& config, Var images, Mode mode) {
  const Shape& s = b.graph().value(images).shape();
  const Shape expected{0, 3, static_cast<std::size_t>(config.input_height),
                       static_cast<std::size_t>(config.input_width)};
  if (s.size() != 4 || s[1] != 3 || s[2] != expected[2] || s[3] != expected[3]) {
    throw ContractViolation("forward_features: expected images N x 3 x " + std::to_string(config.input_height) +
                            " x " + std::to_string(config.input_width) + ", got " + shape_str(s));
  }
  Var h = conv_bn(b, config, "stem", images, kStemStride, false, true, mode);
  for (const auto& block : block_specs(config)) h = mbconv_forward(b, config, block, h, mode);
  h = conv_bn(b, config, "top", h, 1, false, true, mode);
  return global_avg_pool(b.graph(), h);
}

Tensor<float> extract_descriptors(const ModelParams& params, const BackboneConfig& config,
                                  const Tensor<float>& images, std::size_t chunk) {
  if (images.rank() != 4) throw ContractViolation("extract_descriptors: expected N x 3 x H x W images");
  const std::size_t n = images.dim(0);
  const std::size_t per_image = images.size() / n;
  const auto d = static_cast<std::size_t>(config.descriptor_dim);
  std::vector<float> out(n * d);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Shape shape = images.shape();
    shape[0] = count;
    std::vector<float> slice(images.data().begin() + static_cast<std::ptrdiff_t>(start * per_image),
                             images.data().begin() + static_cast<std::ptrdiff_t>((start + count) * per_image));
    Graph<float> g(false);
    ParamBinding<float> binding(g, {&params});
    const Var x = g.input(Tensor<float>(shape, std::move(slice)));
    const Var f = forward_features(binding, config, x, Mode::eval);
    std::copy(g.value(f).data().begin(), g.value(f).data().end(),
              out.begin() + static_cast<std::ptrdiff_t>(start * d));
  }
  return Tensor<float>({n, d}, std::move(out));
}

#define SIAMREID_INSTANTIATE_BACKBONE(T)                                                                           \
  template Var conv_bn<T>(ParamBinding<T>&, const BackboneConfig&, const std::string&, Var, std::size_t, bool,     \
                          bool, Mode);                                                                             \
  template Var mbconv_forward<T>(ParamBinding<T>&, const BackboneConfig&, const BlockSpec&, Var, Mode);            \
  template Var forward_features<T>(ParamBinding<T>&, const BackboneConfig&, Var, Mode);

SIAMREID_INSTANTIATE_BACKBONE(float)
SIAMREID_INSTANTIATE_BACKBONE(double)

#undef SIAMREID_INSTANTIATE_BACKBONE

}  // namespace siamreid
