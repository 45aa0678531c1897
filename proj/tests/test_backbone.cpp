#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "siamreid/backbone.hpp"
#include "siamreid/checkpoint.hpp"
#include "siamreid/gradcheck.hpp"

using namespace siamreid;
namespace fs = std::filesystem;

namespace {

BackboneConfig tiny() {
  BackboneConfig c;
  c.stem_channels = 4;
  c.stages = {{3, 1, 1, 4, 1}};
  c.descriptor_dim = 8;
  c.input_height = 16;
  c.input_width = 8;
  return c;
}

Tensor<float> random_images(std::size_t n, const BackboneConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({n, 3, static_cast<std::size_t>(c.input_height), static_cast<std::size_t>(c.input_width)});
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("siamreid_" + name); }

}  // namespace

TEST(BackboneConfig, StageStringRoundTrip) {
  const auto micro = BackboneConfig::micro();
  EXPECT_EQ(format_stages(micro.stages), "k3s1e1c16n1;k3s2e4c24n2;k5s2e4c40n2;k3s2e4c64n2");
  EXPECT_EQ(parse_stages(format_stages(micro.stages)), micro.stages);
  EXPECT_THROW(parse_stages("k3s1"), ContractViolation);
}

TEST(BackboneConfig, ValidationRejectsBadStages) {
  auto c = BackboneConfig::micro();
  c.stages[1].kernel = 4;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = BackboneConfig::micro();
  c.stages.clear();
  EXPECT_THROW(c.validate(), ContractViolation);
  c = BackboneConfig::micro();
  c.descriptor_dim = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(BackboneConfig, LayerCountIsStemPlusBlocksPlusHead) {
  EXPECT_EQ(BackboneConfig::micro().conv_layer_count(), 1 + 1 + 2 + 2 + 2 + 1);
  EXPECT_EQ(static_cast<int>(block_specs(BackboneConfig::micro()).size()) + 2,
            BackboneConfig::micro().conv_layer_count());
}

TEST(BackboneConfig, RoundChannelsToMultiplesOfEight) {
  EXPECT_EQ(round_channels(16.0), 16);
  EXPECT_EQ(round_channels(17.0), 16);
  EXPECT_EQ(round_channels(19.2), 24);  // 16 would fall below 90% of 19.2
  EXPECT_EQ(round_channels(20.0), 24);
  EXPECT_EQ(round_channels(3.0), 8);
  // 24 is below 90% of 27.
  EXPECT_EQ(round_channels(27.0), 32);
}

TEST(BackboneConfig, CompoundScaling) {
  const auto base = BackboneConfig::micro();
  const auto same = scale_config(base, 1.0, 1.0);
  EXPECT_EQ(same.stages, base.stages);
  const auto s = scale_config(base, 1.1, 1.2);
  EXPECT_EQ(s.stages[1].channels, 24);  // 26.4 -> 24
  EXPECT_EQ(s.stages[3].channels, 72);  // 70.4 -> 72
  EXPECT_EQ(s.stages[1].layers, 3);     // ceil(2.4)
  EXPECT_EQ(s.stages[0].layers, 2);     // ceil(1.2)
  EXPECT_DOUBLE_EQ(s.width_mult, 1.1);
  EXPECT_THROW(scale_config(base, 0.0, 1.0), ContractViolation);
}

TEST(BackboneConfig, BlockSpecsFollowStageTable) {
  const auto blocks = block_specs(BackboneConfig::micro());
  ASSERT_EQ(blocks.size(), 7u);
  EXPECT_EQ(blocks[0].prefix, "blocks.0.0");
  EXPECT_TRUE(blocks[0].has_skip());
  EXPECT_EQ(blocks[1].stride, 2);
  EXPECT_EQ(blocks[1].in_channels, 16);
  EXPECT_EQ(blocks[2].stride, 1);  // only the first block of a stage strides
  EXPECT_TRUE(blocks[2].has_skip());
  EXPECT_EQ(blocks[2].hidden_channels(), 96);
}

TEST(BackboneConfig, ScalingIsMonotone) {
  const auto base = BackboneConfig::micro();
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double w1 = rng.uniform(0.2, 3.0), w2 = w1 + rng.uniform(0.0, 1.0);
    const double d1 = rng.uniform(0.2, 3.0), d2 = d1 + rng.uniform(0.0, 1.0);
    const auto a = scale_config(base, w1, d1), b = scale_config(base, w2, d2);
    for (std::size_t i = 0; i < base.stages.size(); ++i) {
      ASSERT_LE(a.stages[i].channels, b.stages[i].channels);
      ASSERT_LE(a.stages[i].layers, b.stages[i].layers);
    }
  }
}

TEST(BuildModel, HandCountedTinyNetwork) {
  // stem 4*3*3*3 + BN(4) 4*4 = 124; depthwise 4*9 + 16 = 52 (no expand at e=1);
  // project 4*4 + 16 = 32; head conv 8*4 + BN(8) 32 = 64.
  EXPECT_EQ(parameter_count(tiny()), 272u);
  std::size_t total = 0;
  for (const auto& [name, t] : build_model(tiny(), 0)) total += t.size();
  EXPECT_EQ(total, 272u);
}

TEST(BuildModel, MicroIsSmallAndCountMatchesTensors) {
  const auto micro = BackboneConfig::micro();
  std::size_t total = 0;
  for (const auto& [name, t] : build_model(micro, 0)) total += t.size();
  EXPECT_EQ(total, parameter_count(micro));
  EXPECT_LE(total, 500000u);
}

TEST(BuildModel, DeterministicInSeed) {
  const auto a = build_model(tiny(), 5), b = build_model(tiny(), 5), c = build_model(tiny(), 6);
  EXPECT_EQ(a.at("stem.conv.weight").data()[3], b.at("stem.conv.weight").data()[3]);
  EXPECT_NE(a.at("stem.conv.weight").data()[3], c.at("stem.conv.weight").data()[3]);
  EXPECT_EQ(a.at("stem.bn.gamma")[0], 1.0f);
  EXPECT_EQ(a.at("stem.bn.running_var")[0], 1.0f);
}

TEST(ForwardFeatures, DescriptorShape) {
  const auto c = BackboneConfig::micro();
  const auto model = build_model(c, 0);
  const Tensor<float> d = extract_descriptors(model, c, random_images(3, c, 1));
  EXPECT_EQ(d.shape(), (Shape{3, 64}));
  EXPECT_TRUE(d.all_finite());
}

TEST(ForwardFeatures, DuplicatedRowsGiveIdenticalDescriptors) {
  const auto c = tiny();
  const auto model = build_model(c, 0);
  Tensor<float> x = random_images(2, c, 2);
  const std::size_t per = x.size() / 2;
  std::copy_n(x.data().begin(), per, x.data().begin() + static_cast<std::ptrdiff_t>(per));
  const Tensor<float> d = extract_descriptors(model, c, x);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(d[i], d[8 + i]);
}

TEST(ForwardFeatures, RowsIndependentOfChunking) {
  const auto c = tiny();
  const auto model = build_model(c, 0);
  const Tensor<float> x = random_images(5, c, 3);
  const Tensor<float> all = extract_descriptors(model, c, x, 32);
  const Tensor<float> ones = extract_descriptors(model, c, x, 1);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], ones[i]);
}

TEST(ForwardFeatures, SinglePixelChangeMovesDescriptor) {
  const auto c = BackboneConfig::micro();
  const auto model = build_model(c, 0);
  Tensor<float> x = random_images(1, c, 4);
  const Tensor<float> before = extract_descriptors(model, c, x);
  x[x.size() / 2 + 7] += 0.5f;
  const Tensor<float> after = extract_descriptors(model, c, x);
  double diff = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) diff += std::abs(before[i] - after[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(ForwardFeatures, RejectsWrongResolution) {
  const auto c = tiny();
  const auto model = build_model(c, 0);
  EXPECT_THROW(extract_descriptors(model, c, Tensor<float>({1, 3, 17, 8})), ContractViolation);
}

TEST(ForwardFeatures, TrainModeUpdatesRunningStats) {
  const auto c = tiny();
  const auto model = build_model(c, 0);
  Graph<float> g;
  ParamBinding<float> b(g, {&model});
  forward_features(b, c, g.input(random_images(4, c, 5)), Mode::train);
  ASSERT_TRUE(b.updates().contains("stem.bn.running_mean"));
  EXPECT_NE(b.updates().at("stem.bn.running_mean")[0], 0.0f);
}

TEST(ForwardFeatures, TwinBranchesShareParameterLeaves) {
  const auto c = tiny();
  const auto model = build_model(c, 0);
  Graph<float> g;
  ParamBinding<float> b(g, {&model});
  forward_features(b, c, g.input(random_images(2, c, 6)), Mode::train);
  const std::size_t after_one = g.parameters().size();
  forward_features(b, c, g.input(random_images(2, c, 7)), Mode::train);
  EXPECT_EQ(g.parameters().size(), after_one);
}

namespace {

// Micro block "blocks.1.1": stride 1, 24 -> 24 channels, expansion 4.
const BlockSpec& skip_block() {
  static const auto blocks = block_specs(BackboneConfig::micro());
  return blocks[2];
}

}  // namespace

TEST(MBConv, ZeroProjectionIsExactIdentity) {
  const auto c = BackboneConfig::micro();
  auto model = build_model(c, 2);
  const BlockSpec& block = skip_block();
  ASSERT_TRUE(block.has_skip());
  for (float& v : model.at(block.prefix + ".project.conv.weight").data()) v = 0.0f;
  Rng rng(3);
  Tensor<float> x({2, 24, 10, 6});
  for (float& v : x.data()) v = static_cast<float>(rng.normal());
  for (Mode mode : {Mode::eval, Mode::train}) {
    Graph<float> g;
    ParamBinding<float> b(g, {&model});
    const Var y = mbconv_forward(b, c, block, g.input(x), mode);
    const auto& out = g.value(y);
    ASSERT_EQ(out.shape(), x.shape());
    EXPECT_EQ(std::memcmp(out.data().data(), x.data().data(), x.size() * sizeof(float)), 0);
  }
}

TEST(MBConv, StrideTwoHalvesSpatialDims) {
  const auto c = BackboneConfig::micro();
  const auto model = build_model(c, 2);
  const BlockSpec& block = block_specs(c)[1];
  ASSERT_EQ(block.stride, 2);
  Graph<float> g;
  ParamBinding<float> b(g, {&model});
  const Var y = mbconv_forward(b, c, block, g.input(Tensor<float>({1, 16, 40, 20})), Mode::eval);
  EXPECT_EQ(g.value(y).shape(), (Shape{1, 24, 20, 10}));
  EXPECT_THROW(mbconv_forward(b, c, block, g.input(Tensor<float>({1, 8, 40, 20})), Mode::eval), ContractViolation);
}

TEST(MBConv, GradientCheckThroughBlock) {
  const auto c = BackboneConfig::micro();
  const auto params = cast_params<double>(build_model(c, 4));
  const BlockSpec& block = skip_block();
  Rng rng(5);
  Tensor<double> x({2, 24, 4, 3}), proj({2, 24, 4, 3});
  for (double& v : x.data()) v = rng.normal();
  for (double& v : proj.data()) v = rng.normal();
  const auto r = grad_check(
      [&](Graph<double>& g, std::span<const Var> v) {
        ParamBinding<double> b(g, {&params});
        return weighted_sum(g, mbconv_forward(b, c, block, v[0], Mode::train), proj);
      },
      {x}, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-5) << "coordinate " << r.worst_index;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto model = build_model(BackboneConfig::micro(), 3);
  const fs::path f = temp_file("roundtrip.svr1");
  export_checkpoint(model, f);
  const auto back = import_checkpoint(model, f);
  ASSERT_EQ(back.size(), model.size());
  for (const auto& [name, t] : model) {
    ASSERT_EQ(back.at(name).shape(), t.shape()) << name;
    EXPECT_EQ(std::memcmp(back.at(name).data().data(), t.data().data(), t.size() * sizeof(float)), 0) << name;
  }
  fs::remove(f);
}

namespace {

CheckpointError::Kind load_error(const ParamMap<float>& like, const fs::path& f) {
  try {
    import_checkpoint(like, f);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return CheckpointError::Kind::io;
}

void write_bytes(const fs::path& f, const std::string& bytes) {
  std::ofstream out(f, std::ios::binary | std::ios::trunc);
  out << bytes;
}

std::string read_bytes(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Checkpoint, DistinctErrors) {
  const auto model = build_model(tiny(), 0);
  const fs::path good = temp_file("good.svr1"), bad = temp_file("bad.svr1");
  export_checkpoint(model, good);
  const std::string bytes = read_bytes(good);

  EXPECT_EQ(load_error(model, temp_file("does_not_exist.svr1")), CheckpointError::Kind::io);

  write_bytes(bad, "XXXX" + bytes.substr(4));
  EXPECT_EQ(load_error(model, bad), CheckpointError::Kind::bad_magic);

  write_bytes(bad, bytes.substr(0, bytes.size() - 5));
  EXPECT_EQ(load_error(model, bad), CheckpointError::Kind::truncated);

  auto other = tiny();
  other.descriptor_dim = 16;
  EXPECT_EQ(load_error(build_model(other, 0), good), CheckpointError::Kind::shape_mismatch);

  auto fewer = model;
  fewer.erase("top.conv.weight");
  EXPECT_EQ(load_error(fewer, good), CheckpointError::Kind::unknown_name);

  auto more = model;
  more.emplace("extra.weight", Tensor<float>({2}));
  EXPECT_EQ(load_error(more, good), CheckpointError::Kind::missing_tensor);

  fs::remove(good);
  fs::remove(bad);
}
