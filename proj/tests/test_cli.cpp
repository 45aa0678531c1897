#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "siamreid/checkpoint.hpp"
#include "siamreid/cli.hpp"
#include "siamreid/config.hpp"
#include "siamreid/evaluator.hpp"
#include "siamreid/image_io.hpp"
#include "siamreid/trainer.hpp"

using namespace siamreid;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("siamreid_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string read_all(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

TEST(Config, SetGetRoundTrip) {
  RunConfig c;
  c.set("train.batch_size", "16");
  c.set("backbone.stages", "k3s1e1c8n1;k3s2e4c16n1");
  c.set("data.format", "generic");
  EXPECT_EQ(c.train.batch_size, 16u);
  EXPECT_EQ(c.get("train.batch_size"), "16");
  EXPECT_EQ(c.backbone.stages.size(), 2u);
  EXPECT_EQ(c.format, DataFormat::generic);
  for (const auto& key : RunConfig::keys()) {
    RunConfig d;
    d.set(key, c.get(key));
    EXPECT_EQ(d.get(key), c.get(key)) << key;
  }
}

TEST(Config, DumpParsesBackToSameConfig) {
  RunConfig c;
  c.seed = 42;
  c.train.learning_rate = 3e-4;
  c.backbone.descriptor_dim = 32;
  RunConfig d;
  apply_config_text(d, c.dump());
  EXPECT_EQ(d.dump(), c.dump());
}

TEST(Config, UnknownKeyAndBadValueNameTheKey) {
  RunConfig c;
  try {
    apply_config_text(c, "seed = 1\n# comment\nfoo = 3\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'foo'"), std::string::npos);
  }
  EXPECT_THROW(c.set("train.batch_size", "many"), ConfigError);
  EXPECT_THROW(c.set("data.format", "jpeg"), ConfigError);
}

TEST(Config, TestIdsDefaultDependsOnFormat) {
  RunConfig c;
  EXPECT_EQ(c.effective_test_ids(), 486u);
  c.data_path = "synth";
  EXPECT_EQ(c.effective_format(), DataFormat::synthetic);
  EXPECT_EQ(c.effective_test_ids(), 0u);
  c.test_ids = 3;
  EXPECT_EQ(c.effective_test_ids(), 3u);
}

TEST(Config, ValidateReportsConfigError) {
  RunConfig c;
  c.train.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, exit_usage);
  EXPECT_EQ(cli({"bogus"}).code, exit_usage);
  const CliRun r = cli({"train"});
  EXPECT_EQ(r.code, exit_usage);
  EXPECT_NE((r.out + r.err).find("--data"), std::string::npos);
  const CliRun bad = cli({"train", "--data", "synth", "--set", "foo=1"});
  EXPECT_EQ(bad.code, exit_usage);
  EXPECT_NE(bad.err.find("foo"), std::string::npos);
}

TEST(Cli, SynthWritesAllImagesDeterministically) {
  const fs::path a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  EXPECT_EQ(cli({"synth", "--ids", "3", "--per-camera", "2", "--out", a.string(), "--seed", "5"}).code, exit_ok);
  EXPECT_EQ(cli({"synth", "--ids", "3", "--per-camera", "2", "--out", b.string(), "--seed", "5"}).code, exit_ok);
  EXPECT_EQ(count_files(a), 12u);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / fs::relative(e.path(), a);
    EXPECT_EQ(read_all(e.path()), read_all(other)) << e.path();
  }
  EXPECT_EQ(cli({"synth", "--ids", "1", "--out", a.string()}).code, exit_usage);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, MissingDataOrCheckpointIsDataError) {
  const fs::path d = fresh_dir("missing");
  EXPECT_EQ(cli({"train", "--data", (d / "nope").string(), "--out", d.string()}).code, exit_data);
  EXPECT_EQ(cli({"eval", "--checkpoint", (d / "none.svr1").string(), "--data", "synth"}).code, exit_data);
  fs::remove_all(d);
}

TEST(Cli, GradcheckPassesAndStrictToleranceFails) {
  const CliRun ok = cli({"gradcheck", "--op", "linear"});
  EXPECT_EQ(ok.code, exit_ok);
  EXPECT_NE(ok.out.find("linear"), std::string::npos);
  EXPECT_EQ(cli({"gradcheck", "--op", "swish", "--tol", "1e-14"}).code, exit_check_failed);
  EXPECT_EQ(cli({"gradcheck", "--op", "nonexistent"}).code, exit_usage);
}

TEST(Cli, ScoreIsHalfForZeroHeadAndSymmetric) {
  const fs::path d = fresh_dir("score");
  const RunConfig defaults;
  const BackboneConfig net = defaults.network();
  const auto model = build_model(net, 1);
  export_checkpoint(merge_params(model, VerificationHead::zeros(static_cast<std::size_t>(net.descriptor_dim))),
                    d / "checkpoint.svr1");
  const IdentityDataset ds = generate_synthetic(2, 1, 3);
  write_png(d / "a.png", ds.records[0].image);
  write_png(d / "b.png", ds.records[3].image);
  const std::string ck = (d / "checkpoint.svr1").string();
  const CliRun r = cli({"score", "--checkpoint", ck, "--img-a", (d / "a.png").string(), "--img-b", (d / "b.png").string()});
  EXPECT_EQ(r.code, exit_ok) << r.err;
  EXPECT_EQ(r.out, "0.500000\n");

  // Random head: swapping the inputs prints the same digits.
  VerificationHead head = VerificationHead::zeros(static_cast<std::size_t>(net.descriptor_dim));
  Rng rng(9);
  for (auto& [name, t] : head.params)
    for (float& v : t.data()) v = static_cast<float>(rng.normal());
  export_checkpoint(merge_params(model, head), ck);
  const CliRun ab = cli({"score", "--checkpoint", ck, "--img-a", (d / "a.png").string(), "--img-b", (d / "b.png").string()});
  const CliRun ba = cli({"score", "--checkpoint", ck, "--img-a", (d / "b.png").string(), "--img-b", (d / "a.png").string()});
  EXPECT_EQ(ab.code, exit_ok);
  EXPECT_EQ(ab.out, ba.out);
  fs::remove_all(d);
}

TEST(Cli, TrainThenEvalWritesArtifacts) {
  const fs::path d = fresh_dir("train");
  const std::vector<std::string> common{"--data", "synth", "--synth-ids", "4", "--set", "backbone.input_height=32",
                                        "--set", "backbone.input_width=16", "--set", "backbone.stages=k3s2e1c8n1",
                                        "--set", "backbone.descriptor_dim=8", "--set", "backbone.stem_channels=4"};
  std::vector<std::string> train{"train", "--out", d.string(), "--steps", "2", "--batch-size", "4", "--threads", "1"};
  train.insert(train.end(), common.begin(), common.end());
  const CliRun t = cli(train);
  ASSERT_EQ(t.code, exit_ok) << t.err;
  for (const char* f : {"config.txt", "checkpoint.svr1", "train_log.csv"}) EXPECT_TRUE(fs::exists(d / f)) << f;
  EXPECT_EQ(read_all(d / "train_log.csv").rfind("epoch,loss,pair_accuracy,seconds\n", 0), 0u);

  const CliRun e = cli({"eval", "--checkpoint", (d / "checkpoint.svr1").string(), "--trials", "2"});
  ASSERT_EQ(e.code, exit_ok) << e.err;
  EXPECT_NE(e.out.find("R-1"), std::string::npos);
  const auto cmc = parse_cmc_csv(read_all(d / "cmc.csv"));
  EXPECT_EQ(cmc.size(), 4u);
  EXPECT_DOUBLE_EQ(cmc.back(), 1.0);
  EXPECT_EQ(read_all(d / "ranks.csv").rfind("R-1,R-5,R-10,R-15,R-20\n", 0), 0u);
  fs::remove_all(d);
}
