#include "siamreid/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "siamreid/checkpoint.hpp"
#include "siamreid/config.hpp"
#include "siamreid/evaluator.hpp"
#include "siamreid/gradcheck.hpp"
#include "siamreid/image_io.hpp"

namespace siamreid {

namespace fs = std::filesystem;

namespace {

// Flags every command accepts, gathered before the config is resolved.
struct CommonFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::vector<std::string> overrides;  // "key=value"
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "key = value config file");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "OpenMP threads (1 = serial order)");
  cmd->add_option("--set", f.overrides, "override any config key: --set train.batch_size=16");
}

struct DataFlags {
  std::optional<std::string> data, format;
  std::optional<std::size_t> synth_ids, synth_per_camera;
  std::optional<long> test_ids;
};

void add_data(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.data, "dataset directory, or 'synth'");
  cmd->add_option("--format", f.format, "cuhk01 | generic | synthetic");
  cmd->add_option("--synth-ids", f.synth_ids, "identities in the synthetic dataset");
  cmd->add_option("--synth-per-camera", f.synth_per_camera, "synthetic images per identity and camera");
  cmd->add_option("--test-ids", f.test_ids, "identities held out for evaluation");
}

// Defaults, then the config file, then --set overrides, then dedicated flags.
RunConfig resolve(const CommonFlags& common, const DataFlags* data, const std::optional<fs::path>& fallback_file) {
  RunConfig c;
  if (!common.config_file.empty()) {
    apply_config_file(c, common.config_file);
  } else if (fallback_file && fs::exists(*fallback_file)) {
    apply_config_file(c, *fallback_file);
  }
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) c.seed = *common.seed;
  if (common.threads) c.threads = *common.threads;
  if (data) {
    if (data->data) c.data_path = *data->data;
    if (data->format) c.set("data.format", *data->format);
    if (data->synth_ids) c.synth_ids = *data->synth_ids;
    if (data->synth_per_camera) c.synth_per_camera = *data->synth_per_camera;
    if (data->test_ids) c.test_ids = *data->test_ids;
  }
  c.validate();
  if (c.threads > 0) omp_set_num_threads(c.threads);
  return c;
}

IdentityDataset load_dataset(const RunConfig& c) {
  if (c.data_path.empty()) throw ConfigError("missing --data (a dataset directory or 'synth')");
  const BackboneConfig net = c.network();
  const auto h = static_cast<std::size_t>(net.input_height);
  const auto w = static_cast<std::size_t>(net.input_width);
  switch (c.effective_format()) {
    case DataFormat::synthetic:
      return generate_synthetic(c.synth_ids, c.synth_per_camera, derive_seed(c.seed, "synth"), nullptr, h, w);
    case DataFormat::generic: return load_generic(c.data_path, h, w);
    case DataFormat::cuhk01: return load_cuhk01(c.data_path, h, w);
  }
  throw ConfigError("unknown data format");
}

// Train and test parts; test is empty when no identities are held out.
std::pair<IdentityDataset, IdentityDataset> split(const RunConfig& c, const IdentityDataset& all) {
  const std::size_t n_test = c.effective_test_ids();
  if (n_test == 0) return {all, IdentityDataset{}};
  return split_protocol(all, n_test, derive_seed(c.seed, "split"));
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

fs::path output_dir(const std::string& out, const fs::path& fallback) {
  const fs::path dir = out.empty() ? fallback : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

struct LoadedModel {
  ModelParams model;
  VerificationHead head;
};

LoadedModel load_model(const RunConfig& c, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw CheckpointError(CheckpointError::Kind::io, "checkpoint not found: " + checkpoint.string());
  const BackboneConfig net = c.network();
  LoadedModel m{build_model(net, 0), VerificationHead::zeros(static_cast<std::size_t>(net.descriptor_dim),
                                                             c.train.dropout)};
  const ParamMap<float> loaded = import_checkpoint(merge_params(m.model, m.head), checkpoint);
  for (const auto& [name, t] : loaded) {
    if (m.head.params.contains(name)) {
      m.head.params[name] = t;
    } else {
      m.model[name] = t;
    }
  }
  return m;
}

int cmd_train(const CommonFlags& common, const DataFlags& data, std::ostream& out) {
  const RunConfig c = resolve(common, &data, std::nullopt);
  const fs::path dir = output_dir(common.out, "run");
  write_text(dir / "config.txt", c.dump());

  const IdentityDataset all = load_dataset(c);
  auto [train_ds, test_ds] = split(c, all);
  out << "data: " << train_ds.report() << " for training";
  if (test_ds.identity_count()) out << ", " << test_ds.identity_count() << " identities held out";
  out << "\n";
  if (test_ds.identity_count()) {
    std::string names;
    for (const auto& n : test_ds.identity_names) names += n + "\n";
    write_text(dir / "test_ids.txt", names);
  }

  const BackboneConfig net = c.network();
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  TrainOptions opt;
  opt.checkpoint_path = dir / "checkpoint.svr1";
  opt.log_path = dir / "train_log.csv";
  opt.augment = c.augment;
  opt.on_epoch = [&out](const TrainLogRow& r) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %3d  loss %.6f  pair accuracy %.4f  %.1fs\n", r.epoch, r.loss,
                  r.pair_accuracy, r.seconds);
    out << line << std::flush;
  };
  const TrainResult result =
      train(train_ds, build_model(net, derive_seed(c.seed, "init")),
            VerificationHead::zeros(static_cast<std::size_t>(net.descriptor_dim), c.train.dropout), net, tc, opt);
  out << "trained " << result.steps << " steps; checkpoint " << opt.checkpoint_path->string() << "\n";
  return exit_ok;
}

int cmd_eval(const CommonFlags& common, const DataFlags& data, const std::string& checkpoint,
             const std::optional<int>& trials, const std::string& subset, std::ostream& out) {
  const fs::path ckpt(checkpoint);
  RunConfig c = resolve(common, &data, ckpt.parent_path() / "config.txt");
  if (trials) {
    if (*trials < 1) throw ConfigError("--trials must be >= 1");
    c.eval_trials = *trials;
  }
  const LoadedModel m = load_model(c, ckpt);
  const IdentityDataset all = load_dataset(c);
  auto [train_ds, test_ds] = split(c, all);
  const IdentityDataset* target = &all;
  if (subset == "train") {
    target = &train_ds;
  } else if (subset == "test") {
    target = test_ds.identity_count() ? &test_ds : &all;
  } else if (subset != "all") {
    throw ConfigError("--subset must be test, train or all");
  }

  const EvalResult r = evaluate(m.model, c.network(), m.head, *target, c.seed, c.eval_trials);
  const RankTable table = rank_table(r.cmc);
  const fs::path dir = output_dir(common.out, ckpt.parent_path().empty() ? fs::path(".") : ckpt.parent_path());
  emit_cmc_csv(r.cmc, dir / "cmc.csv");
  write_text(dir / "ranks.csv", table.csv());
  out << "evaluated " << target->identity_count() << " identities (" << c.eval_trials << " trial"
      << (c.eval_trials == 1 ? "" : "s") << ")\n"
      << table.text();
  return exit_ok;
}

int cmd_score(const CommonFlags& common, const std::string& checkpoint, const std::string& img_a,
              const std::string& img_b, std::ostream& out) {
  const fs::path ckpt(checkpoint);
  const RunConfig c = resolve(common, nullptr, ckpt.parent_path() / "config.txt");
  const LoadedModel m = load_model(c, ckpt);
  const BackboneConfig net = c.network();
  const auto h = static_cast<std::size_t>(net.input_height);
  const auto w = static_cast<std::size_t>(net.input_width);
  const Tensor<float> a = resize_normalize(read_image(img_a), h, w);
  const Tensor<float> b = resize_normalize(read_image(img_b), h, w);
  char line[32];
  std::snprintf(line, sizeof line, "%.6f\n", pair_score(m.model, net, m.head, a, b));
  out << line;
  return exit_ok;
}

int cmd_gradcheck(const CommonFlags& common, const std::string& op, std::optional<double> tol, std::ostream& out) {
  const RunConfig c = resolve(common, nullptr, std::nullopt);
  std::vector<GradCheckCase> cases = gradcheck_suite(c.seed);
  if (!op.empty()) {
    std::erase_if(cases, [&](const GradCheckCase& k) { return k.name != op; });
    if (cases.empty()) {
      std::string known;
      for (const auto& k : gradcheck_suite(c.seed)) known += " " + k.name;
      throw ConfigError("unknown op '" + op + "'; available:" + known);
    }
  }
  bool ok = true;
  for (const auto& k : cases) {
    const GradCheckResult r = k.run();
    const double limit = tol.value_or(k.tolerance);
    const bool pass = r.max_rel_error <= limit;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-24s max rel error %.3e  (limit %.0e, %zu coords)  %s\n", k.name.c_str(),
                  r.max_rel_error, limit, r.coordinates, pass ? "ok" : "FAIL");
    out << line;
  }
  return ok ? exit_ok : exit_check_failed;
}

int cmd_synth(const CommonFlags& common, std::size_t ids, std::size_t per_camera, std::ostream& out) {
  const RunConfig c = resolve(common, nullptr, std::nullopt);
  if (common.out.empty()) throw ConfigError("synth needs --out");
  if (ids < 2) throw ConfigError("--ids must be at least 2: the pair sampler needs two identities");
  const BackboneConfig net = c.network();
  SyntheticReport report;
  const IdentityDataset ds =
      generate_synthetic(ids, per_camera, derive_seed(c.seed, "synth"), &report,
                         static_cast<std::size_t>(net.input_height), static_cast<std::size_t>(net.input_width));
  write_generic(ds, common.out);
  char line[160];
  std::snprintf(line, sizeof line, "wrote %zu images to %s (mean L2 same %.2f, different %.2f)\n",
                ds.records.size(), common.out.c_str(), report.mean_intra_distance, report.mean_inter_distance);
  out << line;
  return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Siamese verification person re-identification", "siamreid"};
  app.require_subcommand(1);

  CommonFlags train_common, eval_common, score_common, grad_common, synth_common;
  DataFlags train_data, eval_data;

  auto* train_cmd = app.add_subcommand("train", "train on a dataset and write checkpoint.svr1, train_log.csv");
  add_common(train_cmd, train_common);
  add_data(train_cmd, train_data);
  std::optional<std::size_t> steps, batch;
  std::optional<int> epochs;
  std::optional<double> lr;
  bool no_augment = false;
  train_cmd->add_option("--steps", steps, "total optimisation steps (overrides epochs)");
  train_cmd->add_option("--epochs", epochs, "epochs");
  train_cmd->add_option("--batch-size", batch, "pairs per batch");
  train_cmd->add_option("--lr", lr, "RMSprop learning rate");
  train_cmd->add_flag("--no-augment", no_augment, "disable flip/zoom/shift augmentation");

  auto* eval_cmd = app.add_subcommand("eval", "CMC evaluation: camera-A queries against a camera-B gallery");
  add_common(eval_cmd, eval_common);
  add_data(eval_cmd, eval_data);
  std::string eval_ckpt, subset = "test";
  std::optional<int> trials;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--trials", trials, "random gallery draws to average");
  eval_cmd->add_option("--subset", subset, "test | train | all identities of the split");

  auto* score_cmd = app.add_subcommand("score", "probability that two images show the same person");
  add_common(score_cmd, score_common);
  std::string score_ckpt, img_a, img_b;
  score_cmd->add_option("--checkpoint", score_ckpt, "checkpoint file")->required();
  score_cmd->add_option("--img-a", img_a, "first image")->required();
  score_cmd->add_option("--img-b", img_b, "second image")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  add_common(grad_cmd, grad_common);
  std::string op;
  std::optional<double> tol;
  grad_cmd->add_option("--op", op, "check a single op");
  grad_cmd->add_option("--tol", tol, "relative error limit for every op");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset in the generic layout");
  add_common(synth_cmd, synth_common);
  std::size_t ids = 8, per_camera = 2;
  synth_cmd->add_option("--ids", ids, "identities");
  synth_cmd->add_option("--per-camera", per_camera, "images per identity and camera");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return exit_usage;
  }

  try {
    if (*train_cmd) {
      if (steps) train_common.overrides.push_back("train.total_steps=" + std::to_string(*steps));
      if (epochs) train_common.overrides.push_back("train.epochs=" + std::to_string(*epochs));
      if (batch) train_common.overrides.push_back("train.batch_size=" + std::to_string(*batch));
      if (lr) {
        char v[32];
        std::snprintf(v, sizeof v, "%.17g", *lr);
        train_common.overrides.push_back(std::string("train.learning_rate=") + v);
      }
      if (no_augment) {
        for (const char* kv : {"augment.flip_prob=0", "augment.zoom_min=1", "augment.zoom_max=1", "augment.shift=0"}) {
          train_common.overrides.emplace_back(kv);
        }
      }
      return cmd_train(train_common, train_data, out);
    }
    if (*eval_cmd) return cmd_eval(eval_common, eval_data, eval_ckpt, trials, subset, out);
    if (*score_cmd) return cmd_score(score_common, score_ckpt, img_a, img_b, out);
    if (*grad_cmd) return cmd_gradcheck(grad_common, op, tol, out);
    if (*synth_cmd) return cmd_synth(synth_common, ids, per_camera, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    if (std::string(e.what()).find("missing --data") != std::string::npos) err << train_cmd->help();
    return exit_usage;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return exit_divergence;
  } catch (const CheckpointError& e) {
    err << "checkpoint error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_data;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return exit_data;
  } catch (const SamplingError& e) {
    err << "sampling error: " << e.what() << "\n";
    return exit_data;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return exit_data;
  }
  return exit_usage;
}

}  // namespace siamreid
