#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "siamreid/backbone.hpp"
#include "siamreid/data.hpp"
#include "siamreid/head.hpp"

namespace siamreid {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 18;
  std::size_t batch_size = 48;
  double rho = 0.9;
  double epsilon = 1e-7;
  double dropout = 0.5;
  std::size_t steps_per_epoch = 0;  // 0: positive pairs / (batch * pos_ratio), rounded up
  // Unset: epochs * steps_per_epoch. Otherwise overrides the epoch count; 0 trains nothing.
  std::optional<std::size_t> total_steps;
  double pos_ratio = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// RMSprop accumulators, one per trained tensor, created lazily at zero.
struct OptimizerState {
  ParamMap<float> v;
};

// v <- rho v + (1 - rho) g^2;  p <- p - lr g / (sqrt(v) + eps).
// Running statistics and names absent from `grads` are left untouched.
// Throws DivergenceError naming the first tensor with a non-finite gradient.
void rmsprop_step(ParamMap<float>& params, const ParamMap<float>& grads, OptimizerState& state,
                  const TrainConfig& config);

struct TrainLogRow {
  int epoch = 0;
  double loss = 0.0;
  double pair_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::uint64_t seed = 0;
  std::string checkpoint;  // final checkpoint path, empty when nothing was written

  // Header "epoch,loss,pair_accuracy,seconds".
  std::string csv() const;
  void write_csv(const std::filesystem::path& file) const;
};

struct TrainOptions {
  // Checkpoint written after every epoch and at the end when set.
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> log_path;
  AugmentConfig augment;
  // Called after each completed epoch.
  std::function<void(const TrainLogRow&)> on_epoch;
};

struct TrainResult {
  ModelParams model;
  VerificationHead head;
  OptimizerState optimizer;
  TrainLog log;
  std::size_t steps = 0;
};

std::size_t default_steps_per_epoch(const IdentityDataset& dataset, const TrainConfig& config);

// Model and head tensors merged into one map (names are disjoint).
ParamMap<float> merge_params(const ModelParams& model, const VerificationHead& head);

// One optimisation step on a prepared batch; returns the batch loss and
// accuracy of its training-mode probabilities. Exposed for tests.
struct StepResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
StepResult train_step(ModelParams& model, VerificationHead& head, OptimizerState& state, const BackboneConfig& backbone,
                      const TrainConfig& config, const PairBatch& batch, Rng& dropout_rng);

// Batch-averaged loss of a prepared batch without updating anything.
double batch_loss(const ModelParams& model, const VerificationHead& head, const BackboneConfig& backbone,
                  const PairBatch& batch, double dropout, Mode mode, Rng& dropout_rng);

// Samples, steps and logs. Sub-streams of config.seed: "sampler" drives
// pair selection and augmentation, "dropout" the head dropout masks.
TrainResult train(const IdentityDataset& dataset, ModelParams model, VerificationHead head,
                  const BackboneConfig& backbone, const TrainConfig& config, const TrainOptions& options = {});

// Fraction of pairs classified correctly at threshold 0.5 in eval mode.
// A score of exactly 0.5 counts as "different".
double evaluate_pair_accuracy(const ModelParams& model, const VerificationHead& head, const BackboneConfig& backbone,
                              const PairBatch& batch);

double accuracy_from_scores(std::span<const float> same_probability, std::span<const PairLabel> labels);

}  // namespace siamreid
