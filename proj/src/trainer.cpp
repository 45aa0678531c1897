#include "siamreid/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "siamreid/checkpoint.hpp"

namespace siamreid {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ContractViolation("RMSprop rho must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ContractViolation("RMSprop epsilon must be positive");
  if (epochs < 1) throw ContractViolation("epochs must be at least 1");
  if (batch_size == 0) throw ContractViolation("batch size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractViolation("dropout must lie in [0, 1)");
  if (!(pos_ratio >= 0.0 && pos_ratio <= 1.0)) throw ContractViolation("positive ratio must lie in [0, 1]");
}

void rmsprop_step(ParamMap<float>& params, const ParamMap<float>& grads, OptimizerState& state,
                  const TrainConfig& config) {
  for (const auto& [name, g] : grads) {
    if (is_running_stat(name)) continue;
    if (!g.all_finite()) throw DivergenceError("non-finite gradient for parameter '" + name + "'");
  }
  const auto rho = static_cast<float>(config.rho);
  const auto lr = static_cast<float>(config.learning_rate);
  const auto eps = static_cast<float>(config.epsilon);
  for (const auto& [name, g] : grads) {
    if (is_running_stat(name)) continue;
    auto it = params.find(name);
    if (it == params.end()) continue;
    Tensor<float>& p = it->second;
    if (p.shape() != g.shape()) {
      throw ContractViolation("gradient for '" + name + "' has shape " + shape_str(g.shape()) + ", parameter is " +
                              shape_str(p.shape()));
    }
    auto [vit, inserted] = state.v.try_emplace(name, p.shape(), 0.0f);
    Tensor<float>& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = rho * v[i] + (1.0f - rho) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

std::string TrainLog::csv() const {
  std::ostringstream out;
  out << "epoch,loss,pair_accuracy,seconds\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.6f,%.3f\n", r.epoch, r.loss, r.pair_accuracy, r.seconds);
    out << line;
  }
  return out.str();
}

void TrainLog::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write training log " + file.string());
  out << csv();
}

std::size_t default_steps_per_epoch(const IdentityDataset& dataset, const TrainConfig& config) {
  const std::size_t per_batch = positive_count(config.batch_size, config.pos_ratio);
  const std::size_t pos = positive_pairs(dataset).size();
  if (per_batch == 0) return std::max<std::size_t>(1, count_negative_pairs(dataset) / config.batch_size);
  return std::max<std::size_t>(1, (pos + per_batch - 1) / per_batch);
}

ParamMap<float> merge_params(const ModelParams& model, const VerificationHead& head) {
  ParamMap<float> all = model;
  for (const auto& [name, t] : head.params) {
    if (!all.emplace(name, t).second) throw ContractViolation("tensor '" + name + "' in both model and head");
  }
  return all;
}

namespace {

struct Forward {
  Var loss;
  Tensor<float> probs;
};

Forward pair_forward(ParamBinding<float>& b, const BackboneConfig& backbone, const PairBatch& batch, double dropout,
                     Mode mode, Rng& dropout_rng) {
  Graph<float>& g = b.graph();
  const Var x1 = g.input(batch.images1);
  const Var x2 = g.input(batch.images2);
  const Var f1 = forward_features(b, backbone, x1, mode);
  const Var f2 = forward_features(b, backbone, x2, mode);
  const Var fs = square_layer(g, f1, f2);
  const HeadOutput<float> head = verification_forward(b, fs, dropout, mode, dropout_rng);
  auto ce = verification_loss(g, head.logits, std::span<const PairLabel>(batch.labels));
  return {ce.loss, std::move(ce.probs)};
}

std::size_t trainable_count(const ParamMap<float>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += !is_running_stat(name);
  return n;
}

}  // namespace

double accuracy_from_scores(std::span<const float> same_probability, std::span<const PairLabel> labels) {
  if (same_probability.size() != labels.size() || labels.empty()) {
    throw ContractViolation("accuracy: " + std::to_string(same_probability.size()) + " scores for " +
                            std::to_string(labels.size()) + " labels");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const PairLabel predicted = same_probability[i] > 0.5f ? PairLabel::same : PairLabel::different;
    correct += predicted == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

StepResult train_step(ModelParams& model, VerificationHead& head, OptimizerState& state, const BackboneConfig& backbone,
                      const TrainConfig& config, const PairBatch& batch, Rng& dropout_rng) {
  Graph<float> g;
  ParamBinding<float> b(g, {&model, &head.params});
  const Forward fwd = pair_forward(b, backbone, batch, config.dropout, Mode::train, dropout_rng);

  // Both branches must have resolved every weight to the same graph leaf.
  const std::size_t expected = trainable_count(model) + trainable_count(head.params);
  if (g.parameters().size() != expected) {
    throw std::logic_error("weight sharing broken: " + std::to_string(g.parameters().size()) +
                           " parameter leaves for " + std::to_string(expected) + " trainable tensors");
  }

  const double loss = g.value(fwd.loss)[0];
  if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite");

  std::vector<float> same(batch.size());
  for (std::size_t i = 0; i < same.size(); ++i) same[i] = fwd.probs[i * 2];
  const double acc = accuracy_from_scores(same, batch.labels);

  g.backward(fwd.loss);
  ParamMap<float> grads = g.parameter_grads();
  for (const auto& [name, grad] : grads) {
    if (!grad.all_finite()) throw DivergenceError("non-finite gradient for parameter '" + name + "'");
  }
  ParamMap<float> head_grads;
  for (auto it = grads.begin(); it != grads.end();) {
    if (head.params.contains(it->first)) {
      head_grads.insert(grads.extract(it++));
    } else {
      ++it;
    }
  }
  rmsprop_step(model, grads, state, config);
  rmsprop_step(head.params, head_grads, state, config);
  for (const auto& [name, t] : b.updates()) model.at(name) = t;
  return {loss, acc};
}

double batch_loss(const ModelParams& model, const VerificationHead& head, const BackboneConfig& backbone,
                  const PairBatch& batch, double dropout, Mode mode, Rng& dropout_rng) {
  Graph<float> g(false);
  ParamBinding<float> b(g, {&model, &head.params});
  const Forward fwd = pair_forward(b, backbone, batch, dropout, mode, dropout_rng);
  return g.value(fwd.loss)[0];
}

TrainResult train(const IdentityDataset& dataset, ModelParams model, VerificationHead head,
                  const BackboneConfig& backbone, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  backbone.validate();
  options.augment.validate();
  if (head.dim() != static_cast<std::size_t>(backbone.descriptor_dim)) {
    throw ContractViolation("head width " + std::to_string(head.dim()) + " does not match descriptor dimension " +
                            std::to_string(backbone.descriptor_dim));
  }

  const std::size_t per_epoch =
      config.steps_per_epoch ? config.steps_per_epoch : default_steps_per_epoch(dataset, config);
  const std::size_t total =
      config.total_steps.value_or(per_epoch * static_cast<std::size_t>(config.epochs));

  TrainResult result{std::move(model), std::move(head), {}, {}, 0};
  result.log.seed = config.seed;
  Rng sampler = make_stream(config.seed, "sampler");
  Rng dropout_rng = make_stream(config.seed, "dropout");

  auto save = [&] {
    if (!options.checkpoint_path) return;
    export_checkpoint(merge_params(result.model, result.head), *options.checkpoint_path);
    result.log.checkpoint = options.checkpoint_path->string();
  };

  double loss_sum = 0.0, acc_sum = 0.0;
  std::size_t in_epoch = 0;
  int epoch = 0;
  auto start = std::chrono::steady_clock::now();
  auto close_epoch = [&] {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    TrainLogRow row{++epoch, loss_sum / static_cast<double>(in_epoch), acc_sum / static_cast<double>(in_epoch), secs};
    result.log.rows.push_back(row);
    save();
    if (options.log_path) result.log.write_csv(*options.log_path);
    if (options.on_epoch) options.on_epoch(row);
    loss_sum = acc_sum = 0.0;
    in_epoch = 0;
    start = std::chrono::steady_clock::now();
  };

  for (std::size_t step = 0; step < total; ++step) {
    const PairBatch batch = sample_pair_batch(dataset, config.batch_size, config.pos_ratio, options.augment, sampler);
    StepResult r;
    try {
      r = train_step(result.model, result.head, result.optimizer, backbone, config, batch, dropout_rng);
    } catch (const DivergenceError& e) {
      save();
      if (options.log_path) result.log.write_csv(*options.log_path);
      throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step + 1) +
                            "; last good checkpoint kept");
    }
    ++result.steps;
    loss_sum += r.loss;
    acc_sum += r.accuracy;
    if (++in_epoch == per_epoch) close_epoch();
  }
  if (in_epoch > 0) close_epoch();
  if (total == 0 && options.log_path) result.log.write_csv(*options.log_path);
  if (result.log.rows.empty()) save();
  return result;
}

double evaluate_pair_accuracy(const ModelParams& model, const VerificationHead& head, const BackboneConfig& backbone,
                              const PairBatch& batch) {
  const Tensor<float> f1 = extract_descriptors(model, backbone, batch.images1);
  const Tensor<float> f2 = extract_descriptors(model, backbone, batch.images2);
  const std::size_t d = head.dim();
  std::vector<float> same(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    same[i] = score_descriptors(head, f1.data().subspan(i * d, d), f2.data().subspan(i * d, d));
  }
  return accuracy_from_scores(same, batch.labels);
}

}  // namespace siamreid
