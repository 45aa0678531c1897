#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "siamreid/backbone.hpp"
#include "siamreid/data.hpp"
#include "siamreid/trainer.hpp"

namespace siamreid {

enum class DataFormat { cuhk01, generic, synthetic };

const char* to_string(DataFormat f);

// Every tunable of a run, addressable by a dotted key ("train.batch_size").
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: OpenMP default

  // "synth" selects the synthetic generator regardless of data.format.
  std::string data_path;
  DataFormat format = DataFormat::cuhk01;
  std::size_t synth_ids = 8;
  std::size_t synth_per_camera = 2;
  // Identities held out for evaluation; negative picks 486 for CUHK01 and 0 otherwise.
  long test_ids = -1;

  TrainConfig train;
  AugmentConfig augment;
  // Base network before compound scaling by width_mult / depth_mult.
  BackboneConfig backbone = BackboneConfig::micro();

  int eval_trials = 1;

  // Throws ConfigError naming the key for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Scaled network actually built.
  BackboneConfig network() const;
  DataFormat effective_format() const;
  std::size_t effective_test_ids() const;

  // "key = value" lines in key order, preceded by a comment line.
  std::string dump() const;
  void validate() const;
};

// Applies `key = value` lines ('#' starts a comment) on top of `config`.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config");
void apply_config_file(RunConfig& config, const std::filesystem::path& file);

}  // namespace siamreid
