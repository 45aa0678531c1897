#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "siamreid/head.hpp"
#include "siamreid/rng.hpp"
#include "siamreid/tensor.hpp"

namespace siamreid {

enum class Camera { A, B };

inline char camera_letter(Camera c) { return c == Camera::A ? 'A' : 'B'; }

struct ImageRecord {
  int identity = 0;    // dense index into IdentityDataset::identity_names
  Camera camera = Camera::A;
  Tensor<float> image;  // 3 x H x W, values in [0, 1]
  std::string source;   // file name or synthetic tag
};

struct IdentityDataset {
  std::vector<ImageRecord> records;
  std::vector<std::string> identity_names;  // original labels, index = dense id
  std::vector<std::string> flagged;         // identities loaded with missing shots
  std::string split = "all";

  std::size_t identity_count() const { return identity_names.size(); }
  // "N identities, M images (a camera A / b camera B), k flagged"
  std::string report() const;
  // Record indices per dense identity and camera.
  std::vector<std::vector<std::size_t>> by_identity(std::optional<Camera> camera = std::nullopt) const;
};

struct AugmentConfig {
  double flip_prob = 0.5;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  double shift = 0.1;  // max horizontal shift as a fraction of the width

  void validate() const;
  static AugmentConfig none() { return {0.0, 1.0, 1.0, 0.0}; }
};

struct PairBatch {
  Tensor<float> images1;  // N x 3 x H x W, standardized
  Tensor<float> images2;
  std::vector<PairLabel> labels;
  std::vector<std::pair<std::size_t, std::size_t>> records;  // source record of each side

  std::size_t size() const { return labels.size(); }
  std::size_t positives() const;
};

struct Cuhk01Name {
  int identity;
  int shot;
  Camera camera;
};

// "0001003.png" -> identity 1, shot 3, camera B. Shots 1-2 are camera A, 3-4 camera B.
std::optional<Cuhk01Name> parse_cuhk01_name(const std::string& filename);

// Flat directory of 7-digit CUHK01 images, resized to height x width on load.
IdentityDataset load_cuhk01(const std::filesystem::path& dir, std::size_t height = 160, std::size_t width = 80);

// <dir>/<identity>/<A|B>_<index>.(png|ppm)
IdentityDataset load_generic(const std::filesystem::path& dir, std::size_t height = 160, std::size_t width = 80);

void write_generic(const IdentityDataset& dataset, const std::filesystem::path& dir);

struct SyntheticReport {
  double mean_intra_distance = 0.0;
  double mean_inter_distance = 0.0;
};

// Rendered pedestrians: each identity gets random clothing colours, build and
// an accessory; the two cameras apply different lighting and framing, and
// every image gets its own jitter and pixel noise.
IdentityDataset generate_synthetic(std::size_t n_ids, std::size_t per_camera, std::uint64_t seed,
                                   SyntheticReport* report = nullptr, std::size_t height = 160,
                                   std::size_t width = 80);

// Mean L2 distance over same-identity and different-identity image pairs.
SyntheticReport pair_distance_report(const IdentityDataset& dataset);

// Random flip, zoom about the centre and horizontal shift, edge replication
// at the borders; output clamped to [0, 1].
Tensor<float> augment(const Tensor<float>& image, const AugmentConfig& config, Rng& rng);

// Half-pixel-centre bilinear resampling of a C x H x W image.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width);

// (x - 0.5) / 0.5 per channel.
Tensor<float> standardize(const Tensor<float>& image);

Tensor<float> resize_normalize(const Tensor<float>& image, std::size_t height = 160, std::size_t width = 80);

// Exactly round(pos_ratio * batch_size) cross-camera positives followed by
// negatives over two distinct identities (any cameras).
PairBatch sample_pair_batch(const IdentityDataset& dataset, std::size_t batch_size, double pos_ratio,
                            const AugmentConfig& augment_config, Rng& rng);

std::size_t positive_count(std::size_t batch_size, double pos_ratio);

// Identity-disjoint split; identities are re-indexed densely in each part.
std::pair<IdentityDataset, IdentityDataset> split_protocol(const IdentityDataset& dataset, std::size_t n_test_ids,
                                                           std::uint64_t seed);

// Keeps the listed dense identities (re-indexed in the given order).
IdentityDataset subset_identities(const IdentityDataset& dataset, const std::vector<int>& identities);

// All (camera A record, camera B record) pairs of the same identity.
std::vector<std::pair<std::size_t, std::size_t>> positive_pairs(const IdentityDataset& dataset);

// Unordered record pairs with different identities: C(n, 2) - sum_i C(n_i, 2).
std::size_t count_negative_pairs(const IdentityDataset& dataset);

}  // namespace siamreid
