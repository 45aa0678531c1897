#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "siamreid/data.hpp"
#include "siamreid/head.hpp"

namespace siamreid {

// Single-shot protocol: every camera-A image is a query, one camera-B image
// per identity (chosen by seed) forms the gallery. Entries are record indices.
struct Gallery {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> gallery;
};

Gallery build_gallery(const IdentityDataset& dataset, std::uint64_t seed);

// Q x G same-person probabilities, row-major.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<int> query_ids;
  std::vector<int> gallery_ids;

  double at(std::size_t q, std::size_t g) const { return values[q * cols + g]; }
};

// One descriptor extraction per image, then the square layer and head per pair.
ScoreMatrix score_all(const ModelParams& model, const BackboneConfig& config, const VerificationHead& head,
                      const IdentityDataset& dataset, const Gallery& protocol);

// Scores from precomputed descriptors (rows of D floats).
ScoreMatrix score_descriptor_sets(const VerificationHead& head, const Tensor<float>& queries,
                                  const Tensor<float>& gallery, std::vector<int> query_ids,
                                  std::vector<int> gallery_ids);

// cmc[k-1] = fraction of queries whose identity ranks within the top k.
// Gallery sorted by descending score, ties by ascending gallery index.
std::vector<double> compute_cmc(const ScoreMatrix& scores);

// 1-based rank of the true match for each query.
std::vector<std::size_t> match_ranks(const ScoreMatrix& scores);

struct RankTable {
  std::vector<int> ks;
  std::vector<std::string> cells;  // "70.1" or "—" when k exceeds the gallery size

  std::string text() const;  // aligned header and value rows
  std::string csv() const;   // header "R-1,R-5,..."
};

RankTable rank_table(const std::vector<double>& cmc, const std::vector<int>& ks = {1, 5, 10, 15, 20});

// "k,cmc" followed by one row per rank with six decimals.
std::string cmc_csv(const std::vector<double>& cmc);
void emit_cmc_csv(const std::vector<double>& cmc, const std::filesystem::path& file);
std::vector<double> parse_cmc_csv(const std::string& text);

struct EvalResult {
  std::vector<double> cmc;  // mean over trials
  std::vector<std::vector<double>> trials;
};

// Descriptors are computed once and reused; trial t draws its gallery with
// the "gallery" sub-stream of seed + t.
EvalResult evaluate(const ModelParams& model, const BackboneConfig& config, const VerificationHead& head,
                    const IdentityDataset& dataset, std::uint64_t seed, int trials = 1);

}  // namespace siamreid
