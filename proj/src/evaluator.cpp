#include "siamreid/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace siamreid {

Gallery build_gallery(const IdentityDataset& dataset, std::uint64_t seed) {
  const auto cam_a = dataset.by_identity(Camera::A);
  const auto cam_b = dataset.by_identity(Camera::B);
  for (std::size_t id = 0; id < dataset.identity_count(); ++id) {
    if (cam_a[id].empty() || cam_b[id].empty()) {
      throw ProtocolError("identity '" + dataset.identity_names[id] + "' has no camera " +
                          (cam_a[id].empty() ? "A" : "B") + " image");
    }
  }
  Rng rng = make_stream(seed, "gallery");
  Gallery out;
  for (std::size_t id = 0; id < dataset.identity_count(); ++id) {
    out.queries.insert(out.queries.end(), cam_a[id].begin(), cam_a[id].end());
    out.gallery.push_back(cam_b[id][rng.below(cam_b[id].size())]);
  }
  return out;
}

namespace {

Tensor<float> stack_standardized(const IdentityDataset& dataset, const std::vector<std::size_t>& records) {
  if (records.empty()) throw ContractViolation("no images to describe");
  const Tensor<float>& first = dataset.records.at(records.front()).image;
  const std::size_t per = first.size();
  Tensor<float> out({records.size(), first.dim(0), first.dim(1), first.dim(2)});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Tensor<float> img = standardize(dataset.records.at(records[i]).image);
    if (img.size() != per) throw ContractViolation("images of different sizes in one dataset");
    std::copy(img.data().begin(), img.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

std::vector<int> identities_of(const IdentityDataset& dataset, const std::vector<std::size_t>& records) {
  std::vector<int> ids;
  ids.reserve(records.size());
  for (std::size_t r : records) ids.push_back(dataset.records.at(r).identity);
  return ids;
}

}  // namespace

ScoreMatrix score_descriptor_sets(const VerificationHead& head, const Tensor<float>& queries,
                                  const Tensor<float>& gallery, std::vector<int> query_ids,
                                  std::vector<int> gallery_ids) {
  const std::size_t d = head.dim();
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != d || gallery.dim(1) != d) {
    throw ContractViolation("score: descriptors " + shape_str(queries.shape()) + " and " +
                            shape_str(gallery.shape()) + " for a head of width " + std::to_string(d));
  }
  if (query_ids.size() != queries.dim(0) || gallery_ids.size() != gallery.dim(0)) {
    throw ContractViolation("score: identity lists do not match descriptor counts");
  }
  ScoreMatrix m;
  m.rows = queries.dim(0);
  m.cols = gallery.dim(0);
  m.values.resize(m.rows * m.cols);
  m.query_ids = std::move(query_ids);
  m.gallery_ids = std::move(gallery_ids);
  const auto q = queries.data();
  const auto g = gallery.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m.rows); ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < m.cols; ++j) {
      m.values[row * m.cols + j] = score_descriptors(head, q.subspan(row * d, d), g.subspan(j * d, d));
    }
  }
  return m;
}

ScoreMatrix score_all(const ModelParams& model, const BackboneConfig& config, const VerificationHead& head,
                      const IdentityDataset& dataset, const Gallery& protocol) {
  const Tensor<float> fq = extract_descriptors(model, config, stack_standardized(dataset, protocol.queries));
  const Tensor<float> fg = extract_descriptors(model, config, stack_standardized(dataset, protocol.gallery));
  return score_descriptor_sets(head, fq, fg, identities_of(dataset, protocol.queries),
                               identities_of(dataset, protocol.gallery));
}

std::vector<std::size_t> match_ranks(const ScoreMatrix& scores) {
  if (scores.rows == 0 || scores.cols == 0) throw ContractViolation("empty score matrix");
  if (scores.values.size() != scores.rows * scores.cols || scores.query_ids.size() != scores.rows ||
      scores.gallery_ids.size() != scores.cols) {
    throw ContractViolation("score matrix dimensions disagree with its identity lists");
  }
  std::vector<std::size_t> ranks(scores.rows);
  for (std::size_t q = 0; q < scores.rows; ++q) {
    const auto match = std::find(scores.gallery_ids.begin(), scores.gallery_ids.end(), scores.query_ids[q]);
    if (match == scores.gallery_ids.end()) {
      throw ProtocolError("query " + std::to_string(q) + " (identity " + std::to_string(scores.query_ids[q]) +
                          ") has no gallery entry");
    }
    const auto t = static_cast<std::size_t>(match - scores.gallery_ids.begin());
    const double s = scores.at(q, t);
    // Entries sorted ahead of the match: higher score, or equal score at a lower index.
    std::size_t ahead = 0;
    for (std::size_t g = 0; g < scores.cols; ++g) {
      const double v = scores.at(q, g);
      ahead += v > s || (v == s && g < t);
    }
    ranks[q] = ahead + 1;
  }
  return ranks;
}

std::vector<double> compute_cmc(const ScoreMatrix& scores) {
  const auto ranks = match_ranks(scores);
  std::vector<std::size_t> hits(scores.cols + 1, 0);
  for (std::size_t r : ranks) ++hits[r];
  std::vector<double> cmc(scores.cols);
  std::size_t cumulative = 0;
  for (std::size_t k = 1; k <= scores.cols; ++k) {
    cumulative += hits[k];
    cmc[k - 1] = static_cast<double>(cumulative) / static_cast<double>(scores.rows);
  }
  return cmc;
}

RankTable rank_table(const std::vector<double>& cmc, const std::vector<int>& ks) {
  RankTable t;
  t.ks = ks;
  for (int k : ks) {
    if (k < 1) throw ContractViolation("rank k must be >= 1");
    if (static_cast<std::size_t>(k) > cmc.size()) {
      t.cells.emplace_back("—");
      continue;
    }
    char cell[16];
    std::snprintf(cell, sizeof cell, "%.1f", 100.0 * cmc[static_cast<std::size_t>(k) - 1]);
    t.cells.emplace_back(cell);
  }
  return t;
}

std::string RankTable::text() const {
  std::ostringstream head, row;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const std::string label = "R-" + std::to_string(ks[i]);
    head << std::setw(7) << label;
    // The dash is one column wide but three bytes long.
    const bool dash = cells[i] == "—";
    row << std::string(7 - (dash ? 1 : cells[i].size()), ' ') << cells[i];
  }
  return head.str() + "\n" + row.str() + "\n";
}

std::string RankTable::csv() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < ks.size(); ++i) out << (i ? "," : "") << "R-" << ks[i];
  out << "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << "\n";
  return out.str();
}

std::string cmc_csv(const std::vector<double>& cmc) {
  std::ostringstream out;
  out << "k,cmc\n";
  char line[64];
  for (std::size_t k = 0; k < cmc.size(); ++k) {
    std::snprintf(line, sizeof line, "%zu,%.6f\n", k + 1, cmc[k]);
    out << line;
  }
  return out.str();
}

void emit_cmc_csv(const std::vector<double>& cmc, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << cmc_csv(cmc);
  if (!out) throw DataError("write failed for " + file.string());
}

std::vector<double> parse_cmc_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "k,cmc") throw DataError("CMC file must start with 'k,cmc'");
  std::vector<double> cmc;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed CMC row '" + line + "'");
    if (std::stoul(line.substr(0, comma)) != cmc.size() + 1) throw DataError("CMC rows out of order at '" + line + "'");
    cmc.push_back(std::stod(line.substr(comma + 1)));
  }
  return cmc;
}

EvalResult evaluate(const ModelParams& model, const BackboneConfig& config, const VerificationHead& head,
                    const IdentityDataset& dataset, std::uint64_t seed, int trials) {
  if (trials < 1) throw ContractViolation("trials must be >= 1");
  // Validates that every identity has both cameras before any forward pass.
  const Gallery first = build_gallery(dataset, seed);

  std::vector<std::size_t> all(dataset.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Tensor<float> desc = extract_descriptors(model, config, stack_standardized(dataset, all));
  const std::size_t d = desc.dim(1);
  auto rows = [&](const std::vector<std::size_t>& records) {
    Tensor<float> out({records.size(), d});
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::copy_n(desc.data().begin() + static_cast<std::ptrdiff_t>(records[i] * d), d,
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
  };

  EvalResult result;
  for (int t = 0; t < trials; ++t) {
    const Gallery protocol = t == 0 ? first : build_gallery(dataset, seed + static_cast<std::uint64_t>(t));
    const ScoreMatrix m = score_descriptor_sets(head, rows(protocol.queries), rows(protocol.gallery),
                                                identities_of(dataset, protocol.queries),
                                                identities_of(dataset, protocol.gallery));
    result.trials.push_back(compute_cmc(m));
  }
  result.cmc.assign(result.trials.front().size(), 0.0);
  for (const auto& c : result.trials) {
    for (std::size_t k = 0; k < c.size(); ++k) result.cmc[k] += c[k];
  }
  for (double& v : result.cmc) v /= trials;
  return result;
}

}  // namespace siamreid
