#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "siamreid/evaluator.hpp"

using namespace siamreid;

namespace {

ScoreMatrix matrix(std::size_t q, std::size_t g, std::vector<double> values, std::vector<int> qids,
                   std::vector<int> gids) {
  ScoreMatrix m;
  m.rows = q;
  m.cols = g;
  m.values = std::move(values);
  m.query_ids = std::move(qids);
  m.gallery_ids = std::move(gids);
  return m;
}

// Sort every row explicitly and read off the position of the true match.
std::vector<double> brute_force_cmc(const ScoreMatrix& m) {
  std::vector<double> cmc(m.cols, 0.0);
  for (std::size_t q = 0; q < m.rows; ++q) {
    std::vector<std::size_t> order(m.cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m.at(q, a) > m.at(q, b); });
    std::size_t pos = 0;
    while (m.gallery_ids[order[pos]] != m.query_ids[q]) ++pos;
    for (std::size_t k = pos; k < m.cols; ++k) cmc[k] += 1.0;
  }
  for (double& c : cmc) c /= static_cast<double>(m.rows);
  return cmc;
}

ScoreMatrix random_matrix(Rng& rng) {
  const std::size_t g = 1 + rng.below(12), q = 1 + rng.below(15);
  std::vector<int> gids(g);
  std::iota(gids.begin(), gids.end(), 0);
  rng.shuffle(gids.begin(), gids.end());
  std::vector<int> qids(q);
  for (int& id : qids) id = static_cast<int>(rng.below(g));
  std::vector<double> values(q * g);
  // Coarse levels force plenty of ties.
  for (double& v : values) v = static_cast<double>(rng.below(5)) / 4.0;
  return matrix(q, g, std::move(values), std::move(qids), std::move(gids));
}

IdentityDataset two_camera_dataset(std::size_t ids, std::size_t per_a, std::size_t per_b) {
  IdentityDataset ds;
  for (std::size_t i = 0; i < ids; ++i) {
    ds.identity_names.push_back("p" + std::to_string(i));
    for (std::size_t k = 0; k < per_a; ++k) ds.records.push_back({static_cast<int>(i), Camera::A, {}, ""});
    for (std::size_t k = 0; k < per_b; ++k) ds.records.push_back({static_cast<int>(i), Camera::B, {}, ""});
  }
  return ds;
}

}  // namespace

TEST(Cmc, HandExample) {
  const auto m = matrix(2, 3, {0.9, 0.8, 0.1, 0.2, 0.6, 0.7}, {0, 1}, {0, 1, 2});
  const auto cmc = compute_cmc(m);
  ASSERT_EQ(cmc.size(), 3u);
  EXPECT_DOUBLE_EQ(cmc[0], 0.5);
  EXPECT_DOUBLE_EQ(cmc[1], 1.0);
  EXPECT_DOUBLE_EQ(cmc[2], 1.0);
  EXPECT_EQ(match_ranks(m), (std::vector<std::size_t>{1, 2}));
}

TEST(Cmc, TiesBreakByGalleryIndex) {
  EXPECT_EQ(match_ranks(matrix(1, 3, {0.5, 0.5, 0.5}, {1}, {0, 1, 2})), (std::vector<std::size_t>{2}));
  EXPECT_EQ(match_ranks(matrix(1, 3, {0.5, 0.5, 0.5}, {0}, {0, 1, 2})), (std::vector<std::size_t>{1}));
}

TEST(Cmc, MatchesBruteForceOnRandomMatrices) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = random_matrix(rng);
    const auto cmc = compute_cmc(m), oracle = brute_force_cmc(m);
    ASSERT_EQ(cmc.size(), oracle.size());
    for (std::size_t k = 0; k < cmc.size(); ++k) ASSERT_NEAR(cmc[k], oracle[k], 1e-12) << "trial " << trial;
  }
}

TEST(Cmc, MonotoneBoundedAndEndsAtOne) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cmc = compute_cmc(random_matrix(rng));
    for (std::size_t k = 0; k < cmc.size(); ++k) {
      ASSERT_GE(cmc[k], 0.0);
      ASSERT_LE(cmc[k], 1.0);
      if (k) ASSERT_GE(cmc[k], cmc[k - 1]);
    }
    ASSERT_DOUBLE_EQ(cmc.back(), 1.0);
  }
}

TEST(Cmc, InvariantToQueryPermutation) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = random_matrix(rng);
    for (double& v : m.values) v += rng.uniform() * 1e-3;  // no ties
    std::vector<std::size_t> perm(m.rows);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    ScoreMatrix p = m;
    for (std::size_t q = 0; q < m.rows; ++q) {
      p.query_ids[q] = m.query_ids[perm[q]];
      for (std::size_t g = 0; g < m.cols; ++g) p.values[q * m.cols + g] = m.at(perm[q], g);
    }
    const auto a = compute_cmc(m), b = compute_cmc(p);
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(Cmc, InvariantToMonotoneTransform) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = random_matrix(rng);
    ScoreMatrix t = m;
    for (double& v : t.values) v = std::exp(3.0 * v) - 7.0;
    EXPECT_EQ(compute_cmc(m), compute_cmc(t));
  }
}

TEST(Cmc, QueryWithoutGalleryEntryThrows) {
  EXPECT_THROW(compute_cmc(matrix(1, 2, {0.1, 0.2}, {5}, {0, 1})), ProtocolError);
}

TEST(RankTable, CellsAndDashes) {
  const std::vector<double> cmc{0.5, 0.75, 1.0};
  const auto t = rank_table(cmc, {1, 2, 5});
  EXPECT_EQ(t.cells, (std::vector<std::string>{"50.0", "75.0", "—"}));
  EXPECT_EQ(t.csv(), "R-1,R-2,R-5\n50.0,75.0,—\n");
  EXPECT_EQ(rank_table({1.0}, {1}).cells[0], "100.0");
  const std::string text = t.text();
  EXPECT_NE(text.find("    R-1"), std::string::npos);
  EXPECT_NE(text.find("   50.0"), std::string::npos);
  EXPECT_THROW(rank_table(cmc, {0}), ContractViolation);
}

TEST(CmcCsv, RoundTripAndTrailingNewline) {
  const std::vector<double> cmc{0.123456, 0.5, 1.0};
  const std::string text = cmc_csv(cmc);
  EXPECT_EQ(text, "k,cmc\n1,0.123456\n2,0.500000\n3,1.000000\n");
  EXPECT_EQ(parse_cmc_csv(text), cmc);
  const auto f = std::filesystem::temp_directory_path() / "siamreid_cmc.csv";
  emit_cmc_csv(cmc, f);
  std::ifstream in(f);
  const std::string back{std::istreambuf_iterator<char>(in), {}};
  EXPECT_EQ(back, text);
  std::filesystem::remove(f);
}

TEST(Gallery, OneCameraBImagePerIdentity) {
  const auto ds = two_camera_dataset(5, 2, 3);
  const Gallery g = build_gallery(ds, 7);
  EXPECT_EQ(g.queries.size(), 10u);
  ASSERT_EQ(g.gallery.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ds.records[g.gallery[i]].camera, Camera::B);
    EXPECT_EQ(ds.records[g.gallery[i]].identity, static_cast<int>(i));
  }
  for (std::size_t q : g.queries) EXPECT_EQ(ds.records[q].camera, Camera::A);
  const Gallery again = build_gallery(ds, 7);
  EXPECT_EQ(g.gallery, again.gallery);
  bool differs = false;
  for (std::uint64_t s = 8; s < 20 && !differs; ++s) differs = build_gallery(ds, s).gallery != g.gallery;
  EXPECT_TRUE(differs);
}

TEST(Gallery, MissingCameraIsProtocolError) {
  auto ds = two_camera_dataset(3, 1, 1);
  ds.records.pop_back();  // identity p2 loses camera B
  try {
    build_gallery(ds, 0);
    FAIL() << "expected a protocol error";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("p2"), std::string::npos);
  }
}

TEST(ScoreDescriptors, ZeroHeadScoresHalfEverywhere) {
  const auto head = VerificationHead::zeros(4);
  Tensor<float> q({2, 4}, 1.0f), g({3, 4}, 0.0f);
  const auto m = score_descriptor_sets(head, q, g, {0, 1}, {0, 1, 2});
  for (double v : m.values) EXPECT_EQ(v, 0.5);
  // All ties: rank equals the gallery position of the match.
  EXPECT_EQ(match_ranks(m), (std::vector<std::size_t>{1, 2}));
}

TEST(Evaluate, TrialsAverageAndShape) {
  BackboneConfig c;
  c.stem_channels = 4;
  c.stages = {{3, 2, 2, 8, 1}};
  c.descriptor_dim = 8;
  c.input_height = 16;
  c.input_width = 8;
  const auto ds = generate_synthetic(4, 2, 1, nullptr, 16, 8);
  auto head = VerificationHead::zeros(8);
  Rng rng(5);
  for (auto& [name, t] : head.params)
    for (float& v : t.data()) v = static_cast<float>(rng.normal());
  const auto r = evaluate(build_model(c, 0), c, head, ds, 3, 3);
  ASSERT_EQ(r.trials.size(), 3u);
  ASSERT_EQ(r.cmc.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k)
    EXPECT_NEAR(r.cmc[k], (r.trials[0][k] + r.trials[1][k] + r.trials[2][k]) / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.cmc.back(), 1.0);
}
