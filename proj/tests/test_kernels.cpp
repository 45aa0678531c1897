#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "siamreid/kernels.hpp"
#include "siamreid/rng.hpp"

namespace k = siamreid::kernels;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
  siamreid::Rng rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return v;
}

template <class T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::abs(static_cast<double>(b[i])));
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) / scale);
  }
  return worst;
}

struct Case {
  std::size_t n, c, h, w, co, kh, stride, pad;
};

// Shapes hit the unrolled 3x3 / 5x5 paths, strides 1 and 2, and odd sizes.
const Case kCases[] = {
    {2, 3, 9, 7, 4, 3, 1, 1},   {1, 4, 10, 6, 5, 3, 2, 1}, {2, 3, 11, 9, 2, 5, 2, 2},
    {1, 6, 5, 5, 6, 1, 1, 0},   {3, 2, 8, 4, 3, 5, 1, 2},  {1, 2, 7, 5, 3, 2, 1, 0},
    {2, 16, 20, 10, 24, 1, 1, 0}, {1, 5, 13, 11, 5, 4, 3, 1},
};

template <class T>
void check_dense(const Case& c, double tol) {
  const auto g = k::ConvGeometry::make(c.n, c.c, c.h, c.w, c.co, c.kh, c.kh, c.stride, c.pad);
  const auto x = random_vec<T>(c.n * c.c * c.h * c.w, 1);
  const auto w = random_vec<T>(c.co * c.c * c.kh * c.kh, 2);
  const auto bias = random_vec<T>(c.co, 3);
  const auto dy = random_vec<T>(c.n * c.co * g.out_plane(), 4);

  std::vector<T> y(dy.size()), y_ref(dy.size());
  k::conv2d_forward<T>(g, x, w, bias, y);
  k::reference::conv2d_forward<T>(g, x, w, bias, y_ref);
  EXPECT_LE(max_rel_diff(y, y_ref), tol) << g.describe();

  std::vector<T> dx(x.size()), dx_ref(x.size());
  k::conv2d_backward_input<T>(g, dy, w, dx);
  k::reference::conv2d_backward_input<T>(g, dy, w, dx_ref);
  EXPECT_LE(max_rel_diff(dx, dx_ref), tol) << g.describe();

  std::vector<T> dw(w.size()), dw_ref(w.size()), db(c.co), db_ref(c.co);
  k::conv2d_backward_weight<T>(g, x, dy, dw, db);
  k::reference::conv2d_backward_weight<T>(g, x, dy, dw_ref, db_ref);
  EXPECT_LE(max_rel_diff(dw, dw_ref), tol) << g.describe();
  EXPECT_LE(max_rel_diff(db, db_ref), tol) << g.describe();
}

template <class T>
void check_depthwise(const Case& c, double tol) {
  const auto g = k::ConvGeometry::make(c.n, c.c, c.h, c.w, c.c, c.kh, c.kh, c.stride, c.pad);
  const auto x = random_vec<T>(c.n * c.c * c.h * c.w, 5);
  const auto w = random_vec<T>(c.c * c.kh * c.kh, 6);
  const auto dy = random_vec<T>(c.n * c.c * g.out_plane(), 7);

  std::vector<T> y(dy.size()), y_ref(dy.size());
  k::depthwise_forward<T>(g, x, w, y);
  k::reference::depthwise_forward<T>(g, x, w, y_ref);
  EXPECT_LE(max_rel_diff(y, y_ref), tol) << g.describe();

  std::vector<T> dx(x.size()), dx_ref(x.size());
  k::depthwise_backward_input<T>(g, dy, w, dx);
  k::reference::depthwise_backward_input<T>(g, dy, w, dx_ref);
  EXPECT_LE(max_rel_diff(dx, dx_ref), tol) << g.describe();

  std::vector<T> dw(w.size()), dw_ref(w.size());
  k::depthwise_backward_weight<T>(g, x, dy, dw);
  k::reference::depthwise_backward_weight<T>(g, x, dy, dw_ref);
  EXPECT_LE(max_rel_diff(dw, dw_ref), tol) << g.describe();
}

}  // namespace

TEST(Kernels, DenseMatchesReferenceDouble) {
  for (const auto& c : kCases) check_dense<double>(c, 1e-12);
}

TEST(Kernels, DenseMatchesReferenceFloat) {
  for (const auto& c : kCases) check_dense<float>(c, 1e-4);
}

TEST(Kernels, DepthwiseMatchesReferenceDouble) {
  for (const auto& c : kCases) check_depthwise<double>(c, 1e-12);
}

TEST(Kernels, DepthwiseMatchesReferenceFloat) {
  for (const auto& c : kCases) check_depthwise<float>(c, 1e-4);
}

TEST(Kernels, GemmAgainstTripleLoop) {
  const std::size_t m = 13, n = 17, kk = 29;
  const auto a = random_vec<double>(m * kk, 8);
  const auto b = random_vec<double>(kk * n, 9);
  std::vector<double> c(m * n), expect(m * n, 0.0);
  k::gemm(m, n, kk, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) expect[i * n + j] += a[i * kk + p] * b[p * n + j];
  EXPECT_LE(max_rel_diff(c, expect), 1e-12);
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  const Case c{2, 8, 16, 8, 12, 3, 2, 1};
  const auto g = k::ConvGeometry::make(c.n, c.c, c.h, c.w, c.co, c.kh, c.kh, c.stride, c.pad);
  const auto x = random_vec<float>(c.n * c.c * c.h * c.w, 10);
  const auto w = random_vec<float>(c.co * c.c * 9, 11);
  const auto dy = random_vec<float>(c.n * c.co * g.out_plane(), 12);
  const int saved = k::max_threads();
  auto run = [&] {
    std::vector<float> dw(w.size()), db(c.co);
    k::conv2d_backward_weight<float>(g, x, dy, dw, db);
    return dw;
  };
  k::set_threads(1);
  const auto serial = run();
  k::set_threads(4);
  const auto parallel = run();
  k::set_threads(saved);
  EXPECT_EQ(serial, parallel);
}

TEST(Kernels, GeometryRejectsOversizedWindow) {
  EXPECT_THROW(k::ConvGeometry::make(1, 1, 2, 2, 1, 5, 5, 1, 0), std::invalid_argument);
}

TEST(Kernels, OutputSizeFormula) {
  const auto g = k::ConvGeometry::make(1, 3, 160, 80, 32, 3, 3, 2, 1);
  EXPECT_EQ(g.out_h, 80u);
  EXPECT_EQ(g.out_w, 40u);
}
