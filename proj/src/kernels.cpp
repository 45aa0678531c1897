#include "siamreid/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "siamreid/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace siamreid::kernels {

using idx = std::ptrdiff_t;

ConvGeometry ConvGeometry::make(std::size_t batch, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                                std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
                                std::size_t stride, std::size_t padding) {
  ConvGeometry g{batch, in_channels, in_h, in_w, out_channels, kernel_h, kernel_w, stride, padding, 0, 0};
  if (stride == 0) throw ContractViolation("convolution stride must be positive");
  if (kernel_h == 0 || kernel_w == 0 || kernel_h > in_h + 2 * padding || kernel_w > in_w + 2 * padding) {
    throw ContractViolation("convolution window " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                            " does not fit input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                            " with padding " + std::to_string(padding) + " (zero-size output)");
  }
  g.out_h = (in_h + 2 * padding - kernel_h) / stride + 1;
  g.out_w = (in_w + 2 * padding - kernel_w) / stride + 1;
  return g;
}

std::string ConvGeometry::describe() const {
  return "N=" + std::to_string(batch) + " Cin=" + std::to_string(in_channels) + " " + std::to_string(in_h) + "x" +
         std::to_string(in_w) + " -> Cout=" + std::to_string(out_channels) + " k=" + std::to_string(kernel_h) + "x" +
         std::to_string(kernel_w) + " s=" + std::to_string(stride) + " p=" + std::to_string(padding);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace {

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Unrolled-by-rows gemm over column panels; each C row sums over k in order.
template <class T>
void gemm_serial(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 256;
  alignas(64) T acc[kRows][kCols];
  for (std::size_t j0 = 0; j0 < n; j0 += kCols) {
    const std::size_t jn = std::min(kCols, n - j0);
    std::size_t i = 0;
    for (; i + kRows <= m; i += kRows) {
      for (auto& row : acc) std::fill(row, row + jn, T{0});
      const T* a0 = a + (i + 0) * k;
      const T* a1 = a + (i + 1) * k;
      const T* a2 = a + (i + 2) * k;
      const T* a3 = a + (i + 3) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n + j0;
        const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
#pragma omp simd
        for (std::size_t j = 0; j < jn; ++j) {
          const T bv = brow[j];
          acc[0][j] += v0 * bv;
          acc[1][j] += v1 * bv;
          acc[2][j] += v2 * bv;
          acc[3][j] += v3 * bv;
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) std::memcpy(c + (i + r) * n + j0, acc[r], jn * sizeof(T));
    }
    for (; i < m; ++i) {
      std::fill(acc[0], acc[0] + jn, T{0});
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n + j0;
        const T v = arow[p];
#pragma omp simd
        for (std::size_t j = 0; j < jn; ++j) acc[0][j] += v * brow[j];
      }
      std::memcpy(c + i * n + j0, acc[0], jn * sizeof(T));
    }
  }
}

// Rows ordered (ci, ky, kx); columns are output pixels.
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const T* xc = x + ci * g.in_plane();
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* dst = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * g.stride + ky) - static_cast<idx>(g.padding);
          T* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<idx>(g.in_h)) {
            std::fill(drow, drow + g.out_w, T{0});
            continue;
          }
          const T* srow = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * g.stride + kx) - static_cast<idx>(g.padding);
            drow[ox] = (ix < 0 || ix >= static_cast<idx>(g.in_w)) ? T{0} : srow[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t plane = g.out_plane();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    T* xc = dx + ci * g.in_plane();
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* src = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * g.stride + ky) - static_cast<idx>(g.padding);
          if (iy < 0 || iy >= static_cast<idx>(g.in_h)) continue;
          T* xrow = xc + static_cast<std::size_t>(iy) * g.in_w;
          const T* srow = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * g.stride + kx) - static_cast<idx>(g.padding);
            if (ix >= 0 && ix < static_cast<idx>(g.in_w)) xrow[ix] += srow[ox];
          }
        }
      }
    }
  }
}


// Copies one H x W plane into the centre of a zero-filled (H + 2p) x (W + 2p) buffer.
template <class T>
void pad_plane(const ConvGeometry& g, const T* src, T* dst) {
  const std::size_t pw = g.in_w + 2 * g.padding;
  std::fill(dst, dst + (g.in_h + 2 * g.padding) * pw, T{0});
  for (std::size_t y = 0; y < g.in_h; ++y) {
    std::memcpy(dst + (y + g.padding) * pw + g.padding, src + y * g.in_w, g.in_w * sizeof(T));
  }
}

// One padded plane through a K x K depthwise filter at stride S. Compile-time
// K and S let the tap loops unroll so the column loop vectorizes.
template <class T, std::size_t K, std::size_t S>
void depthwise_plane(const T* padded, std::size_t pw, const T* wc, T* yp, std::size_t out_h, std::size_t out_w) {
  T wk[K * K];
  for (std::size_t i = 0; i < K * K; ++i) wk[i] = wc[i];
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const T* base = padded + oy * S * pw;
    T* __restrict yrow = yp + oy * out_w;
#pragma omp simd
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      T s = 0;
#pragma GCC unroll 25
      for (std::size_t t = 0; t < K * K; ++t) s += wk[t] * base[(t / K) * pw + ox * S + t % K];
      yrow[ox] = s;
    }
  }
}

template <class T>
void depthwise_plane_any(const ConvGeometry& g, const T* padded, const T* wc, T* yp) {
  const std::size_t pw = g.in_w + 2 * g.padding;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    T* yrow = yp + oy * g.out_w;
    std::fill(yrow, yrow + g.out_w, T{0});
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T wv = wc[ky * g.kernel_w + kx];
        const T* src = padded + (oy * g.stride + ky) * pw + kx;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) yrow[ox] += wv * src[ox * g.stride];
      }
  }
}

template <class T>
void depthwise_plane_dispatch(const ConvGeometry& g, const T* padded, const T* wc, T* yp) {
  const std::size_t pw = g.in_w + 2 * g.padding;
  if (g.kernel_h == g.kernel_w) {
    const std::size_t k = g.kernel_h, st = g.stride;
    if (k == 3 && st == 1) return depthwise_plane<T, 3, 1>(padded, pw, wc, yp, g.out_h, g.out_w);
    if (k == 3 && st == 2) return depthwise_plane<T, 3, 2>(padded, pw, wc, yp, g.out_h, g.out_w);
    if (k == 5 && st == 1) return depthwise_plane<T, 5, 1>(padded, pw, wc, yp, g.out_h, g.out_w);
    if (k == 5 && st == 2) return depthwise_plane<T, 5, 2>(padded, pw, wc, yp, g.out_h, g.out_w);
  }
  depthwise_plane_any(g, padded, wc, yp);
}



// C[i][j] += sum_q A[i][q] * B[j][q] for row-major A (m x k) and B (n x k).
// 4 x 4 output tiles keep 16 lane-wise accumulators live across q.
template <class T>
void gemm_abt_add(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, std::size_t ldc) {
  constexpr std::size_t L = 64 / sizeof(T);
  const std::size_t kv = k - k % L;
  auto tile = [&](std::size_t i0, std::size_t mi, std::size_t j0, std::size_t nj) {
    alignas(64) T acc[4][4][L] = {};
    for (std::size_t q = 0; q < kv; q += L) {
      for (std::size_t r = 0; r < mi; ++r) {
        const T* ar = a + (i0 + r) * k + q;
        for (std::size_t t = 0; t < nj; ++t) {
          const T* bt = b + (j0 + t) * k + q;
#pragma omp simd
          for (std::size_t l = 0; l < L; ++l) acc[r][t][l] += ar[l] * bt[l];
        }
      }
    }
    for (std::size_t r = 0; r < mi; ++r)
      for (std::size_t t = 0; t < nj; ++t) {
        T sum = 0;
        for (std::size_t l = 0; l < L; ++l) sum += acc[r][t][l];
        const T* ar = a + (i0 + r) * k;
        const T* bt = b + (j0 + t) * k;
        for (std::size_t q = kv; q < k; ++q) sum += ar[q] * bt[q];
        c[(i0 + r) * ldc + j0 + t] += sum;
      }
  };
  for (std::size_t i = 0; i < m; i += 4) {
    const std::size_t mi = std::min<std::size_t>(4, m - i);
    for (std::size_t j = 0; j < n; j += 4) {
      const std::size_t nj = std::min<std::size_t>(4, n - j);
      if (mi == 4 && nj == 4) {
        tile(i, 4, j, 4);
      } else {
        tile(i, mi, j, nj);
      }
    }
  }
}

}  // namespace

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_serial(m, n, k, a, b, c);
}

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  const std::size_t in_sz = g.in_channels * g.in_plane();
  const std::size_t out_sz = g.out_channels * g.out_plane();
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  const bool direct = g.pointwise();
#pragma omp parallel
  {
    std::vector<T> col(direct ? 0 : rows * g.out_plane());
#pragma omp for schedule(static)
    for (idx n = 0; n < static_cast<idx>(g.batch); ++n) {
      const T* xn = x.data() + n * in_sz;
      T* yn = y.data() + n * out_sz;
      const T* src = xn;
      if (!direct) {
        im2col(g, xn, col.data());
        src = col.data();
      }
      gemm_serial(g.out_channels, g.out_plane(), rows, w.data(), src, yn);
      if (!bias.empty()) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          T* row = yn + co * g.out_plane();
          for (std::size_t q = 0; q < g.out_plane(); ++q) row[q] += bias[co];
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  const std::size_t in_sz = g.in_channels * g.in_plane();
  const std::size_t out_sz = g.out_channels * g.out_plane();
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  std::vector<T> wt(rows * g.out_channels);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t r = 0; r < rows; ++r) wt[r * g.out_channels + co] = w[co * rows + r];
  }
  const bool direct = g.pointwise();
#pragma omp parallel
  {
    std::vector<T> dcol(direct ? 0 : rows * g.out_plane());
#pragma omp for schedule(static)
    for (idx n = 0; n < static_cast<idx>(g.batch); ++n) {
      T* dxn = dx.data() + n * in_sz;
      const T* dyn = dy.data() + n * out_sz;
      if (direct) {
        gemm_serial(rows, g.out_plane(), g.out_channels, wt.data(), dyn, dxn);
      } else {
        gemm_serial(rows, g.out_plane(), g.out_channels, wt.data(), dyn, dcol.data());
        std::fill(dxn, dxn + in_sz, T{0});
        col2im_add(g, dcol.data(), dxn);
      }
    }
  }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias) {
  const std::size_t in_sz = g.in_channels * g.in_plane();
  const std::size_t out_sz = g.out_channels * g.out_plane();
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t plane = g.out_plane();
  const bool direct = g.pointwise();

  std::vector<T> cols;
  if (!direct) {
    cols.resize(g.batch * rows * plane);
#pragma omp parallel for schedule(static)
    for (idx n = 0; n < static_cast<idx>(g.batch); ++n) im2col(g, x.data() + n * in_sz, cols.data() + n * rows * plane);
  }

  // Blocks of output channels own their weight rows; samples are reduced in
  // index order, so the result does not depend on the thread count.
  constexpr std::size_t kBlock = 4;
  const idx blocks = static_cast<idx>((g.out_channels + kBlock - 1) / kBlock);
  std::fill(dw.begin(), dw.end(), T{0});
#pragma omp parallel for schedule(static)
  for (idx blk = 0; blk < blocks; ++blk) {
    const std::size_t co0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t mc = std::min(kBlock, g.out_channels - co0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* dyn = dy.data() + n * out_sz + co0 * plane;
      const T* src = direct ? x.data() + n * in_sz : cols.data() + n * rows * plane;
      gemm_abt_add(mc, rows, plane, dyn, src, dw.data() + co0 * rows, rows);
    }
    if (!dbias.empty()) {
      for (std::size_t co = co0; co < co0 + mc; ++co) {
        T db = 0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* dyrow = dy.data() + n * out_sz + co * plane;
          T s = 0;
          for (std::size_t q = 0; q < plane; ++q) s += dyrow[q];
          db += s;
        }
        dbias[co] = db;
      }
    }
  }
}

template <class T>
void depthwise_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y) {
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const std::size_t pw = g.in_w + 2 * g.padding;
#pragma omp parallel
  {
    std::vector<T> padded((g.in_h + 2 * g.padding) * pw);
#pragma omp for schedule(static)
    for (idx nc = 0; nc < static_cast<idx>(g.batch * g.in_channels); ++nc) {
      const std::size_t c = static_cast<std::size_t>(nc) % g.in_channels;
      pad_plane(g, x.data() + nc * g.in_plane(), padded.data());
      depthwise_plane_dispatch(g, padded.data(), w.data() + c * kk, y.data() + nc * g.out_plane());
    }
  }
}

template <class T>
void depthwise_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  // dx is the stride-1 correlation of the zero-dilated dy, framed by K - 1 - p
  // on each side, with the flipped filter.
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const std::size_t top = g.kernel_h - 1 - g.padding;
  const std::size_t left = g.kernel_w - 1 - g.padding;
  const std::size_t bh = g.in_h + g.kernel_h - 1;
  const std::size_t bw = g.in_w + g.kernel_w - 1;
  ConvGeometry unit = g;
  unit.in_h = bh;
  unit.in_w = bw;
  unit.padding = 0;
  unit.stride = 1;
  unit.out_h = g.in_h;
  unit.out_w = g.in_w;
#pragma omp parallel
  {
    std::vector<T> frame(bh * bw);
    std::vector<T> flipped(kk);
#pragma omp for schedule(static)
    for (idx nc = 0; nc < static_cast<idx>(g.batch * g.in_channels); ++nc) {
      const std::size_t c = static_cast<std::size_t>(nc) % g.in_channels;
      const T* wc = w.data() + c * kk;
      for (std::size_t t = 0; t < kk; ++t) flipped[t] = wc[kk - 1 - t];
      std::fill(frame.begin(), frame.end(), T{0});
      const T* dyp = dy.data() + nc * g.out_plane();
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        T* row = frame.data() + (oy * g.stride + top) * bw + left;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) row[ox * g.stride] = dyp[oy * g.out_w + ox];
      }
      depthwise_plane_dispatch(unit, frame.data(), flipped.data(), dx.data() + nc * g.in_plane());
    }
  }
}

template <class T>
void depthwise_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw) {
  // The padded input is split into stride x stride phase planes so that every
  // tap becomes one contiguous dot product against dy laid out at the phase width.
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const std::size_t st = g.stride;
  const std::size_t ph = g.in_h + 2 * g.padding;
  const std::size_t pw = g.in_w + 2 * g.padding;
  const std::size_t qh = (ph + st - 1) / st;
  const std::size_t qw = (pw + st - 1) / st;
  const std::size_t phase_sz = qh * qw + qw + g.kernel_w;
  const std::size_t len = g.out_h * qw;
#pragma omp parallel
  {
    std::vector<T> padded(ph * pw);
    std::vector<T> phases(st * st * phase_sz);
    std::vector<T> dyw(len);
#pragma omp for schedule(static)
    for (idx c = 0; c < static_cast<idx>(g.in_channels); ++c) {
      T* dwc = dw.data() + c * kk;
      std::fill(dwc, dwc + kk, T{0});
      for (std::size_t n = 0; n < g.batch; ++n) {
        const std::size_t nc = n * g.in_channels + static_cast<std::size_t>(c);
        pad_plane(g, x.data() + nc * g.in_plane(), padded.data());
        std::fill(phases.begin(), phases.end(), T{0});
        for (std::size_t a = 0; a < st; ++a)
          for (std::size_t b = 0; b < st; ++b) {
            T* dst = phases.data() + (a * st + b) * phase_sz;
            const std::size_t cols = (pw - b + st - 1) / st;
            for (std::size_t i = 0, yy = a; yy < ph; ++i, yy += st) {
              const T* src = padded.data() + yy * pw + b;
              T* drow = dst + i * qw;
              for (std::size_t j = 0; j < cols; ++j) drow[j] = src[j * st];
            }
          }
        std::fill(dyw.begin(), dyw.end(), T{0});
        const T* dyp = dy.data() + nc * g.out_plane();
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
          std::memcpy(dyw.data() + oy * qw, dyp + oy * g.out_w, g.out_w * sizeof(T));
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const T* src = phases.data() + ((ky % st) * st + kx % st) * phase_sz + (ky / st) * qw + kx / st;
            dwc[ky * g.kernel_w + kx] += dot(dyw.data(), src, len);
          }
      }
    }
  }
}

namespace reference {

namespace {
template <class T>
bool input_at(const ConvGeometry& g, std::span<const T> x, std::size_t n, std::size_t c, std::size_t oy,
              std::size_t ox, std::size_t ky, std::size_t kx, T& out) {
  const idx iy = static_cast<idx>(oy * g.stride + ky) - static_cast<idx>(g.padding);
  const idx ix = static_cast<idx>(ox * g.stride + kx) - static_cast<idx>(g.padding);
  if (iy < 0 || ix < 0 || iy >= static_cast<idx>(g.in_h) || ix >= static_cast<idx>(g.in_w)) return false;
  out = x[((n * g.in_channels + c) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)];
  return true;
}

std::size_t input_index(const ConvGeometry& g, std::size_t n, std::size_t c, std::size_t oy, std::size_t ox,
                        std::size_t ky, std::size_t kx, bool& valid) {
  const idx iy = static_cast<idx>(oy * g.stride + ky) - static_cast<idx>(g.padding);
  const idx ix = static_cast<idx>(ox * g.stride + kx) - static_cast<idx>(g.padding);
  valid = !(iy < 0 || ix < 0 || iy >= static_cast<idx>(g.in_h) || ix >= static_cast<idx>(g.in_w));
  if (!valid) return 0;
  return ((n * g.in_channels + c) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix);
}
}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          T s = 0;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                T v;
                if (input_at(g, x, n, ci, oy, ox, ky, kx, v))
                  s += v * w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
          if (!bias.empty()) s += bias[co];
          y[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox] = s;
        }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  std::fill(dx.begin(), dx.end(), T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                bool valid;
                const std::size_t i = input_index(g, n, ci, oy, ox, ky, kx, valid);
                if (valid) dx[i] += d * w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias) {
  std::fill(dw.begin(), dw.end(), T{0});
  if (!dbias.empty()) std::fill(dbias.begin(), dbias.end(), T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          if (!dbias.empty()) dbias[co] += d;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                T v;
                if (input_at(g, x, n, ci, oy, ox, ky, kx, v))
                  dw[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += d * v;
              }
        }
}

template <class T>
void depthwise_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          T s = 0;
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              T v;
              if (input_at(g, x, n, c, oy, ox, ky, kx, v)) s += v * w[(c * g.kernel_h + ky) * g.kernel_w + kx];
            }
          y[((n * g.in_channels + c) * g.out_h + oy) * g.out_w + ox] = s;
        }
}

template <class T>
void depthwise_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  std::fill(dx.begin(), dx.end(), T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.in_channels + c) * g.out_h + oy) * g.out_w + ox];
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              bool valid;
              const std::size_t i = input_index(g, n, c, oy, ox, ky, kx, valid);
              if (valid) dx[i] += d * w[(c * g.kernel_h + ky) * g.kernel_w + kx];
            }
        }
}

template <class T>
void depthwise_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw) {
  std::fill(dw.begin(), dw.end(), T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.in_channels + c) * g.out_h + oy) * g.out_w + ox];
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              T v;
              if (input_at(g, x, n, c, oy, ox, ky, kx, v)) dw[(c * g.kernel_h + ky) * g.kernel_w + kx] += d * v;
            }
        }
}

}  // namespace reference

#define SIAMREID_INSTANTIATE_KERNELS(T)                                                                              \
  template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                              \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<const T>,   \
                                  std::span<T>);                                                                     \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>); \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>, \
                                          std::span<T>);                                                             \
  template void depthwise_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>);     \
  template void depthwise_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,            \
                                            std::span<T>);                                                           \
  template void depthwise_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,           \
                                             std::span<T>);                                                          \
  template void reference::conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,           \
                                             std::span<const T>, std::span<T>);                                      \
  template void reference::conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,    \
                                                    std::span<T>);                                                   \
  template void reference::conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,   \
                                                     std::span<T>, std::span<T>);                                    \
  template void reference::depthwise_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,        \
                                                std::span<T>);                                                       \
  template void reference::depthwise_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                                       std::span<T>);                                                \
  template void reference::depthwise_backward_weight<T>(const ConvGeometry&, std::span<const T>,                    \
                                                        std::span<const T>, std::span<T>);

SIAMREID_INSTANTIATE_KERNELS(float)
SIAMREID_INSTANTIATE_KERNELS(double)

#undef SIAMREID_INSTANTIATE_KERNELS

}  // namespace siamreid::kernels
