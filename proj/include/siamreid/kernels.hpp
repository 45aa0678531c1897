#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace siamreid::kernels {

// Geometry of a 2-D cross-correlation over N x C x H x W data.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  // Validates the window against the padded input and fills out_h/out_w.
  static ConvGeometry make(std::size_t batch, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                           std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                           std::size_t padding);

  bool pointwise() const { return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0; }
  std::size_t in_plane() const { return in_h * in_w; }
  std::size_t out_plane() const { return out_h * out_w; }
  std::string describe() const;
};

// Dense convolution, weight Cout x Cin x kh x kw. Outputs are overwritten.
// `bias` / `dbias` may be empty.
template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias);

// Depthwise convolution, weight C x 1 x kh x kw, out_channels == in_channels.
template <class T>
void depthwise_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y);
template <class T>
void depthwise_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void depthwise_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw);

// Row-major C(M x N) = A(M x K) * B(K x N), C overwritten.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

// Serial, loop-per-definition versions of the kernels above. Kept as the
// ground truth the parallel kernels are tested and benchmarked against.
namespace reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias);

template <class T>
void depthwise_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y);
template <class T>
void depthwise_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void depthwise_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw);

}  // namespace reference

// Number of OpenMP threads the kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace siamreid::kernels
