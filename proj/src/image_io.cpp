#include "siamreid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace siamreid {

namespace {

std::string lower_ext(const std::filesystem::path& file) {
  std::string ext = file.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

Tensor<float> from_interleaved(const std::vector<unsigned char>& rgb, std::size_t h, std::size_t w) {
  Tensor<float> out({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out[(c * h + y) * w + x] = rgb[(y * w + x) * 3 + c] / 255.0f;
  return out;
}

std::vector<unsigned char> to_interleaved(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractViolation("expected a 3 x H x W image, got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image[(c * h + y) * w + x], 0.0f, 1.0f);
        rgb[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  return rgb;
}

Tensor<float> read_png(const std::filesystem::path& file) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, file.c_str())) {
    throw DataError("cannot decode PNG " + file.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode PNG " + file.string() + ": " + img.message);
  }
  return from_interleaved(rgb, img.height, img.width);
}

// Skips whitespace and '#' comments in a PNM header.
int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  return v;
}

Tensor<float> read_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") throw DataError(file.string() + " is not a binary PPM (P6)");
  const int w = read_header_int(in);
  const int h = read_header_int(in);
  const int maxval = read_header_int(in);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw DataError(file.string() + ": unsupported PPM header (need positive size and maxval 255)");
  }
  in.get();
  std::vector<unsigned char> rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) throw DataError(file.string() + ": truncated PPM payload");
  return from_interleaved(rgb, static_cast<std::size_t>(h), static_cast<std::size_t>(w));
}

}  // namespace

Tensor<float> read_image(const std::filesystem::path& file) {
  const std::string ext = lower_ext(file);
  if (ext == ".png") return read_png(file);
  if (ext == ".ppm") return read_ppm(file);
  throw DataError("unsupported image format: " + file.string() + " (expected .png or .ppm)");
}

void write_png(const std::filesystem::path& file, const Tensor<float>& image) {
  const auto rgb = to_interleaved(image);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(2));
  img.height = static_cast<png_uint_32>(image.dim(1));
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, file.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + file.string() + ": " + img.message);
  }
}

void write_ppm(const std::filesystem::path& file, const Tensor<float>& image) {
  const auto rgb = to_interleaved(image);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + file.string() + " for writing");
  out << "P6\n" << image.dim(2) << ' ' << image.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw DataError("failed writing " + file.string());
}

}  // namespace siamreid
