#pragma once

#include <filesystem>

#include "siamreid/tensor.hpp"

namespace siamreid {

// Decodes a PNG or binary PPM (P6, maxval 255) into a 3 x H x W tensor in [0, 1].
// Grayscale and alpha PNGs are converted to RGB. Throws DataError on failure.
Tensor<float> read_image(const std::filesystem::path& file);

// Quantizes a 3 x H x W tensor in [0, 1] to 8 bits (round to nearest).
void write_png(const std::filesystem::path& file, const Tensor<float>& image);
void write_ppm(const std::filesystem::path& file, const Tensor<float>& image);

}  // namespace siamreid
