#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mfeit::io {

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Linear map of contrast magnitude |v| in [0, 1] onto [0, 255], clipped.
std::uint8_t to_gray(double value);

/// Quantizes a row-major H*W real image.
GrayImage quantize(const std::vector<double>& values, int height, int width);

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Real-valued image as CSV (H lines of W comma separated values).
void write_image_csv(const std::filesystem::path& path, const std::vector<double>& values, int height, int width);
std::vector<double> read_image_csv(const std::filesystem::path& path, int& height, int& width);

}  // namespace mfeit::io
