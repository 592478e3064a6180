#include "mfeit/io/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "mfeit/error.hpp"

namespace mfeit::io {

std::uint8_t to_gray(double value) {
  double mag = std::abs(value);
  if (!std::isfinite(mag)) mag = 1.0;
  mag = std::clamp(mag, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(mag * 255.0));
}

GrayImage quantize(const std::vector<double>& values, int height, int width) {
  if (static_cast<std::size_t>(height) * static_cast<std::size_t>(width) != values.size()) {
    throw ConfigError("image size mismatch: " + std::to_string(values.size()) + " values for " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  GrayImage img{height, width, {}};
  img.pixels.reserve(values.size());
  for (double v : values) img.pixels.push_back(to_gray(v));
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  if (next_token(in) != "P5") throw IoError("'" + path.string() + "' is not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoi(next_token(in));
    img.height = std::stoi(next_token(in));
    if (std::stoi(next_token(in)) != 255) throw IoError("only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header in '" + path.string() + "'");
  }
  if (img.width <= 0 || img.height <= 0) throw IoError("malformed PGM dimensions in '" + path.string() + "'");
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IoError("truncated PGM raster in '" + path.string() + "'");
  }
  return img;
}

void write_image_csv(const std::filesystem::path& path, const std::vector<double>& values, int height, int width) {
  if (static_cast<std::size_t>(height) * static_cast<std::size_t>(width) != values.size()) {
    throw ConfigError("image size mismatch writing '" + path.string() + "'");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(9);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      if (j) out << ',';
      out << values[static_cast<std::size_t>(i) * width + j];
    }
    out << '\n';
  }
}

std::vector<double> read_image_csv(const std::filesystem::path& path, int& height, int& width) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<double> values;
  std::string line;
  height = 0;
  width = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::logic_error&) {
        throw IoError("malformed value '" + cell + "' on line " + std::to_string(height + 1) + " of '" +
                      path.string() + "'");
      }
      ++cols;
    }
    if (width >= 0 && cols != width) {
      throw IoError("ragged row " + std::to_string(height + 1) + " in '" + path.string() + "'");
    }
    width = cols;
    ++height;
  }
  if (height == 0 || width <= 0) throw IoError("empty image file '" + path.string() + "'");
  return values;
}

}  // namespace mfeit::io
