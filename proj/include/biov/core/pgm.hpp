#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace biov {

/// Single-channel image, row-major, values nominally in [0, 1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h, fill) {}

  float& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  float at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary P5, maxval 255. Values are clamped to [0, 1] and rounded to the
/// nearest level.
std::string encode_pgm(const GrayImage& image);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Accepts P5 with maxval <= 255 and header comments. Pixels are v / maxval.
GrayImage decode_pgm(std::string_view bytes, const std::string& source = "<pgm>");
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace biov
