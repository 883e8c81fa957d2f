#include "biov/core/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "biov/core/digest.hpp"
#include "biov/core/errors.hpp"

namespace biov {

std::string encode_pgm(const GrayImage& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
    throw InvalidArgument("encode_pgm: inconsistent image dimensions");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }

namespace {

struct HeaderReader {
  std::string_view bytes;
  const std::string& source;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > (1u << 24)) throw ParseError(source, start, "header number too large");
      ++pos;
    }
    if (pos == start) throw ParseError(source, pos, "expected a number in PGM header");
    return value;
  }
};

}  // namespace

GrayImage decode_pgm(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError(source, 0, "not a binary PGM (P5)");
  HeaderReader h{bytes, source, 2};
  const std::size_t w = h.number();
  const std::size_t ht = h.number();
  const std::size_t maxval = h.number();
  if (w == 0 || ht == 0) throw ParseError(source, h.pos, "zero image dimension");
  if (maxval == 0 || maxval > 255) throw ParseError(source, h.pos, "unsupported maxval " + std::to_string(maxval));
  if (h.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[h.pos]))) {
    throw ParseError(source, h.pos, "missing whitespace after maxval");
  }
  ++h.pos;
  if (bytes.size() - h.pos < w * ht) throw ParseError(source, bytes.size(), "truncated pixel data");
  GrayImage img(w, ht);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < w * ht; ++i) {
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[h.pos + i])) * scale;
  }
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path), path.string()); }

}  // namespace biov
