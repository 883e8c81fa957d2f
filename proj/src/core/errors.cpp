#include "biov/core/errors.hpp"

#include <sstream>

namespace biov {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::string shape_message(const std::string& layer, const std::vector<std::size_t>& expected,
                          const std::vector<std::size_t>& actual, const std::string& detail) {
  std::string msg = "shape mismatch at layer '" + layer + "': expected " + shape_to_string(expected) +
                    ", got " + shape_to_string(actual);
  if (!detail.empty()) msg += " (" + detail + ")";
  return msg;
}

}  // namespace

ShapeError::ShapeError(std::string layer, std::vector<std::size_t> expected, std::vector<std::size_t> actual,
                       const std::string& detail)
    : Error(shape_message(layer, expected, actual, detail)),
      layer_(std::move(layer)),
      expected_(std::move(expected)),
      actual_(std::move(actual)) {}

NumericalError::NumericalError(std::string where, const std::string& detail)
    : Error("non-finite value at '" + where + "': " + detail), where_(std::move(where)) {}

KeyError::KeyError(std::string key, const std::string& detail)
    : Error("key '" + key + "'" + (detail.empty() ? std::string{} : ": " + detail)), key_(std::move(key)) {}

IoError::IoError(std::string path, const std::string& detail)
    : Error("I/O error on '" + path + "': " + detail), path_(std::move(path)) {}

ParseError::ParseError(std::string source, std::size_t offset, const std::string& detail)
    : Error("parse error in '" + source + "' at offset " + std::to_string(offset) + ": " + detail),
      source_(std::move(source)),
      offset_(offset) {}

}  // namespace biov
