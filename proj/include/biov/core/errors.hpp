#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace biov {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor reached a layer with a shape it cannot accept.
class ShapeError : public Error {
 public:
  ShapeError(std::string layer, std::vector<std::size_t> expected, std::vector<std::size_t> actual,
             const std::string& detail = {});

  const std::string& layer() const noexcept { return layer_; }
  const std::vector<std::size_t>& expected() const noexcept { return expected_; }
  const std::vector<std::size_t>& actual() const noexcept { return actual_; }

 private:
  std::string layer_;
  std::vector<std::size_t> expected_;
  std::vector<std::size_t> actual_;
};

/// NaN or Inf produced (or found) at a named location.
class NumericalError : public Error {
 public:
  NumericalError(std::string where, const std::string& detail);
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Missing or unexpected parameter / gradient key.
class KeyError : public Error {
 public:
  explicit KeyError(std::string key, const std::string& detail = {});
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Violated precondition on an argument value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string& detail);
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed file content; offset is the byte (or line) position of the fault.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t offset, const std::string& detail);
  const std::string& source() const noexcept { return source_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string source_;
  std::size_t offset_;
};

/// Two artifacts that must agree (checkpoint kind, task, tower layout) do not.
class MismatchError : public Error {
 public:
  using Error::Error;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace biov
