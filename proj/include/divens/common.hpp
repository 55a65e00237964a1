#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace divens {

using Rng = std::mt19937_64;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
  /// `member` is the position of the offending genome in a population.
  DivergenceError(const std::string& what, std::size_t member)
      : Error(what + " (genome " + std::to_string(member) + ")"), member_(member), has_member_(true) {}
  bool has_member() const { return has_member_; }
  std::size_t member() const { return member_; }

 private:
  std::size_t member_ = 0;
  bool has_member_ = false;
};

class DegenerateData : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Independent seed for sub-stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::uint64_t fnv1a64(std::string_view bytes);

std::string hex64(std::uint64_t v);

/// Runs fn(i) for i in [0, n). Results must be written to slot i only, so the
/// outcome matches serial execution. Uses at most hardware_concurrency threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, std::string_view contents);

std::string read_file(const std::string& path);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace divens
