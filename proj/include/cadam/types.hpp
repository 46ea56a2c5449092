#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cadam {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf showed up in an iterate; `iteration()` is the offending t.
class NumericFailure : public Error {
 public:
  NumericFailure(std::size_t t, const std::string& what)
      : Error(what + " (t=" + std::to_string(t) + ")"), t_(t) {}
  std::size_t iteration() const { return t_; }

 private:
  std::size_t t_;
};

inline void expect_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(want) +
                            ", got " + std::to_string(got));
  }
}

/// FNV-1a over raw bytes; stable across runs and platforms of equal endianness.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace cadam
