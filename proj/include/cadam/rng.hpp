#pragma once

// Deterministic randomness. A root seed splits into independent streams keyed
// by (iteration, purpose), so changing a batch size at one step never shifts
// the draws of any later step.

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

#include "cadam/types.hpp"

namespace cadam {

enum class StreamKind : std::uint64_t {
  kOuterGrad = 1,
  kInnerJacobian = 2,
  kInnerValue = 3,
  kTasks = 4,
  kOutputRule = 5,
  kInit = 6,
  kData = 7,
  kEval = 8,
  kDiagnostics = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// One random stream. Copying a stream copies its state, which is how
/// "same index, two points" draws are made (e.g. difference quotients).
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  /// A stream whose index() walks 0,1,2,... instead of sampling.
  static Stream enumerating() {
    Stream s(0);
    s.enumerate_ = true;
    return s;
  }

  bool is_enumerating() const { return enumerate_; }

  /// Uniform index in [0, m), i.i.d. with replacement; sequential in
  /// enumeration mode.
  std::size_t index(std::size_t m) {
    if (enumerate_) return cursor_++ % m;
    return std::uniform_int_distribution<std::size_t>(0, m - 1)(engine_);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

  /// Standard normal (ziggurat; stateless, so stream copies stay in lockstep).
  double normal() { return boost::random::normal_distribution<double>(0.0, 1.0)(engine_); }

  Vector normal_vector(Index n, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }

  Matrix normal_matrix(Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = scale * normal();
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool enumerate_ = false;
  std::size_t cursor_ = 0;
};

/// Root seed from which every stream of a run is derived.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t root) : root_(root) {}

  std::uint64_t root() const { return root_; }

  std::uint64_t seed_for(std::uint64_t t, StreamKind kind) const {
    return splitmix64(splitmix64(root_ ^ splitmix64(t)) + static_cast<std::uint64_t>(kind));
  }

  Stream stream(std::uint64_t t, StreamKind kind) const { return Stream(seed_for(t, kind)); }

  /// Independent subtree, e.g. one per task or per seed.
  SeedTree child(std::uint64_t id) const { return SeedTree(splitmix64(root_ + 0x632be59bd9b4e019ULL * (id + 1))); }

 private:
  std::uint64_t root_;
};

}  // namespace cadam
