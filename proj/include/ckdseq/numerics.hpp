#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "ckdseq/common.hpp"

namespace ckdseq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

template <typename Derived>
Vector sigmoid(const Eigen::MatrixBase<Derived>& v) {
  return v.unaryExpr([](double x) { return sigmoid(x); });
}

template <typename Derived>
Vector tanh_of(const Eigen::MatrixBase<Derived>& v) {
  return v.unaryExpr([](double x) { return std::tanh(x); });
}

template <typename Derived>
Vector relu_of(const Eigen::MatrixBase<Derived>& v) {
  return v.unaryExpr([](double x) { return relu(x); });
}

// Shape-checked product. Eigen only asserts in debug builds; the toolkit
// promises a recoverable error instead.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " * " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  return a * b;
}

// Max-subtracted softmax; safe for entries of any finite magnitude.
template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) throw ArgumentError("softmax: empty input");
  const Vector x = v;
  const double m = x.maxCoeff();
  Vector e = (x.array() - m).exp().matrix();
  return e / e.sum();
}

// Deterministic pseudo-random stream. The raw mt19937_64 sequence is fully
// specified by the standard, and every derived draw below is built from it
// with fixed arithmetic, so equal seeds give bit-equal streams on any
// platform. Distribution draws avoid std::*_distribution on purpose: those
// are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ArgumentError("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller with one cached value.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sd) { return mu + sd * normal(); }

  double exponential(double mean) {
    if (mean < 0.0) throw ArgumentError("exponential: negative mean");
    if (mean == 0.0) return 0.0;
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -mean * std::log(u);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Child stream keyed by tag; independent of draw order on the parent.
  Rng derive(std::string_view tag) const {
    return Rng(fnv1a(tag, fnv1a_u64(seed_, 0xcbf29ce484222325ull)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Fills a tensor with uniform draws in [-bound, bound], column-major order.
template <typename Derived>
void fill_uniform(Eigen::MatrixBase<Derived>& m, double bound, Rng& rng) {
  double* p = m.derived().data();
  for (Index i = 0; i < m.size(); ++i) p[i] = rng.uniform(-bound, bound);
}

}  // namespace ckdseq
