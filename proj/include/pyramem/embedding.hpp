#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pyramem/error.hpp"

namespace pyramem {

// Dense real vector. Dimension checks against an index happen at the index
// boundary; the zero-vector check happens wherever cosine is required.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> values) : values_(std::move(values)) {}
  Embedding(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& mutable_values() noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double norm() const noexcept {
    double sum = 0.0;
    for (double v : values_) sum += v * v;
    return std::sqrt(sum);
  }

  bool is_zero() const noexcept {
    for (double v : values_)
      if (v != 0.0) return false;
    return true;
  }

  Embedding normalized() const {
    const double n = norm();
    if (n == 0.0) throw InvalidArgumentError("cannot normalize a zero vector");
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i] / n;
    return Embedding(std::move(out));
  }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double cosine(const Embedding& a, const Embedding& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw InvalidArgumentError("cosine undefined for zero vector");
  return dot(a.values(), b.values()) / (na * nb);
}

}  // namespace pyramem
