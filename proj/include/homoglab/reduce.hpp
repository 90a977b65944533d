#pragma once

#include <cmath>
#include <span>

namespace homoglab {

/// Neumaier-compensated running sum.  All field reductions go through this so
/// results do not depend on how work is split.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double compensated_dot(std::span<const double> xs, std::span<const double> ys) noexcept {
  CompensatedSum acc;
  for (std::size_t i = 0; i < xs.size(); ++i) acc.add(xs[i] * ys[i]);
  return acc.value();
}

}  // namespace homoglab
