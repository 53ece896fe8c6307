#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace xfsc::detail {

// Correctly rounded floating-point summation (Shewchuk's partials, as in
// Python's math.fsum). The result does not depend on the order in which
// terms are added, which is what makes scores bit-identical under example
// and label permutations.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction when the remaining partials push past a tie.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

  void clear() { partials_.clear(); }

 private:
  std::vector<double> partials_;
};

inline double exact_sum(std::span<const double> xs) {
  ExactSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

}  // namespace xfsc::detail
