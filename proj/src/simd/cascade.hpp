#pragma once

#include <array>
#include <cstddef>

namespace statekit::simd::detail {

inline constexpr std::size_t kBlock = 256;

// Pairwise combination of block totals in binary-counter order.
class Cascade {
 public:
  void push(double x) {
    std::size_t k = 0;
    while (full_[k]) {
      x = level_[k] + x;
      full_[k] = false;
      ++k;
    }
    level_[k] = x;
    full_[k] = true;
  }

  double total() const {
    double acc = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < level_.size(); ++k) {
      if (!full_[k]) continue;
      acc = any ? level_[k] + acc : level_[k];
      any = true;
    }
    return acc;
  }

 private:
  std::array<double, 64> level_{};
  std::array<bool, 64> full_{};
};

}  // namespace statekit::simd::detail
