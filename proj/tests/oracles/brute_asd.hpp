#pragma once

// Average surface distance by all-pairs nearest boundary search.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

/// Foreground pixels of a binary [h, w] mask with a background 4-neighbour;
/// pixels outside the image count as background.
inline std::vector<std::size_t> brute_boundary(const std::vector<int>& mask, std::size_t h, std::size_t w) {
  auto at = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0;
    return mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  std::vector<std::size_t> out;
  for (long y = 0; y < static_cast<long>(h); ++y) {
    for (long x = 0; x < static_cast<long>(w); ++x) {
      if (!at(y, x)) continue;
      if (!at(y - 1, x) || !at(y + 1, x) || !at(y, x - 1) || !at(y, x + 1)) {
        out.push_back(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x));
      }
    }
  }
  return out;
}

inline double brute_asd(const std::vector<int>& a, const std::vector<int>& b, std::size_t h, std::size_t w) {
  const auto ba = brute_boundary(a, h, w), bb = brute_boundary(b, h, w);
  auto nearest = [&](std::size_t p, const std::vector<std::size_t>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t q : set) {
      const double dy = static_cast<double>(p / w) - static_cast<double>(q / w);
      const double dx = static_cast<double>(p % w) - static_cast<double>(q % w);
      best = std::min(best, std::sqrt(dy * dy + dx * dx));
    }
    return best;
  };
  double total = 0.0;
  for (std::size_t p : ba) total += nearest(p, bb);
  for (std::size_t q : bb) total += nearest(q, ba);
  return total / static_cast<double>(ba.size() + bb.size());
}

}  // namespace oracle
