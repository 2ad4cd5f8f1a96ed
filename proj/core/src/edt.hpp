#pragma once

// Exact squared Euclidean distance transform (lower envelope of parabolas,
// separable over rows and columns). Internal to the core library.

#include <cstddef>
#include <limits>
#include <algorithm>
#include <vector>

namespace cpr::detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform of a sampled function along one line
// (lower envelope of parabolas).
inline void transform_line(const double* f, std::size_t n, double* out, std::vector<std::size_t>& v,
                    std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    for (std::size_t q = 0; q < n; ++q) out[q] = kInf;
    return;
  }
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double qd = static_cast<double>(q);
    double s;
    while (true) {
      const double vk = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double d = qd - static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest site.
inline std::vector<double> squared_edt(const std::vector<char>& sites, std::size_t h, std::size_t w) {
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = sites[i] ? 0.0 : kInf;
  std::vector<double> line(std::max(h, w)), result(std::max(h, w));
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    transform_line(line.data(), h, result.data(), v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = result[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    transform_line(grid.data() + y * w, w, result.data(), v, z);
    std::copy(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(w), grid.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return grid;
}

}  // namespace cpr::detail
