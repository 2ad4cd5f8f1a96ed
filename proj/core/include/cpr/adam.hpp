#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cpr {

struct AdamConfig {
  double lr = 3e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  void validate() const;
};

/// Moment accumulators for one flat parameter block.
struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<double> first;
  std::vector<double> second;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, std::size_t size) : config(cfg), first(size, 0.0), second(size, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   params -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace cpr
