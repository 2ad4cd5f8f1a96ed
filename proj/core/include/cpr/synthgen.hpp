#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cpr/tensor.hpp"

namespace cpr {

/// Desk-scale stand-in for a target-domain fundus image as seen by a source
/// model: two nested elliptical classes (channel 0 = cup inside channel 1 =
/// disc), clustered per-region features, and a stack of noisy stochastic-pass
/// probabilities.
///
/// Probabilities are built in logit space. The clean logit of class c at a
/// pixel is sharpness * clip(signed distance to the true boundary, +-saturation)
/// + logit_shift[c], where the signed distance is >= 0.5 inside and <= -0.5
/// outside. Protuberances then overwrite the logit inside blobs centred on
/// true boundary pixels (a bulge pushes outside pixels to +strength, a dent
/// pushes inside pixels to -strength). Each pass adds i.i.d. N(0, pass_jitter^2)
/// logit noise; probabilities are sigmoid(logit) clamped to [0.005, 0.995].
struct ScenarioConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t depth = 8;
  double separation = 4.0;     ///< pairwise distance between region feature means
  double feature_noise = 1.0;  ///< RMS norm of per-pixel feature noise (per-dim std = noise / sqrt(depth))
  double sharpness = 3.0;
  double saturation = 4.0;
  std::array<double, 2> logit_shift{0.0, 0.0};
  int protuberances = 0;       ///< blobs per class
  double protuberance_min_radius = 2.0;
  double protuberance_max_radius = 4.0;
  double protuberance_strength = 1.7;
  int passes = 10;
  double pass_jitter = 0.0;
  std::uint64_t seed = 0;
  /// Seed of the three region feature means. Images sharing it live in one
  /// feature space, as they would under a common backbone; when unset the
  /// means are drawn per image from `seed`.
  std::optional<std::uint64_t> means_seed;

  void validate() const;

  /// No feature noise, no protuberances, no jitter: thresholding the mean
  /// probability at 0.75 reproduces the ground truth.
  static ScenarioConfig noiseless(std::uint64_t seed);
  /// Under-confident, protuberance-corrupted cup and disc; initial cup Dice
  /// falls in the 65-75 band.
  static ScenarioConfig under_confident(std::uint64_t seed);
};

struct Protuberance {
  std::size_t channel;
  std::size_t y;
  std::size_t x;
  double radius;
  bool bulge;
};

struct Scenario {
  FeatureMap features;  ///< [H, W, depth]
  ProbStack stack;      ///< [K, H, W, 2]
  LabelMask truth;      ///< [H, W, 2]
  std::vector<Protuberance> protuberances;
  std::array<std::vector<float>, 3> region_means;  ///< background, rim, cup
};

/// Deterministic in `cfg` (including the seed). Geometry is resampled when the
/// cup does not sit strictly inside the disc; after 100 failures throws
/// DegenerateError.
Scenario generate(const ScenarioConfig& cfg);

}  // namespace cpr
