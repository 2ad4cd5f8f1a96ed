#pragma once

#include <cstddef>
#include <span>

#include "cpr/tensor.hpp"

namespace cpr {

struct LabelConfig {
  double gamma = 0.75;  ///< pseudo-label threshold, y = [p >= gamma]
  double eta = 0.05;    ///< uncertainty gate, reliable only where u < eta
  int passes = 10;      ///< stochastic passes K used when generating stacks

  void validate() const;
};

struct PassAggregate {
  ProbMap prob;                ///< per-pixel mean over the K passes
  UncertaintyMap uncertainty;  ///< per-pixel population std (divisor K)
  LabelMask labels;
};

/// Mean, population std and thresholded labels over the pass axis. The K values
/// at a pixel are sorted before accumulation so the result does not depend on
/// pass order.
PassAggregate aggregate_passes(const ProbStack& stack, const LabelConfig& cfg);

enum class Region { kForeground, kBackground };

const char* to_string(Region r) noexcept;

/// Class-wise foreground/background prototype vectors, each [C, D].
struct PrototypeSet {
  Tensor fg;
  Tensor bg;

  std::size_t classes() const noexcept { return fg.rank() == 2 ? fg.shape()[0] : 0; }
  std::size_t depth() const noexcept { return fg.rank() == 2 ? fg.shape()[1] : 0; }

  std::span<const float> get(Region r, std::size_t c) const noexcept {
    const Tensor& t = r == Region::kForeground ? fg : bg;
    return t.data().subspan(c * depth(), depth());
  }
};

/// Confidence-weighted mean feature of the reliably labelled pixels of each
/// class and region. Foreground pixels are weighted by p, background pixels by
/// 1 - p. Throws DegenerateError naming the class and region when a selection
/// is empty.
PrototypeSet compute_prototypes(const FeatureMap& feat, const ProbMap& prob,
                                const UncertaintyMap& uncertainty, const LabelMask& labels,
                                const LabelConfig& cfg);

/// As compute_prototypes, but a class/region with an empty selection takes its
/// vector from `fallback` (with a warning) instead of throwing.
PrototypeSet compute_prototypes_or(const FeatureMap& feat, const ProbMap& prob,
                                   const UncertaintyMap& uncertainty, const LabelMask& labels,
                                   const LabelConfig& cfg, const PrototypeSet& fallback);

struct DistanceMaps {
  DistanceMap fg;  ///< ||f_v - z_fg||_2, [H, W, C]
  DistanceMap bg;
};

DistanceMaps prototype_distances(const FeatureMap& feat, const PrototypeSet& protos);

struct ReliabilityResult {
  ReliabilityMask mask;
  DistanceMaps distances;
};

/// m = [u < eta] * ([y = 1][d_fg < d_bg] + [y = 0][d_fg > d_bg]). Ties give 0.
ReliabilityResult reliability_mask(const FeatureMap& feat, const PrototypeSet& protos,
                                   const UncertaintyMap& uncertainty, const LabelMask& labels,
                                   const LabelConfig& cfg);

/// The class-level agreement factor shared by the reliability and selection
/// masks: [y = 1][d_fg < d_bg] + [y = 0][d_fg > d_bg] for one pixel/class.
inline bool agrees_with_prototypes(float label, float d_fg, float d_bg) noexcept {
  return label == 1.0f ? d_fg < d_bg : d_fg > d_bg;
}

}  // namespace cpr
