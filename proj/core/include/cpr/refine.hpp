#pragma once

#include <cstddef>
#include <vector>

#include "cpr/simhead.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

struct RefineConfig {
  double beta = 2.0;        ///< similarity exponent, >= 1
  int rounds = 4;           ///< revision rounds t
  bool include_self = true; ///< pixel i joins its own average with S_ii = 1
  bool calibrate = true;    ///< divide by the per-image channel maximum afterwards
  double epsilon_max = 1e-8;

  void validate() const;
};

struct NeighborWeight {
  std::size_t pixel;
  double weight;
};

/// Normalised revision weights S_ij^beta / sum_j S_ij^beta of pixel `pixel`
/// in channel `c`, over in-bounds neighbours in offset order (self first when
/// included).
std::vector<NeighborWeight> revision_weights(const SimilarityField& field, const RefineConfig& cfg,
                                             std::size_t pixel, std::size_t c);

/// `cfg.rounds` rounds of similarity-weighted neighbourhood averaging of
/// channel `c`; other channels are copied through. Weights are computed once
/// and reused; each round reads only the previous round's (f32) output.
ProbMap revise(const ProbMap& prob, const SimilarityField& field, const RefineConfig& cfg, std::size_t c);

struct Calibration {
  ProbMap prob;
  float channel_max = 0.0f;
  bool degenerate = false;  ///< max < epsilon_max; channel left unchanged
};

/// Divides channel `c` by its maximum over the image.
Calibration calibrate(const ProbMap& prob, const RefineConfig& cfg, std::size_t c);

struct RefineResult {
  ProbMap revised;     ///< after revision only
  ProbMap calibrated;  ///< after calibration (equals `revised` when disabled)
  std::vector<bool> degenerate;
};

/// Revision followed by calibration on every channel.
RefineResult refine(const ProbMap& prob, const SimilarityField& field, const RefineConfig& cfg);

}  // namespace cpr
