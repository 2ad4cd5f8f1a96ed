#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpr/tensor.hpp"

namespace cpr {

/// 100 * 2|A n B| / (|A| + |B|) on channel `c`; 100 when both masks are empty.
double dice(const LabelMask& a, const LabelMask& b, std::size_t c);

/// Boundary pixels of channel `c`: foreground pixels with at least one
/// background 4-neighbour, the outside of the image counting as background.
std::vector<std::size_t> boundary_pixels(const LabelMask& mask, std::size_t c);

/// Average surface distance in pixels:
///   (sum_{p in dA} d(p, dB) + sum_{q in dB} d(q, dA)) / (|dA| + |dB|)
/// with d the Euclidean distance to the nearest boundary pixel of the other
/// mask. Throws DegenerateError when either mask is empty on channel `c`.
double asd(const LabelMask& a, const LabelMask& b, std::size_t c);

struct ClassMetrics {
  std::string name;
  double dice = 0.0;
  std::optional<double> asd;  ///< absent when undefined (an empty mask)
};

struct MetricReport {
  std::vector<ClassMetrics> classes;
  double avg_dice = 0.0;
  std::optional<double> avg_asd;

  /// {"<class>": {"dice": .., "asd": ..}, ..., "avg": {"dice": .., "asd": ..}};
  /// undefined ASD values are null.
  nlohmann::json to_json() const;
};

/// "cup", "disc" for two channels, "class<i>" otherwise.
std::vector<std::string> default_class_names(std::size_t channels);

MetricReport evaluate(const LabelMask& pred, const LabelMask& truth, const std::vector<std::string>& names);

/// Per-class mean over images; ASD averages only the images where it is defined.
MetricReport average_reports(std::span<const MetricReport> reports);

/// Thresholds a probability map: [p >= threshold].
LabelMask threshold_map(const ProbMap& prob, double threshold);

}  // namespace cpr
