#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpr/adam.hpp"
#include "cpr/labeling.hpp"
#include "cpr/rng.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

struct DenoiseConfig {
  double gamma_low = 0.4;
  double gamma_high = 0.85;
  double gamma = 0.75;              ///< refined label threshold, y' = [p' >= gamma]
  bool refresh_prototypes = true;   ///< recompute prototypes from (p', y') before measuring distances

  void validate() const;
};

/// y' = [p' >= gamma].
LabelMask refined_labels(const ProbMap& refined, const DenoiseConfig& cfg);

struct SelectionResult {
  SelectionMask mask;         ///< m' = pixel_level * class_level
  SelectionMask pixel_level;  ///< [p' < gamma_low or p' > gamma_high]
  SelectionMask class_level;  ///< label agrees with the nearer prototype
};

SelectionResult selection_mask(const ProbMap& refined, const LabelMask& labels, const DistanceMaps& distances,
                               const DenoiseConfig& cfg);

/// Predictions are clamped to [kBceClamp, 1 - kBceClamp] inside the loss.
inline constexpr double kBceClamp = 1e-7;

struct BceLoss {
  double sum = 0.0;            ///< -sum_v m'_v [y log p + (1 - y) log(1 - p)]
  double mean = 0.0;           ///< sum / selected (0 when nothing is selected)
  std::size_t selected = 0;
};

BceLoss masked_bce(const ProbMap& pred, const LabelMask& labels, const SelectionMask& selected);

/// Per-pixel logistic model per class: sigmoid(w_c . f_v + b_c). Parameters are
/// stored flat, class after class, each as w_c [D] followed by b_c.
class ToySegmentor {
 public:
  ToySegmentor() = default;
  ToySegmentor(std::size_t classes, std::size_t depth);

  std::size_t classes() const noexcept { return classes_; }
  std::size_t depth() const noexcept { return depth_; }

  double weight(std::size_t c, std::size_t d) const noexcept { return values_[c * (depth_ + 1) + d]; }
  double& weight(std::size_t c, std::size_t d) noexcept { return values_[c * (depth_ + 1) + d]; }
  double bias(std::size_t c) const noexcept { return values_[c * (depth_ + 1) + depth_]; }
  double& bias(std::size_t c) noexcept { return values_[c * (depth_ + 1) + depth_]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double logit(std::span<const float> f, std::size_t c) const noexcept;
  ProbMap predict(const FeatureMap& feat) const;

 private:
  std::size_t classes_ = 0;
  std::size_t depth_ = 0;
  std::vector<double> values_;
};

struct BceGradient {
  BceLoss loss;                 ///< evaluated in f64 from the features
  std::vector<double> gradient; ///< d sum / d values, same layout as ToySegmentor
};

/// Masked BCE of the model on one image and its exact gradient. Clamped
/// predictions have zero derivative.
BceGradient bce_gradient(const FeatureMap& feat, const ToySegmentor& model, const LabelMask& labels,
                         const SelectionMask& selected);

struct AdaptSample {
  FeatureMap features;
  LabelMask labels;
  SelectionMask selected;
};

enum class ToyInit {
  kZero,      ///< all parameters zero
  kCentroid,  ///< nearest-centroid classifier of the selected pixels
};

struct AdaptConfig {
  int epochs = 10;
  std::size_t batch_size = 8;
  AdamConfig adam{3e-4, 0.9, 0.99, 1e-8};
  ToyInit init = ToyInit::kCentroid;
  double threshold = 0.5;  ///< prediction threshold used for evaluation
  unsigned threads = 1;

  void validate() const;
};

struct AdaptResult {
  ToySegmentor model;
  std::vector<double> epoch_loss;  ///< mean BCE per selected pixel, before each update
};

/// Trains a toy segmentor on the selected refined labels with Adam. The batch
/// gradient is the mean over its images of the per-image summed loss gradient.
/// Throws DegenerateError when no pixel is selected anywhere in the corpus.
AdaptResult adapt_toy(std::span<const AdaptSample> samples, const AdaptConfig& cfg, Rng& rng);

/// Centroid initialisation: w = mu_fg - mu_bg, b = (|mu_bg|^2 - |mu_fg|^2) / 2
/// from the selected pixels of each class. A class without selected pixels of
/// both kinds keeps zero parameters.
ToySegmentor centroid_init(std::span<const AdaptSample> samples);

}  // namespace cpr
