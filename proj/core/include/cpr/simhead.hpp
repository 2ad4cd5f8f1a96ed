#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cpr/adam.hpp"
#include "cpr/rng.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

struct Offset {
  int dy;
  int dx;
};

/// All non-zero integer offsets within Euclidean distance `radius`, sorted
/// lexicographically by (dy, dx). The set is symmetric, so the negation of
/// offset o sits at index size() - 1 - o.
class NeighborhoodSpec {
 public:
  explicit NeighborhoodSpec(double radius = 4.0);

  double radius() const noexcept { return radius_; }
  std::span<const Offset> offsets() const noexcept { return offsets_; }
  std::size_t size() const noexcept { return offsets_.size(); }
  const Offset& operator[](std::size_t o) const noexcept { return offsets_[o]; }

  std::size_t opposite(std::size_t o) const noexcept { return offsets_.size() - 1 - o; }

  /// dy > 0, or dy == 0 and dx > 0. Each unordered pixel pair is reached by
  /// exactly one forward offset.
  bool is_forward(std::size_t o) const noexcept {
    return offsets_[o].dy > 0 || (offsets_[o].dy == 0 && offsets_[o].dx > 0);
  }

  /// Flat index of pixel v + offset o on an h x w grid, or -1 when outside.
  std::ptrdiff_t neighbor(std::size_t v, std::size_t o, std::size_t h, std::size_t w) const noexcept {
    const auto y = static_cast<std::ptrdiff_t>(v / w) + offsets_[o].dy;
    const auto x = static_cast<std::ptrdiff_t>(v % w) + offsets_[o].dx;
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return -1;
    return y * static_cast<std::ptrdiff_t>(w) + x;
  }

 private:
  double radius_;
  std::vector<Offset> offsets_;
};

/// Pairwise similarities S(v, o, c) = exp(-||f_v - f_{v+o}||_1), [H, W, |offsets|, C].
/// Entries whose neighbour falls outside the grid are stored as 0 and are
/// never read by consumers; in-bounds entries lie in (0, 1].
class SimilarityField {
 public:
  SimilarityField() = default;
  SimilarityField(NeighborhoodSpec spec, Tensor values);

  const NeighborhoodSpec& spec() const noexcept { return spec_; }
  std::size_t height() const noexcept { return values_.shape()[0]; }
  std::size_t width() const noexcept { return values_.shape()[1]; }
  std::size_t channels() const noexcept { return values_.shape()[3]; }

  float operator()(std::size_t pixel, std::size_t o, std::size_t c) const noexcept {
    return values_[(pixel * spec_.size() + o) * channels() + c];
  }
  std::ptrdiff_t neighbor(std::size_t pixel, std::size_t o) const noexcept {
    return spec_.neighbor(pixel, o, height(), width());
  }

  const Tensor& tensor() const noexcept { return values_; }

 private:
  NeighborhoodSpec spec_;
  Tensor values_{Shape{0, 0, 0, 0}};
};

/// Similarity of one class channel per entry of `per_class` (each [H, W, D_sim]).
SimilarityField similarity_field(std::span<const FeatureMap> per_class, const NeighborhoodSpec& spec);

/// One 1x1 projection f_sim = W^T f + b. Parameters live in one flat vector:
/// W row-major [d_in, d_sim] followed by b [d_sim]. With the bias disabled the
/// b entries stay zero and receive zero gradient.
class ClassHead {
 public:
  ClassHead() = default;
  ClassHead(std::size_t d_in, std::size_t d_sim, bool bias);

  std::size_t d_in() const noexcept { return d_in_; }
  std::size_t d_sim() const noexcept { return d_sim_; }
  bool has_bias() const noexcept { return bias_; }

  double weight(std::size_t i, std::size_t j) const noexcept { return values_[i * d_sim_ + j]; }
  double& weight(std::size_t i, std::size_t j) noexcept { return values_[i * d_sim_ + j]; }
  double bias(std::size_t j) const noexcept { return values_[d_in_ * d_sim_ + j]; }
  double& bias(std::size_t j) noexcept { return values_[d_in_ * d_sim_ + j]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t d_in_ = 0;
  std::size_t d_sim_ = 0;
  bool bias_ = true;
  std::vector<double> values_;
};

struct SimHeadParams {
  std::vector<ClassHead> heads;  ///< one branch per class channel

  /// W ~ U[-1/sqrt(d_in), 1/sqrt(d_in)], b = 0.
  static SimHeadParams random(std::size_t classes, std::size_t d_in, std::size_t d_sim, bool bias, Rng& rng);

  /// Rounds every parameter to the nearest f32, matching what persistence stores.
  void round_to_f32();
};

/// Per-pixel affine projection of `feat` through the branch of class `c`.
FeatureMap project_features(const FeatureMap& feat, const SimHeadParams& params, std::size_t c);

/// The similarity field of every class branch.
SimilarityField compute_similarities(const FeatureMap& feat, const SimHeadParams& params,
                                     const NeighborhoodSpec& spec);

/// A reliable pixel pair, j = pixel + spec[offset] with a forward offset.
struct PixelPair {
  std::uint32_t pixel;
  std::uint32_t offset;
};

struct PairPartition {
  std::vector<PixelPair> fg_fg;
  std::vector<PixelPair> bg_bg;
  std::vector<PixelPair> fg_bg;

  std::size_t total() const noexcept { return fg_fg.size() + bg_bg.size() + fg_bg.size(); }
};

/// In-bounds unordered pairs (each counted once) of class `c` where both ends
/// are reliable, split by their pseudo-labels.
PairPartition pair_labels(const LabelMask& labels, const ReliabilityMask& reliable,
                          const NeighborhoodSpec& spec, std::size_t c);

/// Log arguments below this are clamped in the similarity loss.
inline constexpr double kLogFloor = 1e-12;

/// L = -1/4 avg_ff log S - 1/4 avg_bb log S - 1/2 avg_fb log(1 - S) over the
/// pairs of channel `c`; an empty pair set contributes 0.
double similarity_loss(const SimilarityField& field, const PairPartition& pairs, std::size_t c);

struct LossGradient {
  double loss = 0.0;
  ClassHead gradient;  ///< same layout as the branch it was taken for
};

/// The similarity loss of one branch evaluated in f64 directly from the input
/// features, and its exact gradient with respect to W and b. The L1 derivative
/// uses sign(0) = 0; clamped log terms have zero derivative.
LossGradient loss_gradient(const FeatureMap& feat, const ClassHead& head, const PairPartition& pairs,
                           const NeighborhoodSpec& spec);

struct HeadSample {
  FeatureMap features;
  LabelMask labels;
  ReliabilityMask reliable;
};

struct HeadTrainConfig {
  std::size_t d_sim = 16;
  bool bias = true;
  int epochs = 16;
  std::size_t batch_size = 8;
  AdamConfig adam{};
  unsigned threads = 1;

  void validate() const;
};

struct HeadTrainResult {
  SimHeadParams params;
  /// epoch_loss[e][c]: mean per-image loss of class c over epoch e, measured
  /// before each update.
  std::vector<std::vector<double>> epoch_loss;

  double epoch_total(std::size_t e) const;
};

/// Trains every class branch with Adam on mini-batches of images. The batch
/// gradient is the mean of the per-image gradients, reduced in image order.
/// Epoch order is shuffled by `rng`. `init`, when given, replaces the random
/// initialisation. Returned parameters are rounded to f32.
HeadTrainResult train_head(std::span<const HeadSample> samples, const NeighborhoodSpec& spec,
                           const HeadTrainConfig& cfg, Rng& rng, const SimHeadParams* init = nullptr);

struct HeadMetadata {
  double radius = 4.0;
  std::uint64_t seed = 0;
  int epochs = 0;
};

/// Writes head_W_c<c>.npy [d_in, d_sim], head_b_c<c>.npy [d_sim] and head.json.
/// Returns the written file paths.
std::vector<std::filesystem::path> save_head(const SimHeadParams& params, const HeadMetadata& meta,
                                             const std::filesystem::path& dir);
SimHeadParams load_head(const std::filesystem::path& dir, HeadMetadata* meta = nullptr);

}  // namespace cpr
