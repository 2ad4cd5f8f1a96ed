#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpr/error.hpp"

namespace cpr {

using Shape = std::vector<std::size_t>;

/// Number of elements described by `shape`; throws ShapeError on overflow.
std::size_t element_count(const Shape& shape);

std::string to_string(const Shape& shape);

/// Dense row-major f32 array. product(shape) == data.size() always holds.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor filled(Shape shape, float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float operator[](std::size_t i) const noexcept { return data_[i]; }
  float& operator[](std::size_t i) noexcept { return data_[i]; }

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Same shape and identical bit patterns in every element.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

/// Throws ShapeError naming `what` unless `t` has the given rank.
void require_rank(const Tensor& t, std::size_t rank, const char* what);

/// Throws ShapeError naming `what` if any element is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

// Per-pixel maps laid out as [H, W, C]. The tag supplies a name and a value
// check run on construction from a raw tensor.

struct ProbTag {
  static constexpr const char* name = "probability map";
  static void validate(const Tensor& t);
};
struct UncertaintyTag {
  static constexpr const char* name = "uncertainty map";
  static void validate(const Tensor& t);
};
struct LabelTag {
  static constexpr const char* name = "label mask";
  static void validate(const Tensor& t);
};
struct ReliabilityTag {
  static constexpr const char* name = "reliability mask";
  static void validate(const Tensor& t);
};
struct SelectionTag {
  static constexpr const char* name = "selection mask";
  static void validate(const Tensor& t);
};
struct DistanceTag {
  static constexpr const char* name = "distance map";
  static void validate(const Tensor& t);
};

template <class Tag>
class ChannelMap {
 public:
  ChannelMap() = default;

  ChannelMap(std::size_t height, std::size_t width, std::size_t channels)
      : tensor_(Shape{height, width, channels}) {}

  explicit ChannelMap(Tensor t) : tensor_(std::move(t)) {
    require_rank(tensor_, 3, Tag::name);
    require_finite(tensor_, Tag::name);
    Tag::validate(tensor_);
  }

  std::size_t height() const noexcept { return dim_or_zero(0); }
  std::size_t width() const noexcept { return dim_or_zero(1); }
  std::size_t channels() const noexcept { return dim_or_zero(2); }
  std::size_t pixels() const noexcept { return height() * width(); }

  float operator()(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return tensor_[(y * width() + x) * channels() + c];
  }
  float& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return tensor_[(y * width() + x) * channels() + c];
  }

  /// Access by flat pixel index v = y * W + x.
  float value(std::size_t pixel, std::size_t c) const noexcept {
    return tensor_[pixel * channels() + c];
  }
  float& value(std::size_t pixel, std::size_t c) noexcept {
    return tensor_[pixel * channels() + c];
  }

  const Tensor& tensor() const noexcept { return tensor_; }
  Tensor&& release() && noexcept { return std::move(tensor_); }

 private:
  std::size_t dim_or_zero(std::size_t axis) const noexcept {
    return tensor_.rank() > axis ? tensor_.shape()[axis] : 0;
  }

  Tensor tensor_;
};

using ProbMap = ChannelMap<ProbTag>;
using UncertaintyMap = ChannelMap<UncertaintyTag>;
using LabelMask = ChannelMap<LabelTag>;
using ReliabilityMask = ChannelMap<ReliabilityTag>;
using SelectionMask = ChannelMap<SelectionTag>;
using DistanceMap = ChannelMap<DistanceTag>;

/// Dense per-pixel feature vectors, [H, W, D].
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t depth)
      : tensor_(Shape{height, width, depth}) {}
  explicit FeatureMap(Tensor t);

  std::size_t height() const noexcept { return tensor_.rank() == 3 ? tensor_.shape()[0] : 0; }
  std::size_t width() const noexcept { return tensor_.rank() == 3 ? tensor_.shape()[1] : 0; }
  std::size_t depth() const noexcept { return tensor_.rank() == 3 ? tensor_.shape()[2] : 0; }
  std::size_t pixels() const noexcept { return height() * width(); }

  std::span<const float> pixel(std::size_t v) const noexcept {
    return tensor_.data().subspan(v * depth(), depth());
  }
  std::span<float> pixel(std::size_t v) noexcept {
    return tensor_.data().subspan(v * depth(), depth());
  }

  const Tensor& tensor() const noexcept { return tensor_; }
  Tensor&& release() && noexcept { return std::move(tensor_); }

 private:
  Tensor tensor_;
};

/// K stochastic forward-pass probabilities, [K, H, W, C], values in [0, 1].
class ProbStack {
 public:
  ProbStack() = default;
  explicit ProbStack(Tensor t);

  std::size_t passes() const noexcept { return tensor_.shape()[0]; }
  std::size_t height() const noexcept { return tensor_.shape()[1]; }
  std::size_t width() const noexcept { return tensor_.shape()[2]; }
  std::size_t channels() const noexcept { return tensor_.shape()[3]; }

  float operator()(std::size_t k, std::size_t pixel, std::size_t c) const noexcept {
    return tensor_[(k * height() * width() + pixel) * channels() + c];
  }

  const Tensor& tensor() const noexcept { return tensor_; }

 private:
  Tensor tensor_{Shape{0, 0, 0, 0}};
};

/// Throws ShapeError unless the two grids agree on height and width.
template <class A, class B>
void require_same_grid(const A& a, const B& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": grid mismatch (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

}  // namespace cpr
