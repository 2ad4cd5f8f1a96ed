#include "cpr/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

namespace cpr {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw ShapeError("shape overflow: " + to_string(shape));
    }
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(da[i]) != std::bit_cast<std::uint32_t>(db[i])) return false;
  }
  return true;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(t.shape()));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw ShapeError(std::string(what) + ": contains non-finite values");
}

namespace {

template <class Pred>
void check_values(const Tensor& t, const char* what, const char* expectation, Pred ok) {
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!ok(d[i])) {
      throw ShapeError(std::string(what) + ": element " + std::to_string(i) + " = " +
                       std::to_string(d[i]) + " is not " + expectation);
    }
  }
}

bool is_binary(float v) { return v == 0.0f || v == 1.0f; }
bool is_unit(float v) { return v >= 0.0f && v <= 1.0f; }

}  // namespace

void ProbTag::validate(const Tensor& t) { check_values(t, name, "in [0, 1]", is_unit); }
void UncertaintyTag::validate(const Tensor& t) {
  check_values(t, name, "nonnegative", [](float v) { return v >= 0.0f; });
}
void LabelTag::validate(const Tensor& t) { check_values(t, name, "binary", is_binary); }
void ReliabilityTag::validate(const Tensor& t) { check_values(t, name, "binary", is_binary); }
void SelectionTag::validate(const Tensor& t) { check_values(t, name, "binary", is_binary); }
void DistanceTag::validate(const Tensor& t) {
  check_values(t, name, "nonnegative", [](float v) { return v >= 0.0f; });
}

FeatureMap::FeatureMap(Tensor t) : tensor_(std::move(t)) {
  require_rank(tensor_, 3, "feature map");
  require_finite(tensor_, "feature map");
}

ProbStack::ProbStack(Tensor t) : tensor_(std::move(t)) {
  require_rank(tensor_, 4, "probability stack");
  require_finite(tensor_, "probability stack");
  check_values(tensor_, "probability stack", "in [0, 1]", is_unit);
}

}  // namespace cpr
