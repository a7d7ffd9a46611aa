#ifndef UMD_TENSOR_HPP_
#define UMD_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "umd/common.hpp"

namespace umd {

using Shape = std::vector<int>;

// Dense row-major double tensor, 1 to 4 dims. Images are stored (H, W, C).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), v_(checked_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    UMD_REQUIRE(v_.size() == checked_numel(shape_),
                "tensor data size does not match shape");
  }

  static Tensor scalar(double x) { return Tensor({1}, std::vector<double>{x}); }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t numel() const { return v_.size(); }
  bool empty() const { return v_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double& operator[](size_t i) { return v_[i]; }
  double operator[](size_t i) const { return v_[i]; }

  // (row, col) access for H x W tensors.
  double& at(int h, int w) { return v_[static_cast<size_t>(h) * shape_[1] + w]; }
  double at(int h, int w) const {
    return v_[static_cast<size_t>(h) * shape_[1] + w];
  }
  // (row, col, chan) access for H x W x C tensors.
  double& at(int h, int w, int c) {
    return v_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
  }
  double at(int h, int w, int c) const {
    return v_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
  }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double min_value() const {
    double m = v_.empty() ? 0.0 : v_[0];
    for (double x : v_) m = std::min(m, x);
    return m;
  }
  double max_value() const {
    double m = v_.empty() ? 0.0 : v_[0];
    for (double x : v_) m = std::max(m, x);
    return m;
  }
  double sum() const { return std::accumulate(v_.begin(), v_.end(), 0.0); }
  double mean() const { return v_.empty() ? 0.0 : sum() / double(v_.size()); }

 private:
  static size_t checked_numel(const Shape& s) {
    UMD_REQUIRE(!s.empty() && s.size() <= 4, "tensor rank must be 1..4");
    size_t n = 1;
    for (int d : s) {
      UMD_REQUIRE(d > 0, "tensor dims must be positive");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  Shape shape_;
  std::vector<double> v_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  UMD_REQUIRE(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace umd

#endif  // UMD_TENSOR_HPP_
