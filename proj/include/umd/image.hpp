#ifndef UMD_IMAGE_HPP_
#define UMD_IMAGE_HPP_

#include <algorithm>

#include "umd/tensor.hpp"

namespace umd {

// An image with values guaranteed in [0,1]. Out-of-range inputs are clamped
// on ingestion; non-finite inputs are rejected.
struct ImageGrid {
  Tensor data;  // H x W x C

  ImageGrid() = default;
  explicit ImageGrid(Tensor t) : data(std::move(t)) {
    UMD_REQUIRE(data.ndim() == 3, "image must be H x W x C");
    UMD_REQUIRE(data.dim(0) >= 8 && data.dim(1) >= 8,
                "image must be at least 8 x 8");
    UMD_REQUIRE(data.all_finite(), "image values must be finite");
    for (size_t i = 0; i < data.numel(); ++i)
      data[i] = std::min(1.0, std::max(0.0, data[i]));
  }

  int height() const { return data.dim(0); }
  int width() const { return data.dim(1); }
  int channels() const { return data.dim(2); }
};

}  // namespace umd

#endif  // UMD_IMAGE_HPP_
