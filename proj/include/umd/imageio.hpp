#ifndef UMD_IMAGEIO_HPP_
#define UMD_IMAGEIO_HPP_

#include <string>

#include "umd/tensor.hpp"

namespace umd {

// 8-bit PNG, gray or RGB. Values in [0,1]; writing quantizes with
// round(v * 255), reading maps back to v / 255.
void write_png(const std::string& path, const Tensor& img);
Tensor read_png(const std::string& path);  // H x W x C, C in {1, 3}

// 16-bit grayscale PNG for depth-like fields: stored as round(v * scale),
// saturated to [0, 65535]. Zero stays zero (conventional "no data").
void write_png16(const std::string& path, const Tensor& v, double scale);
Tensor read_png16(const std::string& path, double scale);

// Scalar field -> RGB via a fixed blue-green-yellow gradient, normalized to
// the field's [min, max] (flat input maps to the low end).
Tensor colormap(const Tensor& v);

// Nearest/linear helpers for value tensors (same half-pixel-center mapping
// as the differentiable resize).
Tensor resize_image(const Tensor& img, int out_h, int out_w);

}  // namespace umd

#endif  // UMD_IMAGEIO_HPP_
