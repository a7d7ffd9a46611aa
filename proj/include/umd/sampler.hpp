#ifndef UMD_SAMPLER_HPP_
#define UMD_SAMPLER_HPP_

#include "umd/image.hpp"
#include "umd/tensor.hpp"

namespace umd {

struct SampleResult {
  Tensor image;  // H' x W' x C
  Tensor valid;  // H' x W', 1 where coords landed inside the image
};

// Bilinear sampling of img (H x W x C) at coords (H' x W' x 2, channels
// (u, v)). Out-of-bounds coordinates clamp to the border and are flagged
// invalid. Non-differentiable path; the autodiff twin lives in umd::ad.
SampleResult sample_image(const Tensor& img, const Tensor& coords);
inline SampleResult sample_image(const ImageGrid& img, const Tensor& coords) {
  return sample_image(img.data, coords);
}

// 1 where (u, v) lies in [0, w-1] x [0, h-1].
Tensor coords_validity(const Tensor& coords, int h, int w);

}  // namespace umd

#endif  // UMD_SAMPLER_HPP_
