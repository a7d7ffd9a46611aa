#ifndef UMD_GEOMETRY_HPP_
#define UMD_GEOMETRY_HPP_

#include "umd/autodiff.hpp"
#include "umd/camera.hpp"
#include "umd/pose.hpp"
#include "umd/sampler.hpp"

namespace umd {

// Backproject each pixel with its depth, transform by T, project with K.
// coords are source-image sampling positions (H x W x 2); valid is 0 where
// the point lands behind the camera (z <= 1e-6) or outside the image.
struct ReprojectResult {
  Tensor coords;
  Tensor valid;
};
ReprojectResult reproject(const Tensor& depth, const PoseSE3& T,
                          const CameraIntrinsics& K);

// I_{s->t}: source image resampled into the target frame through depth+pose.
SampleResult synthesize_view(const Tensor& src, const Tensor& depth,
                             const PoseSE3& T, const CameraIntrinsics& K);

// Pixel displacement caused by camera motion alone: reproject coords minus
// the identity grid.
Tensor rigid_flow(const Tensor& depth, const PoseSE3& T,
                  const CameraIntrinsics& K);

namespace ad {

// Differentiable twin. The pose enters as the 9 row-major rotation entries
// (typically from rodrigues) plus a translation 3-vector, so gradients reach
// depth, rotation, and translation. The validity mask is a plain value.
struct VarReproject {
  umd::ad::Var u, v;  // H x W each
  Tensor valid;       // H x W
};
VarReproject reproject(const umd::ad::Var& depth, const umd::ad::Var& rot9,
                       const umd::ad::Var& t3, const CameraIntrinsics& K);

inline umd::ad::Var synthesize_view(const umd::ad::Var& src,
                                    const VarReproject& rp) {
  return umd::ad::bilinear_sample(src, rp.u, rp.v);
}

}  // namespace ad
}  // namespace umd

#endif  // UMD_GEOMETRY_HPP_
