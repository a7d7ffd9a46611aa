#ifndef UMD_CAMERA_HPP_
#define UMD_CAMERA_HPP_

#include <Eigen/Dense>

#include "umd/tensor.hpp"

namespace umd {

// Pinhole intrinsics, no distortion. Pixel convention everywhere: u right,
// v down, origin at the top-left pixel center.
struct CameraIntrinsics {
  double fx, fy, cx, cy;

  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    UMD_REQUIRE(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
  }

  Eigen::Matrix3d K() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
  Eigen::Matrix3d K_inv() const { return K().inverse(); }

  // Rescales for an image resized by (sx, sy).
  CameraIntrinsics scaled(double sx, double sy) const {
    return CameraIntrinsics(fx * sx, fy * sy, cx * sx, cy * sy);
  }
};

// Homogeneous pixel coordinates: H x W x 3, channels (u, v, 1).
inline Tensor pixel_grid(int h, int w) {
  Tensor g({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.at(y, x, 0) = x;
      g.at(y, x, 1) = y;
      g.at(y, x, 2) = 1.0;
    }
  return g;
}

// Identity sampling coordinates: H x W x 2, channels (u, v).
inline Tensor identity_coords(int h, int w) {
  Tensor g({h, w, 2});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.at(y, x, 0) = x;
      g.at(y, x, 1) = y;
    }
  return g;
}

}  // namespace umd

#endif  // UMD_CAMERA_HPP_
