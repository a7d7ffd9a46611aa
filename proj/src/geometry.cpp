#include "umd/geometry.hpp"

#include <cmath>

namespace umd {

namespace {
constexpr double kMinZ = 1e-6;

void check_depth(const Tensor& d) {
  UMD_REQUIRE(d.ndim() == 2, "reproject: depth must be H x W");
  UMD_REQUIRE(d.all_finite() && d.min_value() > 0,
              "reproject: depth must be positive");
}

// Mirrors coords_validity: sub-ulp border excursions stay valid.
inline bool in_bounds(double u, double v, int w, int h) {
  constexpr double eps = 1e-9;
  return u >= -eps && u <= w - 1 + eps && v >= -eps && v <= h - 1 + eps;
}
}  // namespace

ReprojectResult reproject(const Tensor& depth, const PoseSE3& T,
                          const CameraIntrinsics& K) {
  check_depth(depth);
  UMD_REQUIRE(T.valid(), "reproject: invalid pose");
  int h = depth.dim(0), w = depth.dim(1);
  ReprojectResult r{Tensor({h, w, 2}), Tensor({h, w})};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      Eigen::Vector3d p = T.R * (depth.at(y, x) * ray) + T.t;
      bool front = p.z() > kMinZ;
      double zs = std::max(p.z(), kMinZ);
      double u = K.fx * p.x() / zs + K.cx;
      double v = K.fy * p.y() / zs + K.cy;
      r.coords.at(y, x, 0) = u;
      r.coords.at(y, x, 1) = v;
      r.valid.at(y, x) = (front && in_bounds(u, v, w, h)) ? 1.0 : 0.0;
    }
  return r;
}

SampleResult synthesize_view(const Tensor& src, const Tensor& depth,
                             const PoseSE3& T, const CameraIntrinsics& K) {
  ReprojectResult rp = reproject(depth, T, K);
  SampleResult s = sample_image(src, rp.coords);
  s.valid = rp.valid;  // includes the behind-camera test, not just bounds
  return s;
}

Tensor rigid_flow(const Tensor& depth, const PoseSE3& T,
                  const CameraIntrinsics& K) {
  ReprojectResult rp = reproject(depth, T, K);
  int h = depth.dim(0), w = depth.dim(1);
  Tensor f({h, w, 2});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.at(y, x, 0) = rp.coords.at(y, x, 0) - x;
      f.at(y, x, 1) = rp.coords.at(y, x, 1) - y;
    }
  return f;
}

namespace ad {

using umd::ad::Var;
using umd::ad::constant;
using umd::ad::cmax;
using umd::ad::index;

VarReproject reproject(const Var& depth, const Var& rot9, const Var& t3,
                       const CameraIntrinsics& K) {
  check_depth(depth->val);
  UMD_REQUIRE(rot9->val.numel() == 9 && t3->val.numel() == 3,
              "reproject: pose must be rot9 + t3");
  int h = depth->val.dim(0), w = depth->val.dim(1);
  Tensor rx({h, w}), ry({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      rx.at(y, x) = (x - K.cx) / K.fx;
      ry.at(y, x) = (y - K.cy) / K.fy;
    }
  Var px = depth * constant(rx);
  Var py = depth * constant(ry);
  const Var& pz = depth;
  Var X = index(rot9, 0) * px + index(rot9, 1) * py + index(rot9, 2) * pz +
          index(t3, 0);
  Var Y = index(rot9, 3) * px + index(rot9, 4) * py + index(rot9, 5) * pz +
          index(t3, 1);
  Var Z = index(rot9, 6) * px + index(rot9, 7) * py + index(rot9, 8) * pz +
          index(t3, 2);
  // Clamp keeps the projection finite behind the camera; those pixels are
  // masked out instead of clamped in image space.
  Var zs = cmax(Z, constant(kMinZ));
  Var u = (X / zs) * K.fx + K.cx;
  Var v = (Y / zs) * K.fy + K.cy;

  VarReproject out{u, v, Tensor({h, w})};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double uu = u->val.at(y, x), vv = v->val.at(y, x);
      bool front = Z->val.at(y, x) > kMinZ;
      out.valid.at(y, x) = (front && in_bounds(uu, vv, w, h)) ? 1.0 : 0.0;
    }
  return out;
}

}  // namespace ad
}  // namespace umd
