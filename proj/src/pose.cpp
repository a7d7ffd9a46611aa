#include "umd/pose.hpp"

#include <cmath>

namespace umd {

bool PoseSE3::valid(double tol) const {
  if (!t.allFinite() || !R.allFinite()) return false;
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      tol)
    return false;
  return std::fabs(R.determinant() - 1.0) <= tol;
}

PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b) {
  UMD_REQUIRE(a.valid() && b.valid(), "se3_compose: invalid pose");
  return {a.R * b.R, a.R * b.t + a.t};
}

PoseSE3 se3_invert(const PoseSE3& a) {
  UMD_REQUIRE(a.valid(), "se3_invert: invalid pose");
  Eigen::Matrix3d rt = a.R.transpose();
  return {rt, -(rt * a.t)};
}

PoseSE3 pose_from_axis_angle(const Eigen::Vector3d& w,
                             const Eigen::Vector3d& t) {
  double theta = w.norm();
  PoseSE3 p;
  p.t = t;
  if (theta < 1e-12) {
    p.R = Eigen::Matrix3d::Identity();
  } else {
    p.R = Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
  }
  return p;
}

double rotation_angle(const Eigen::Matrix3d& R) {
  double c = (R.trace() - 1.0) * 0.5;
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c);
}

}  // namespace umd
