#ifndef UMD_POSE_HPP_
#define UMD_POSE_HPP_

#include <Eigen/Dense>

#include "umd/common.hpp"

namespace umd {

// Rigid transform: x' = R x + t. Construction and composition enforce that R
// stays a proper rotation.
struct PoseSE3 {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }
  bool valid(double tol = 1e-8) const;
};

PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b);
PoseSE3 se3_invert(const PoseSE3& a);

// Axis-angle (radians, magnitude = angle) + translation -> pose.
PoseSE3 pose_from_axis_angle(const Eigen::Vector3d& w, const Eigen::Vector3d& t);

// Rotation angle of R in radians, in [0, pi].
double rotation_angle(const Eigen::Matrix3d& R);

}  // namespace umd

#endif  // UMD_POSE_HPP_
