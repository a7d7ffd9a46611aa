#ifndef UMD_CONSISTENCY_HPP_
#define UMD_CONSISTENCY_HPP_

#include <vector>

#include "umd/autodiff.hpp"
#include "umd/geometry.hpp"

namespace umd {

// Matching costs across discrete depth hypotheses. The canonical hypothesis
// set from depth_hypotheses() ascends in depth; argmin_depth requires that,
// the builder itself does not (costs are per-slice independent).
struct CostVolume {
  Tensor costs;                    // H x W x B
  std::vector<double> hypotheses;  // depths, meters

  void validate_ascending() const;
};

// B depths linearly spaced in inverse depth over [d_min, d_max], ascending.
std::vector<double> depth_hypotheses(double d_min, double d_max, int b);

// For each hypothesis depth, warp feat_s into the target view at that
// constant depth and record the channel-mean absolute feature difference.
// Pixels whose warp is invalid at a hypothesis get that pixel's maximum
// valid cost (or 0 if no hypothesis is valid there).
CostVolume build_cost_volume(const Tensor& feat_t, const Tensor& feat_s,
                             const PoseSE3& T, const CameraIntrinsics& K,
                             const std::vector<double>& hypotheses);

// Per-pixel hypothesis with the lowest cost; ties go to the smaller index.
Tensor argmin_depth(const CostVolume& cv);

// 1 where max((D_cv - Dt)/Dt, (Dt - D_cv)/D_cv) > 1.
Tensor inconsistency_mask(const Tensor& d_cv, const Tensor& d_teacher);

struct SelfLossWeights {
  double lambda_sm = 1e-3;
  void validate() const {
    UMD_REQUIRE(lambda_sm > 0, "lambda_sm must be positive");
  }
};

namespace ad {

// Mean over all pixels of mask * |D_student - D_teacher|. The teacher enters
// as a value only: the stop-gradient is part of this operation's contract.
umd::ad::Var consistency_loss(const umd::ad::Var& d_student,
                              const umd::ad::Var& d_teacher,
                              const Tensor& mask);

// mean((1-M) * L_ph) + L_cons + lambda_sm * L_sm.
umd::ad::Var self_supervised_loss(const umd::ad::Var& l_ph,
                                  const umd::ad::Var& l_cons,
                                  const umd::ad::Var& l_sm, const Tensor& mask,
                                  const SelfLossWeights& w);

}  // namespace ad
}  // namespace umd

#endif  // UMD_CONSISTENCY_HPP_
