#ifndef UMD_UNCERTAINTY_HPP_
#define UMD_UNCERTAINTY_HPP_

#include <vector>

#include "umd/autodiff.hpp"

namespace umd {

inline constexpr double kSigma2Min = 1e-6;
inline constexpr double kSigma2Max = 1e3;

struct BinConfig {
  int n = 16;
  double d_min = 0.1;
  double d_max = 100.0;
  // The published center formula (coefficient 2*b_i) pushes centers past
  // d_max; the AdaBins-standard b_i/2 is the default, the literal form stays
  // available for comparison.
  enum class CenterFormula { adabins, as_written };
  CenterFormula center_formula = CenterFormula::adabins;

  void validate() const {
    UMD_REQUIRE(n >= 2, "bin count must be >= 2");
    UMD_REQUIRE(d_min > 0 && d_max > d_min, "need 0 < d_min < d_max");
  }
};

namespace ad {

// (1/N) * sum(L_ph^2 / sigma^2 + log sigma^2). Variances outside
// [kSigma2Min, kSigma2Max] are clamped; how many pixels hit the clamp is
// reported alongside.
struct UncertaintyLoss {
  umd::ad::Var loss;
  int clamped = 0;
};
UncertaintyLoss uncertainty_loss(const umd::ad::Var& l_ph,
                                 const umd::ad::Var& sigma2);

// Bin widths (on the simplex) -> center depths, differentiable.
umd::ad::Var bin_centers(const umd::ad::Var& widths, const BinConfig& cfg);

// D = sum_i p_i * c_i over the last dim of probs (H x W x N).
umd::ad::Var depth_from_probs(const umd::ad::Var& probs,
                              const umd::ad::Var& centers);

// Per-pixel select: refined depth where the mask is set, initial elsewhere.
// The gradient follows the selected branch only.
umd::ad::Var fuse_depth(const umd::ad::Var& d_pre, const umd::ad::Var& d_post,
                        const Tensor& m_u);

// Channel-concatenates a learnable prompt onto features. A null prompt is
// the identity. If resample is set, the prompt is bilinearly resized to the
// feature resolution first; otherwise a mismatch is an error.
umd::ad::Var prompt_concat(const umd::ad::Var& feat, const umd::ad::Var& prompt,
                           bool resample = false);

}  // namespace ad

// Value-path twins.
std::vector<double> bin_centers(const std::vector<double>& widths,
                                const BinConfig& cfg);
Tensor depth_from_probs(const Tensor& probs, const std::vector<double>& centers);

// Threshold at the empirical quantile of sigma2 (sorted, index
// ceil(q*n) - 1); mask is 1 strictly above it.
struct UncertaintyMask {
  Tensor mask;
  double epsilon;
};
UncertaintyMask uncertainty_mask(const Tensor& sigma2, double quantile = 0.8);

}  // namespace umd

#endif  // UMD_UNCERTAINTY_HPP_
