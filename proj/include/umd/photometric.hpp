#ifndef UMD_PHOTOMETRIC_HPP_
#define UMD_PHOTOMETRIC_HPP_

#include <vector>

#include "umd/autodiff.hpp"

namespace umd {

struct PhotometricConfig {
  double alpha = 0.85;     // SSIM share of the mixed error
  int ssim_window = 3;
  double ssim_c1 = 1e-4;   // 0.01^2
  double ssim_c2 = 9e-4;   // 0.03^2

  void validate() const {
    UMD_REQUIRE(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0,1]");
    UMD_REQUIRE(ssim_window >= 3 && ssim_window % 2 == 1,
                "ssim window must be odd and >= 3");
  }
};

namespace ad {

// Per-pixel SSIM in [-1,1]: local means/variances over ssim_window with
// replicate borders, evaluated per channel and then channel-averaged. H x W.
umd::ad::Var ssim(const umd::ad::Var& a, const umd::ad::Var& b,
                  const PhotometricConfig& cfg);

// (alpha/2)(1 - SSIM) + (1-alpha) * channel-mean |syn - tgt|. H x W.
umd::ad::Var photometric_error(const umd::ad::Var& syn, const umd::ad::Var& tgt,
                               const PhotometricConfig& cfg);

// Per-pixel minimum over source errors, restricted to valid sources.
// Pixels with no valid source get loss 0 and valid_any 0, so they contribute
// zero weight to any mean taken downstream.
struct MinReprojection {
  umd::ad::Var loss;  // H x W
  Tensor valid_any;   // H x W
};
MinReprojection min_reprojection(const std::vector<umd::ad::Var>& errors,
                                 const std::vector<Tensor>& validity);

// Edge-aware smoothness on mean-normalized inverse depth: forward
// differences of d / mean(d), weighted by exp(-|image gradient|) with the
// image gradient magnitude channel-averaged. Scalar.
umd::ad::Var smoothness_loss(const umd::ad::Var& inv_depth, const Tensor& image);

}  // namespace ad

// Value-only conveniences.
Tensor ssim_map(const Tensor& a, const Tensor& b, const PhotometricConfig& cfg);
Tensor photometric_error_map(const Tensor& syn, const Tensor& tgt,
                             const PhotometricConfig& cfg);

}  // namespace umd

#endif  // UMD_PHOTOMETRIC_HPP_
