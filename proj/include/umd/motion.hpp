#ifndef UMD_MOTION_HPP_
#define UMD_MOTION_HPP_

#include "umd/autodiff.hpp"

namespace umd {

struct FlowMaskConfig {
  enum class TauMode { mean, mean_plus_floor };
  // Pure mean thresholding marks ~half the pixels once flow noise is present,
  // so the default adds a floor; the plain mode stays available.
  TauMode tau_mode = TauMode::mean_plus_floor;
  double tau_floor = 1.0;  // pixels

  void validate() const {
    UMD_REQUIRE(tau_floor >= 0, "tau_floor must be >= 0");
  }
};

// Pixels whose measured flow disagrees with the rigid (egomotion-only) flow:
// mask = ||F - F_rigid||_2 > tau, tau = image mean of those magnitudes
// (+ floor in mean_plus_floor mode).
struct FlowMaskResult {
  Tensor mask;  // H x W, 1 = moving
  double tau;
};
FlowMaskResult flow_difference_mask(const Tensor& flow, const Tensor& rigid,
                                    const FlowMaskConfig& cfg);

struct TripletConfig {
  int window = 5;        // square window side, odd
  double margin = 0.65;  // m0
  int min_count = 5;     // both window partitions must exceed this

  void validate() const {
    UMD_REQUIRE(window >= 3 && window % 2 == 1, "window must be odd and >= 3");
    UMD_REQUIRE(margin > 0, "margin must be positive");
    UMD_REQUIRE(min_count >= 0, "min_count must be >= 0");
  }
};

// Per-pixel L2 feature normalization; zero vectors stay zero.
Tensor normalize_features(const Tensor& f);

// Window statistics around one anchor: P+ holds window pixels sharing the
// anchor's motion label (anchor itself excluded), P- the rest. Distances are
// means of ||f^_a - f^_j||^2 over each set, on normalized features.
struct TripletDistances {
  double d_plus = 0, d_minus = 0;
  int n_plus = 0, n_minus = 0;
  bool plus_defined = false, minus_defined = false;
};
TripletDistances triplet_distances(const Tensor& f, const Tensor& mask, int ay,
                                   int ax, const TripletConfig& cfg);

namespace ad {

// Mean over anchors with n_plus > min_count and n_minus > min_count of
// D+ + max(0, m0 - D-). Returns 0 when no anchor qualifies. Differentiable
// in f (normalization happens inside).
umd::ad::Var isolated_triplet_loss(const umd::ad::Var& f, const Tensor& mask,
                                   const TripletConfig& cfg);

}  // namespace ad
}  // namespace umd

#endif  // UMD_MOTION_HPP_
