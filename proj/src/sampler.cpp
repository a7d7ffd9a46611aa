#include "umd/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace umd {

namespace {
inline double clampd(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Matches the autodiff sampler: near-integer coordinates (round-off from
// projective round trips) snap onto the pixel so identity warps are exact.
inline double snap_int(double x) {
  double r = std::round(x);
  return std::fabs(x - r) < 1e-9 ? r : x;
}
}  // namespace

SampleResult sample_image(const Tensor& img, const Tensor& coords) {
  UMD_REQUIRE(img.ndim() == 3, "sample_image: image must be H x W x C");
  UMD_REQUIRE(coords.ndim() == 3 && coords.dim(2) == 2,
              "sample_image: coords must be H x W x 2");
  UMD_REQUIRE(coords.all_finite(), "sample_image: coords must be finite");
  int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  int ho = coords.dim(0), wo = coords.dim(1);
  SampleResult r{Tensor({ho, wo, c}), coords_validity(coords, h, w)};
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double u = clampd(snap_int(coords.at(y, x, 0)), 0, w - 1);
      double v = clampd(snap_int(coords.at(y, x, 1)), 0, h - 1);
      int x0 = std::min(int(std::floor(u)), std::max(w - 2, 0));
      int y0 = std::min(int(std::floor(v)), std::max(h - 2, 0));
      int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      double fu = u - x0, fv = v - y0;
      for (int k = 0; k < c; ++k) {
        double top = (1 - fu) * img.at(y0, x0, k) + fu * img.at(y0, x1, k);
        double bot = (1 - fu) * img.at(y1, x0, k) + fu * img.at(y1, x1, k);
        r.image.at(y, x, k) = (1 - fv) * top + fv * bot;
      }
    }
  return r;
}

Tensor coords_validity(const Tensor& coords, int h, int w) {
  UMD_REQUIRE(coords.ndim() == 3 && coords.dim(2) == 2,
              "coords_validity: coords must be H x W x 2");
  // Sub-ulp excursions past the border (from round-tripping through the
  // projection math) still count as inside.
  constexpr double eps = 1e-9;
  Tensor valid({coords.dim(0), coords.dim(1)});
  for (int y = 0; y < coords.dim(0); ++y)
    for (int x = 0; x < coords.dim(1); ++x) {
      double u = coords.at(y, x, 0), v = coords.at(y, x, 1);
      valid.at(y, x) =
          (u >= -eps && u <= w - 1 + eps && v >= -eps && v <= h - 1 + eps)
              ? 1.0
              : 0.0;
    }
  return valid;
}

}  // namespace umd
