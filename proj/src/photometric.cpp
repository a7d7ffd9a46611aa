#include "umd/photometric.hpp"

namespace umd {
namespace ad {

using namespace umd::ad;

Var ssim(const Var& a, const Var& b, const PhotometricConfig& cfg) {
  cfg.validate();
  UMD_REQUIRE(a->val.same_shape(b->val), "ssim: shape mismatch");
  UMD_REQUIRE(a->val.ndim() == 3, "ssim: images must be H x W x C");
  int w = cfg.ssim_window, c = a->val.dim(2);
  Var mu_a = box_filter(a, w);
  Var mu_b = box_filter(b, w);
  Var var_a = box_filter(a * a, w) - mu_a * mu_a;
  Var var_b = box_filter(b * b, w) - mu_b * mu_b;
  Var cov = box_filter(a * b, w) - mu_a * mu_b;
  Var num = (2.0 * mu_a * mu_b + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2);
  Var den =
      (mu_a * mu_a + mu_b * mu_b + cfg.ssim_c1) * (var_a + var_b + cfg.ssim_c2);
  return sum_lastdim(num / den) / double(c);
}

Var photometric_error(const Var& syn, const Var& tgt,
                      const PhotometricConfig& cfg) {
  cfg.validate();
  UMD_REQUIRE(syn->val.same_shape(tgt->val),
              "photometric_error: shape mismatch");
  int c = syn->val.dim(2);
  Var l1 = sum_lastdim(abs(syn - tgt)) / double(c);
  if (cfg.alpha == 0.0) return l1;
  Var s = ssim(syn, tgt, cfg);
  return (cfg.alpha / 2.0) * (1.0 - s) + (1.0 - cfg.alpha) * l1;
}

MinReprojection min_reprojection(const std::vector<Var>& errors,
                                 const std::vector<Tensor>& validity) {
  UMD_REQUIRE(!errors.empty(), "min_reprojection: no sources");
  UMD_REQUIRE(errors.size() == validity.size(),
              "min_reprojection: errors/validity size mismatch");
  const Shape& s = errors[0]->val.shape();
  for (size_t i = 0; i < errors.size(); ++i) {
    UMD_REQUIRE(errors[i]->val.shape() == s && validity[i].shape() == s,
                "min_reprojection: shape mismatch");
  }
  // Invalid sources are pushed out of the running minimum with a large
  // constant; select() keeps their gradient path closed.
  const double kBig = 1e30;
  Var big = constant(Tensor(s, kBig));
  Var m = select(validity[0], errors[0], big);
  Tensor any = validity[0];
  for (size_t i = 1; i < errors.size(); ++i) {
    m = cmin(m, select(validity[i], errors[i], big));
    for (size_t j = 0; j < any.numel(); ++j)
      if (validity[i][j] != 0.0) any[j] = 1.0;
  }
  Var zero = constant(Tensor(s, 0.0));
  return {select(any, m, zero), any};
}

Var smoothness_loss(const Var& inv_depth, const Tensor& image) {
  UMD_REQUIRE(inv_depth->val.ndim() == 2, "smoothness: d must be H x W");
  UMD_REQUIRE(image.ndim() == 3, "smoothness: image must be H x W x C");
  UMD_REQUIRE(image.dim(0) == inv_depth->val.dim(0) &&
                  image.dim(1) == inv_depth->val.dim(1),
              "smoothness: size mismatch");
  UMD_REQUIRE(inv_depth->val.mean() > 0, "smoothness: mean(d) must be > 0");
  int h = image.dim(0), w = image.dim(1), c = image.dim(2);

  Var dstar = inv_depth / mean(inv_depth);
  Var dx = abs(shift2d(dstar, 0, 1) - dstar);
  Var dy = abs(shift2d(dstar, 1, 0) - dstar);

  // exp(-|forward image gradient|), channel-mean; plain values since the
  // target image carries no gradient.
  Tensor wx({h, w}), wy({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double gx = 0, gy = 0;
      for (int k = 0; k < c; ++k) {
        int xn = std::min(x + 1, w - 1), yn = std::min(y + 1, h - 1);
        gx += std::fabs(image.at(y, xn, k) - image.at(y, x, k));
        gy += std::fabs(image.at(yn, x, k) - image.at(y, x, k));
      }
      wx.at(y, x) = std::exp(-gx / c);
      wy.at(y, x) = std::exp(-gy / c);
    }
  return mean(dx * constant(wx) + dy * constant(wy));
}

}  // namespace ad

Tensor ssim_map(const Tensor& a, const Tensor& b, const PhotometricConfig& cfg) {
  return ad::ssim(umd::ad::constant(a), umd::ad::constant(b), cfg)->val;
}

Tensor photometric_error_map(const Tensor& syn, const Tensor& tgt,
                             const PhotometricConfig& cfg) {
  return ad::photometric_error(umd::ad::constant(syn), umd::ad::constant(tgt),
                               cfg)
      ->val;
}

}  // namespace umd
