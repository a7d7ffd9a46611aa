#include "umd/consistency.hpp"

#include <cmath>

namespace umd {

void CostVolume::validate_ascending() const {
  UMD_REQUIRE(hypotheses.size() >= 2, "cost volume needs >= 2 hypotheses");
  UMD_REQUIRE(costs.ndim() == 3 &&
                  costs.dim(2) == int(hypotheses.size()),
              "cost volume shape mismatch");
  for (size_t i = 0; i + 1 < hypotheses.size(); ++i)
    UMD_REQUIRE(hypotheses[i] < hypotheses[i + 1],
                "hypotheses must ascend strictly");
  UMD_REQUIRE(hypotheses.front() > 0, "hypotheses must be positive");
}

std::vector<double> depth_hypotheses(double d_min, double d_max, int b) {
  UMD_REQUIRE(b >= 2, "need at least 2 hypotheses");
  UMD_REQUIRE(d_min > 0 && d_max > d_min, "bad depth range");
  std::vector<double> h(size_t(b), 0.0);
  double ilo = 1.0 / d_max, ihi = 1.0 / d_min;
  for (int i = 0; i < b; ++i) {
    double inv = ihi + (ilo - ihi) * double(i) / double(b - 1);
    h[size_t(i)] = 1.0 / inv;
  }
  return h;
}

CostVolume build_cost_volume(const Tensor& feat_t, const Tensor& feat_s,
                             const PoseSE3& T, const CameraIntrinsics& K,
                             const std::vector<double>& hypotheses) {
  UMD_REQUIRE(feat_t.ndim() == 3 && feat_t.same_shape(feat_s),
              "cost volume: feature shape mismatch");
  UMD_REQUIRE(hypotheses.size() >= 2, "cost volume needs >= 2 hypotheses");
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    UMD_REQUIRE(std::isfinite(hypotheses[i]) && hypotheses[i] > 0,
                "hypotheses must be positive");
    for (size_t j = i + 1; j < hypotheses.size(); ++j)
      UMD_REQUIRE(hypotheses[i] != hypotheses[j],
                  "hypotheses must be distinct");
  }
  int h = feat_t.dim(0), w = feat_t.dim(1), c = feat_t.dim(2);
  int nb = int(hypotheses.size());

  CostVolume cv{Tensor({h, w, nb}), hypotheses};
  Tensor valid({h, w, nb});
  for (int b = 0; b < nb; ++b) {
    Tensor depth({h, w}, hypotheses[size_t(b)]);
    SampleResult warped = synthesize_view(feat_s, depth, T, K);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = 0; k < c; ++k)
          acc += std::fabs(warped.image.at(y, x, k) - feat_t.at(y, x, k));
        cv.costs.at(y, x, b) = acc / c;
        valid.at(y, x, b) = warped.valid.at(y, x);
      }
  }
  // Invalid warps take the pixel's worst valid cost so argmin never picks
  // them; fully invalid pixels fall back to 0 (argmin then hits the tie rule).
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double worst = 0;
      bool any = false;
      for (int b = 0; b < nb; ++b)
        if (valid.at(y, x, b) != 0.0) {
          worst = any ? std::max(worst, cv.costs.at(y, x, b))
                      : cv.costs.at(y, x, b);
          any = true;
        }
      for (int b = 0; b < nb; ++b)
        if (valid.at(y, x, b) == 0.0) cv.costs.at(y, x, b) = any ? worst : 0.0;
    }
  return cv;
}

Tensor argmin_depth(const CostVolume& cv) {
  cv.validate_ascending();
  int h = cv.costs.dim(0), w = cv.costs.dim(1), nb = cv.costs.dim(2);
  Tensor d({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double bc = cv.costs.at(y, x, 0);
      for (int b = 1; b < nb; ++b)
        if (cv.costs.at(y, x, b) < bc) {  // strict: ties keep smaller index
          bc = cv.costs.at(y, x, b);
          best = b;
        }
      d.at(y, x) = cv.hypotheses[size_t(best)];
    }
  return d;
}

Tensor inconsistency_mask(const Tensor& d_cv, const Tensor& d_teacher) {
  UMD_REQUIRE(d_cv.same_shape(d_teacher), "inconsistency: shape mismatch");
  UMD_REQUIRE(d_cv.min_value() > 0 && d_teacher.min_value() > 0,
              "inconsistency: depths must be positive");
  Tensor m(d_cv.shape());
  for (size_t i = 0; i < m.numel(); ++i) {
    double a = d_cv[i], b = d_teacher[i];
    double r = std::max((a - b) / b, (b - a) / a);
    m[i] = r > 1.0 ? 1.0 : 0.0;
  }
  return m;
}

namespace ad {

using umd::ad::Var;
using umd::ad::constant;

Var consistency_loss(const Var& d_student, const Var& d_teacher,
                     const Tensor& mask) {
  UMD_REQUIRE(d_student->val.same_shape(d_teacher->val) &&
                  d_student->val.same_shape(mask),
              "consistency_loss: shape mismatch");
  Var teacher = umd::ad::detach(d_teacher);
  return umd::ad::mean(umd::ad::abs(d_student - teacher) * constant(mask));
}

Var self_supervised_loss(const Var& l_ph, const Var& l_cons, const Var& l_sm,
                         const Tensor& mask, const SelfLossWeights& w) {
  w.validate();
  UMD_REQUIRE(l_ph->val.same_shape(mask), "self loss: shape mismatch");
  UMD_REQUIRE(l_cons->val.numel() == 1 && l_sm->val.numel() == 1,
              "self loss: term shapes");
  Tensor keep(mask.shape());
  for (size_t i = 0; i < mask.numel(); ++i) keep[i] = 1.0 - mask[i];
  return umd::ad::mean(l_ph * constant(keep)) + l_cons + w.lambda_sm * l_sm;
}

}  // namespace ad
}  // namespace umd
