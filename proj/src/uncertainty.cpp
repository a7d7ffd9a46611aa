#include "umd/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace umd {
namespace {

void check_simplex(const double* b, size_t n, const char* what) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    UMD_REQUIRE(std::isfinite(b[i]) && b[i] >= 0.0, what);
    s += b[i];
  }
  UMD_REQUIRE(std::fabs(s - 1.0) <= 1e-6, what);
}

double center_coef(const BinConfig& cfg) {
  return cfg.center_formula == BinConfig::CenterFormula::as_written ? 2.0 : 0.5;
}

std::vector<double> centers_value(const double* b, size_t n,
                                  const BinConfig& cfg) {
  UMD_REQUIRE(n >= 1, "need at least one bin width");
  // d_min = 0 is fine for the center formula itself; BinConfig::validate is
  // stricter because the depth hypotheses need 1/d.
  UMD_REQUIRE(cfg.d_min >= 0 && cfg.d_max > cfg.d_min,
              "need 0 <= d_min < d_max");
  check_simplex(b, n, "bin widths must be nonnegative and sum to 1");
  const double range = cfg.d_max - cfg.d_min;
  const double coef = center_coef(cfg);
  std::vector<double> c(n);
  double prefix = 0.0;  // sum of widths left of bin i
  for (size_t i = 0; i < n; ++i) {
    c[i] = cfg.d_min + range * (coef * b[i] + prefix);
    prefix += b[i];
  }
  return c;
}

}  // namespace

std::vector<double> bin_centers(const std::vector<double>& widths,
                                const BinConfig& cfg) {
  return centers_value(widths.data(), widths.size(), cfg);
}

Tensor depth_from_probs(const Tensor& probs,
                        const std::vector<double>& centers) {
  const size_t n = centers.size();
  UMD_REQUIRE(n >= 1, "need at least one bin center");
  UMD_REQUIRE(probs.ndim() >= 1 &&
                  probs.dim(probs.ndim() - 1) == static_cast<int>(n),
              "probability last dim must match bin count");
  const size_t pixels = probs.numel() / n;
  Shape out_shape;
  if (probs.ndim() == 1) {
    out_shape = {1};
  } else {
    out_shape.assign(probs.shape().begin(), probs.shape().end() - 1);
  }
  Tensor out(out_shape);
  for (size_t p = 0; p < pixels; ++p) {
    const double* row = probs.data() + p * n;
    check_simplex(row, n, "probabilities must be a per-pixel simplex");
    double d = 0.0;
    for (size_t i = 0; i < n; ++i) d += row[i] * centers[i];
    out[p] = d;
  }
  return out;
}

UncertaintyMask uncertainty_mask(const Tensor& sigma2, double quantile) {
  UMD_REQUIRE(quantile > 0.0 && quantile < 1.0, "quantile must be in (0, 1)");
  UMD_REQUIRE(!sigma2.empty() && sigma2.all_finite(),
              "sigma2 must be nonempty and finite");
  UMD_REQUIRE(sigma2.min_value() > 0.0, "sigma2 must be positive");
  const size_t n = sigma2.numel();
  std::vector<double> sorted(sigma2.data(), sigma2.data() + n);
  std::sort(sorted.begin(), sorted.end());
  // ceil(q*n) nudged so q*n landing a hair above an integer stays put.
  size_t k = static_cast<size_t>(std::ceil(quantile * double(n) - 1e-9));
  k = std::min(std::max<size_t>(k, 1), n);
  UncertaintyMask out;
  out.epsilon = sorted[k - 1];
  out.mask = Tensor(sigma2.shape());
  for (size_t i = 0; i < n; ++i)
    out.mask[i] = sigma2[i] > out.epsilon ? 1.0 : 0.0;
  return out;
}

namespace ad {

using umd::ad::Var;

UncertaintyLoss uncertainty_loss(const Var& l_ph, const Var& sigma2) {
  UMD_REQUIRE(l_ph->val.same_shape(sigma2->val),
              "uncertainty_loss: shape mismatch");
  UncertaintyLoss out;
  for (size_t i = 0; i < sigma2->val.numel(); ++i) {
    double s = sigma2->val[i];
    UMD_REQUIRE(std::isfinite(s), "sigma2 must be finite");
    if (s < kSigma2Min || s > kSigma2Max) ++out.clamped;
  }
  Var s2 = umd::ad::clamp(sigma2, kSigma2Min, kSigma2Max);
  out.loss = umd::ad::mean(umd::ad::square(l_ph) / s2 + umd::ad::log(s2));
  return out;
}

Var bin_centers(const Var& widths, const BinConfig& cfg) {
  const Tensor& b = widths->val;
  UMD_REQUIRE(b.ndim() == 1, "bin widths must be a vector");
  const size_t n = b.numel();
  std::vector<double> c = centers_value(b.data(), n, cfg);
  Tensor val(Shape{static_cast<int>(n)});
  std::copy(c.begin(), c.end(), val.data());
  const double range = cfg.d_max - cfg.d_min;
  const double coef = center_coef(cfg);
  // dc_i/db_k = range * (coef*[i==k] + [k<i])
  return umd::ad::make_node(
      std::move(val), {widths},
      [range, coef, n](umd::ad::Node& nd) {
        umd::ad::Node& p = *nd.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        const Tensor& g = nd.grad;
        double suffix = 0.0;  // sum of g over bins right of k
        for (size_t k = n; k-- > 0;) {
          pg[k] += range * (coef * g[k] + suffix);
          suffix += g[k];
        }
      },
      "bin_centers");
}

Var depth_from_probs(const Var& probs, const Var& centers) {
  const size_t n = centers->val.numel();
  UMD_REQUIRE(centers->val.ndim() == 1, "centers must be a vector");
  UMD_REQUIRE(probs->val.dim(probs->val.ndim() - 1) == static_cast<int>(n),
              "probability last dim must match bin count");
  for (size_t p = 0; p < probs->val.numel() / n; ++p)
    check_simplex(probs->val.data() + p * n, n,
                  "probabilities must be a per-pixel simplex");
  Var p2 = probs->val.ndim() == 1
               ? umd::ad::reshape(probs, Shape{1, static_cast<int>(n)})
               : probs;
  return umd::ad::tensordot_lastdim(p2, centers);
}

Var fuse_depth(const Var& d_pre, const Var& d_post, const Tensor& m_u) {
  UMD_REQUIRE(d_pre->val.same_shape(d_post->val) &&
                  d_pre->val.same_shape(m_u),
              "fuse_depth: shape mismatch");
  for (size_t i = 0; i < m_u.numel(); ++i)
    UMD_REQUIRE(m_u[i] == 0.0 || m_u[i] == 1.0, "mask must be 0/1");
  return umd::ad::select(m_u, d_post, d_pre);
}

Var prompt_concat(const Var& feat, const Var& prompt, bool resample) {
  if (!prompt) return feat;  // zero prompt channels: identity
  UMD_REQUIRE(feat->val.ndim() == 3 && prompt->val.ndim() == 3,
              "prompt_concat expects H x W x C tensors");
  Var p = prompt;
  if (feat->val.dim(0) != p->val.dim(0) || feat->val.dim(1) != p->val.dim(1)) {
    UMD_REQUIRE(resample, "prompt spatial shape mismatch");
    p = umd::ad::resize_bilinear(p, feat->val.dim(0), feat->val.dim(1));
  }
  return umd::ad::concat_lastdim({feat, p});
}

}  // namespace ad
}  // namespace umd
