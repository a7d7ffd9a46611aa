#include "umd/motion.hpp"

#include <cmath>

namespace umd {

FlowMaskResult flow_difference_mask(const Tensor& flow, const Tensor& rigid,
                                    const FlowMaskConfig& cfg) {
  cfg.validate();
  UMD_REQUIRE(flow.ndim() == 3 && flow.dim(2) == 2,
              "flow mask: flow must be H x W x 2");
  UMD_REQUIRE(flow.same_shape(rigid), "flow mask: shape mismatch");
  int h = flow.dim(0), w = flow.dim(1);
  Tensor mag({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double du = flow.at(y, x, 0) - rigid.at(y, x, 0);
      double dv = flow.at(y, x, 1) - rigid.at(y, x, 1);
      mag.at(y, x) = std::sqrt(du * du + dv * dv);
    }
  double tau = mag.mean();
  if (cfg.tau_mode == FlowMaskConfig::TauMode::mean_plus_floor)
    tau += cfg.tau_floor;
  FlowMaskResult r{Tensor({h, w}), tau};
  for (size_t i = 0; i < mag.numel(); ++i)
    r.mask[i] = mag[i] > tau ? 1.0 : 0.0;
  return r;
}

namespace {
constexpr double kNormFloor = 1e-12;  // on the squared norm

inline double safe_denom(double sumsq) {
  return std::sqrt(sumsq < kNormFloor ? kNormFloor : sumsq);
}

// Window distance sums around an anchor, on already-normalized features.
TripletDistances window_stats(const Tensor& fhat, const Tensor& mask, int ay,
                              int ax, int window) {
  int h = fhat.dim(0), w = fhat.dim(1), c = fhat.dim(2);
  int r = window / 2;
  bool a_label = mask.at(ay, ax) != 0.0;
  TripletDistances td;
  double sp = 0, sm = 0;
  for (int y = std::max(0, ay - r); y <= std::min(h - 1, ay + r); ++y)
    for (int x = std::max(0, ax - r); x <= std::min(w - 1, ax + r); ++x) {
      if (y == ay && x == ax) continue;  // anchor itself sits in neither set
      double d2 = 0;
      for (int k = 0; k < c; ++k) {
        double d = fhat.at(ay, ax, k) - fhat.at(y, x, k);
        d2 += d * d;
      }
      if ((mask.at(y, x) != 0.0) == a_label) {
        sp += d2;
        ++td.n_plus;
      } else {
        sm += d2;
        ++td.n_minus;
      }
    }
  td.plus_defined = td.n_plus > 0;
  td.minus_defined = td.n_minus > 0;
  if (td.plus_defined) td.d_plus = sp / td.n_plus;
  if (td.minus_defined) td.d_minus = sm / td.n_minus;
  return td;
}
}  // namespace

Tensor normalize_features(const Tensor& f) {
  UMD_REQUIRE(f.ndim() == 3, "features must be H x W x C");
  UMD_REQUIRE(f.all_finite(), "features must be finite");
  int c = f.dim(2);
  Tensor out(f.shape());
  for (size_t i = 0; i < f.numel() / c; ++i) {
    double sumsq = 0;
    for (int k = 0; k < c; ++k) sumsq += f[i * c + k] * f[i * c + k];
    double d = safe_denom(sumsq);
    for (int k = 0; k < c; ++k) out[i * c + k] = f[i * c + k] / d;
  }
  return out;
}

TripletDistances triplet_distances(const Tensor& f, const Tensor& mask, int ay,
                                   int ax, const TripletConfig& cfg) {
  cfg.validate();
  UMD_REQUIRE(mask.ndim() == 2 && mask.dim(0) == f.dim(0) &&
                  mask.dim(1) == f.dim(1),
              "triplet: mask shape mismatch");
  UMD_REQUIRE(ay >= 0 && ay < f.dim(0) && ax >= 0 && ax < f.dim(1),
              "triplet: anchor out of bounds");
  return window_stats(normalize_features(f), mask, ay, ax, cfg.window);
}

namespace ad {

using umd::ad::Var;

namespace {

// Fused node: anchors are recomputed in the backward pass rather than cached;
// the window loops are cheap next to the rest of the graph.
Var triplet_over_normalized(const Var& fhat, Tensor mask, TripletConfig cfg) {
  const Tensor& fv = fhat->val;
  int h = fv.dim(0), w = fv.dim(1);
  double loss = 0;
  int n_anchors = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      TripletDistances td = window_stats(fv, mask, y, x, cfg.window);
      if (td.n_plus <= cfg.min_count || td.n_minus <= cfg.min_count) continue;
      ++n_anchors;
      double hinge = cfg.margin - td.d_minus;
      loss += td.d_plus + (hinge > 0 ? hinge : 0);
    }
  Tensor out = Tensor::scalar(n_anchors ? loss / n_anchors : 0.0);

  return umd::ad::make_node(
      std::move(out), {fhat},
      [mask = std::move(mask), cfg, n_anchors](umd::ad::Node& n) {
        if (n_anchors == 0) return;
        umd::ad::Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        const Tensor& fv = p.val;
        Tensor& pg = p.ensure_grad();
        int h = fv.dim(0), w = fv.dim(1), c = fv.dim(2);
        int r = cfg.window / 2;
        double g = n.grad[0] / n_anchors;
        for (int ay = 0; ay < h; ++ay)
          for (int ax = 0; ax < w; ++ax) {
            TripletDistances td = window_stats(fv, mask, ay, ax, cfg.window);
            if (td.n_plus <= cfg.min_count || td.n_minus <= cfg.min_count)
              continue;
            bool a_label = mask.at(ay, ax) != 0.0;
            // d(D+)/d pair = 2(fa - fj)/|P+|; hinge active adds
            // -d(D-)/d pair with the same structure over P-.
            double wplus = 2.0 * g / td.n_plus;
            double wminus =
                (cfg.margin - td.d_minus > 0) ? -2.0 * g / td.n_minus : 0.0;
            for (int y = std::max(0, ay - r); y <= std::min(h - 1, ay + r); ++y)
              for (int x = std::max(0, ax - r); x <= std::min(w - 1, ax + r);
                   ++x) {
                if (y == ay && x == ax) continue;
                double wt =
                    ((mask.at(y, x) != 0.0) == a_label) ? wplus : wminus;
                if (wt == 0.0) continue;
                for (int k = 0; k < c; ++k) {
                  double diff = fv.at(ay, ax, k) - fv.at(y, x, k);
                  pg[(size_t(ay) * w + ax) * c + k] += wt * diff;
                  pg[(size_t(y) * w + x) * c + k] -= wt * diff;
                }
              }
          }
      },
      "triplet_window");
}

}  // namespace

Var isolated_triplet_loss(const Var& f, const Tensor& mask,
                          const TripletConfig& cfg) {
  cfg.validate();
  UMD_REQUIRE(f->val.ndim() == 3, "triplet: features must be H x W x C");
  UMD_REQUIRE(mask.ndim() == 2 && mask.dim(0) == f->val.dim(0) &&
                  mask.dim(1) == f->val.dim(1),
              "triplet: mask shape mismatch");
  int c = f->val.dim(2);
  Var sumsq = umd::ad::sum_lastdim(f * f);
  Var denom = umd::ad::sqrt(umd::ad::cmax(sumsq, umd::ad::constant(kNormFloor)));
  Var fhat = f / umd::ad::expand_lastdim(denom, c);
  return triplet_over_normalized(fhat, mask, cfg);
}

}  // namespace ad
}  // namespace umd
