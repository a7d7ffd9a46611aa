#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "umd/common.hpp"
#include "umd/data.hpp"
#include "umd/networks.hpp"

using namespace umd;

namespace {

bool identical(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  for (size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Compact scene so forwards stay cheap; resolution divisible by 8.
SyntheticScene small_scene(int h = 16, int w = 48) {
  SyntheticScene sc = make_scene("standard", 12, 3);
  sc.height = h;
  sc.width = w;
  sc.intrinsics = CameraIntrinsics{40.0, 40.0, (w - 1) * 0.5, (h - 1) * 0.5};
  return sc;
}

// d objective / d param[i] by central differences; the objective re-runs the
// forward pass, reading the mutated parameter value.
double param_fd(const std::function<double()>& objective, const ad::Var& param,
                size_t i, double eps) {
  double keep = param->val[i];
  param->val[i] = keep + eps;
  double up = objective();
  param->val[i] = keep - eps;
  double dn = objective();
  param->val[i] = keep;
  return (up - dn) / (2.0 * eps);
}

std::string tmp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / leaf).string();
}

}  // namespace

TEST_CASE("network spec validation") {
  NetworkSpec s;
  CHECK_NOTHROW(s.validate());

  NetworkSpec bad = s;
  bad.base_channels = 3;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = s;
  bad.scales = 3;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = s;
  bad.d_min = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = s;
  bad.n_bins = 1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = s;
  bad.prompt_channels = 2;
  bad.prompt_h = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = s;
  bad.pose_scale = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("param store: order-independent init, lookup, set") {
  ParamStore a(11), b(11);
  ad::Var aw = a.get("conv.w", {3, 3, 2, 4}, 0.1);
  ad::Var ab = a.get("conv.b", {4}, 0.0);
  // Same names requested in the opposite order from a second store.
  ad::Var bb = b.get("conv.b", {4}, 0.0);
  ad::Var bw = b.get("conv.w", {3, 3, 2, 4}, 0.1);
  CHECK(identical(aw->val, bw->val));
  CHECK(identical(ab->val, bb->val));
  for (size_t i = 0; i < ab->val.numel(); ++i) CHECK(ab->val[i] == 0.0);

  // Different seed: different weights.
  ParamStore c(12);
  CHECK(max_abs_diff(c.get("conv.w", {3, 3, 2, 4}, 0.1)->val, aw->val) > 0);

  // Repeat get returns the same Var; wrong shape is rejected.
  CHECK(a.get("conv.w", {3, 3, 2, 4}, 0.1).get() == aw.get());
  CHECK_THROWS_AS(a.get("conv.w", {3, 3, 4, 2}, 0.1), ContractViolation);
  CHECK_THROWS_AS(a.find("nope"), ContractViolation);

  CHECK(a.total_params() == 3 * 3 * 2 * 4 + 4);
  CHECK(a.names() == std::vector<std::string>{"conv.w", "conv.b"});

  // set keeps the Var identity so live graphs see the update.
  Tensor v({4});
  for (int i = 0; i < 4; ++i) v[i] = i + 1;
  a.set("conv.b", v);
  CHECK(identical(ab->val, v));
  CHECK_THROWS_AS(a.set("conv.b", Tensor({3})), ContractViolation);
}

TEST_CASE("teacher: determinism, shapes, depth range") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  TeacherNet t1(spec, 21), t2(spec, 21);

  MultiScaleDepth a = t1.forward(f.cur.data);
  MultiScaleDepth b = t1.forward(f.cur.data);  // same net, repeat call
  MultiScaleDepth c = t2.forward(f.cur.data);  // same seed, fresh net
  REQUIRE(int(a.depth.size()) == spec.scales);
  for (int s = 0; s < spec.scales; ++s) {
    CHECK(identical(a.depth[s]->val, b.depth[s]->val));
    CHECK(identical(a.depth[s]->val, c.depth[s]->val));

    CHECK(a.depth[s]->val.shape() == Shape{16 >> s, 48 >> s});
    for (size_t i = 0; i < a.depth[s]->val.numel(); ++i) {
      double d = a.depth[s]->val[i];
      CHECK(d >= spec.d_min);
      CHECK(d <= spec.d_max);
      CHECK(a.inv_depth[s]->val[i] == doctest::Approx(1.0 / d).epsilon(1e-12));
    }
  }

  // Random images stay inside the sigmoid-mapped range too.
  Rng r(5);
  MultiScaleDepth d = t1.forward(r.uniform_tensor({16, 48, 3}, 0.0, 1.0));
  for (int s = 0; s < spec.scales; ++s)
    for (size_t i = 0; i < d.depth[s]->val.numel(); ++i) {
      CHECK(d.depth[s]->val[i] >= spec.d_min);
      CHECK(d.depth[s]->val[i] <= spec.d_max);
    }
}

TEST_CASE("teacher: input validation") {
  NetworkSpec spec;
  TeacherNet t(spec, 1);
  CHECK_THROWS_WITH_AS(t.forward(Tensor({15, 48, 3})), doctest::Contains("divisible"),
                       ContractViolation);
  CHECK_THROWS_AS(t.forward(Tensor({16, 44, 3})), ContractViolation);
  Tensor img({16, 48, 3});
  img[7] = 1.5;  // out of [0, 1]
  CHECK_THROWS_AS(t.forward(img), ContractViolation);
  CHECK_THROWS_AS(t.forward(Tensor({16, 48})), ContractViolation);
}

TEST_CASE("teacher: multi-scale maps upsample to finite full-res losses") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  TeacherNet t(spec, 33);
  MultiScaleDepth d = t.forward(f.cur.data);
  for (int s = 0; s < spec.scales; ++s) {
    const Shape& hs = d.depth[s]->val.shape();
    ad::Var up = ad::resize_bilinear(ad::reshape(d.depth[s], {hs[0], hs[1], 1}), 16, 48);
    ad::Var loss = ad::mean(up);
    CHECK(std::isfinite(ad::value0(loss)));
    for (size_t i = 0; i < up->val.numel(); ++i) {
      CHECK(std::isfinite(up->val[i]));
      CHECK(up->val[i] >= spec.d_min - 1e-9);
      CHECK(up->val[i] <= spec.d_max + 1e-9);
    }
  }
}

TEST_CASE("student: cost volume slices, simplex heads, variance clamp") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  StudentNet net(spec, 40);
  StudentOutput o = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);

  // Cost volume: B slices at input resolution, hypotheses ascending.
  CHECK(o.cost_volume.costs.shape() == Shape{16, 48, spec.cost_bins});
  CHECK(int(o.cost_volume.hypotheses.size()) == spec.cost_bins);
  CHECK_NOTHROW(o.cost_volume.validate_ascending());

  // Global widths form a simplex; centers ascend inside [d_min, d_max].
  double wsum = 0;
  for (size_t i = 0; i < o.bin_widths->val.numel(); ++i) {
    CHECK(o.bin_widths->val[i] > 0);
    wsum += o.bin_widths->val[i];
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < spec.n_bins; ++i) {
    double ci = o.bin_centers->val[size_t(i)];
    CHECK(ci > spec.d_min);
    CHECK(ci < spec.d_max);
    if (i) CHECK(ci > o.bin_centers->val[size_t(i) - 1]);
  }

  REQUIRE(int(o.probs.size()) == spec.scales);
  REQUIRE(int(o.sigma2.size()) == spec.scales);
  for (int s = 0; s < spec.scales; ++s) {
    const Tensor& p = o.probs[s]->val;
    const Shape& ps = p.shape();
    CHECK(ps[2] == spec.n_bins);
    size_t rows = p.numel() / spec.n_bins;
    for (size_t r = 0; r < rows; ++r) {
      double z = 0;
      for (int k = 0; k < spec.n_bins; ++k) z += p[r * spec.n_bins + k];
      CHECK(z == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(o.sigma2[s]->val.shape() == Shape{ps[0], ps[1]});
    for (size_t i = 0; i < o.sigma2[s]->val.numel(); ++i) {
      CHECK(o.sigma2[s]->val[i] >= kSigma2Min);
      CHECK(o.sigma2[s]->val[i] <= kSigma2Max);
    }
    // Depth is a convex combination of the centers.
    for (size_t i = 0; i < o.depths.depth[s]->val.numel(); ++i) {
      CHECK(o.depths.depth[s]->val[i] > spec.d_min);
      CHECK(o.depths.depth[s]->val[i] < spec.d_max);
    }
  }
}

TEST_CASE("student: refinement head starts as the identity") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  StudentNet net(spec, 41);
  StudentOutput o = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);

  // Zero-weight refinement: post == pre bitwise, so the fused map is pre.
  CHECK(max_abs_diff(o.depth_post->val, o.depth_pre->val) == 0.0);
  CHECK(max_abs_diff(o.depth_fused->val, o.depth_pre->val) == 0.0);

  // Fused map always equals the mask-driven selection.
  for (size_t i = 0; i < o.depth_fused->val.numel(); ++i) {
    double want = o.refine_mask[i] == 1.0 ? o.depth_post->val[i] : o.depth_pre->val[i];
    CHECK(o.depth_fused->val[i] == want);
  }
  // The 80th-percentile variance gate marks a strict minority of pixels.
  double frac = 0;
  for (size_t i = 0; i < o.refine_mask.numel(); ++i) frac += o.refine_mask[i];
  frac /= double(o.refine_mask.numel());
  CHECK(frac <= 0.2 + 1e-9);

  // Once the head weights move, post must diverge from pre somewhere.
  ad::Var rw = net.params().find("refine.w");
  for (size_t i = 0; i < rw->val.numel(); ++i) rw->val[i] = 0.05 * double(i % 7 - 3);
  StudentOutput o2 = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  CHECK(max_abs_diff(o2.depth_post->val, o2.depth_pre->val) > 0.0);
}

TEST_CASE("student: deterministic across instances with one seed") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 6);
  NetworkSpec spec;
  StudentNet n1(spec, 42), n2(spec, 42);
  StudentOutput a = n1.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  StudentOutput b = n2.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  CHECK(identical(a.depth_fused->val, b.depth_fused->val));
  CHECK(identical(a.sigma2[0]->val, b.sigma2[0]->val));
  CHECK(identical(a.bin_widths->val, b.bin_widths->val));
  CHECK(identical(a.features->val, b.features->val));
  CHECK(n1.params().names() == n2.params().names());
}

TEST_CASE("student: frame pair and pose validation") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  StudentNet net(spec, 43);
  CHECK_THROWS_AS(net.forward(f.cur.data, Tensor({16, 40, 3}), f.T_prev, f.K),
                  ContractViolation);
  PoseSE3 bad = f.T_prev;
  bad.R(0, 0) = 2.0;
  CHECK_THROWS_AS(net.forward(f.cur.data, f.prev.data, bad, f.K), ContractViolation);
}

TEST_CASE("parameter counts are stable") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;

  TeacherNet t(spec, 1);
  t.forward(f.cur.data);
  CHECK(t.params().total_params() == 43572);

  StudentNet s(spec, 2);
  s.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  CHECK(s.params().total_params() == 50284);

  PoseNet p(spec, 3);
  p.forward(f.cur.data, f.prev.data);
  CHECK(p.params().total_params() == 4031);

  NetworkSpec mixed = spec;
  mixed.encoder_kind = NetworkSpec::EncoderKind::conv_with_sequence_mixer;
  TeacherNet tm(mixed, 1);
  tm.forward(f.cur.data);
  CHECK(tm.params().total_params() == 46028);  // + four mixing stages
}

TEST_CASE("sequence-mixer encoder changes outputs but stays deterministic") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec conv, mixed;
  mixed.encoder_kind = NetworkSpec::EncoderKind::conv_with_sequence_mixer;

  TeacherNet a(conv, 7), b(mixed, 7), c(mixed, 7);
  Tensor da = a.forward(f.cur.data).depth[0]->val;
  Tensor db = b.forward(f.cur.data).depth[0]->val;
  Tensor dc = c.forward(f.cur.data).depth[0]->val;
  CHECK(identical(db, dc));
  CHECK(max_abs_diff(da, db) > 0);

  bool has_mix = false;
  for (const auto& n : b.params().names()) has_mix |= n.rfind("mix", 0) == 0;
  CHECK(has_mix);
}

TEST_CASE("pose: valid rigid output, scaled near identity at init") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  PoseNet net(spec, 71);
  PoseOutput o = net.forward(f.cur.data, f.prev.data);

  PoseSE3 T = o.value();
  CHECK(T.valid());

  // rot9 must agree with the closed-form axis-angle rotation.
  Eigen::Vector3d w(o.axis_angle->val[0], o.axis_angle->val[1], o.axis_angle->val[2]);
  PoseSE3 ref = pose_from_axis_angle(
      w, Eigen::Vector3d(o.translation->val[0], o.translation->val[1],
                         o.translation->val[2]));
  double rerr = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rerr = std::max(rerr, std::fabs(T.R(r, c) - ref.R(r, c)));
  CHECK(rerr < 1e-12);

  // The 0.01 output scaling keeps the fresh net close to identity.
  CHECK(rotation_angle(T.R) < 0.05);
  CHECK(T.t.norm() < 0.5);

  // Deterministic across instances.
  PoseNet net2(spec, 71);
  PoseOutput o2 = net2.forward(f.cur.data, f.prev.data);
  CHECK(identical(o.rot9->val, o2.rot9->val));
  CHECK(identical(o.translation->val, o2.translation->val));

  CHECK_THROWS_AS(net.forward(f.cur.data, Tensor({16, 40, 3})), ContractViolation);
}

TEST_CASE("pose: gradients reach both heads and the trunk") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  PoseNet net(spec, 72);
  PoseOutput o = net.forward(f.cur.data, f.prev.data);
  ad::Var loss = ad::add(ad::mean(ad::square(o.translation)), ad::mean(o.rot9));
  ad::backward(loss);
  auto grad_mag = [&](const char* name) {
    const Tensor& g = net.params().find(name)->grad;
    double m = 0;
    for (size_t i = 0; i < g.numel(); ++i) m += std::fabs(g[i]);
    return m;
  };
  double gw = grad_mag("p1.w"), gt = grad_mag("trans.w"), gr = grad_mag("rot.w");
  CHECK(gw > 0);
  CHECK(gt > 0);
  CHECK(gr > 0);
}

TEST_CASE("student: parameter gradients match central differences") {
  SyntheticScene sc = small_scene(8, 24);
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  StudentNet net(spec, 80);

  // Prime the store, then nudge the refinement head off zero so its path is
  // active too.
  net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  ad::Var rw = net.params().find("refine.w");
  Rng r(9);
  for (size_t i = 0; i < rw->val.numel(); ++i) rw->val[i] = 0.02 * r.normal();

  // Objectives avoid the variance-quantile selection, which is intentionally
  // non-differentiable: depth_pre ignores the mask, depth_post holds it fixed
  // only through sigma-independent parameters.
  auto mean_pre = [&]() {
    StudentOutput o = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
    return ad::value0(ad::mean(o.depth_pre));
  };
  auto mean_post = [&]() {
    StudentOutput o = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
    return ad::value0(ad::mean(o.depth_post));
  };

  StudentOutput o = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  net.params().zero_grad();
  ad::backward(ad::mean(o.depth_pre));
  for (const char* name : {"bins0.w", "bin_logits", "prompt", "enc3.w", "dec0.b"}) {
    ad::Var p = net.params().find(name);
    REQUIRE(!p->grad.empty());
    size_t stride = std::max<size_t>(1, p->val.numel() / 6);
    for (size_t i = 0; i < 6 && i * stride < p->val.numel(); ++i) {
      size_t idx = i * stride;
      double fd = param_fd(mean_pre, p, idx, 1e-5);
      CHECK(std::fabs(fd - p->grad[idx]) <=
            2e-5 * std::max(1.0, std::fabs(p->grad[idx])));
    }
  }
  const Tensor& pg = net.params().find("prompt")->grad;
  double prompt_mag = 0;
  for (size_t i = 0; i < pg.numel(); ++i) prompt_mag += std::fabs(pg[i]);
  CHECK(prompt_mag > 0);  // the prompt participates in updates

  o = net.forward(f.cur.data, f.prev.data, f.T_prev, f.K);
  net.params().zero_grad();
  ad::backward(ad::mean(o.depth_post));
  ad::Var p = net.params().find("refine.w");
  size_t stride = std::max<size_t>(1, p->val.numel() / 6);
  for (size_t i = 0; i < 6 && i * stride < p->val.numel(); ++i) {
    size_t idx = i * stride;
    double fd = param_fd(mean_post, p, idx, 1e-5);
    CHECK(std::fabs(fd - p->grad[idx]) <= 2e-5 * std::max(1.0, std::fabs(p->grad[idx])));
  }
}

TEST_CASE("flow provider: oracle equals renderer truth at zero noise") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  FlowProvider flow(FlowProvider::Mode::oracle, 0.0, 1);
  CHECK(flow.calls() == 0);
  Tensor out = flow.provide(f);
  CHECK(flow.calls() == 1);
  CHECK(identical(out, f.flow_prev));

  // Samples without ground truth (non-synthetic data) are rejected.
  FrameSample bare;
  bare.cur.data = f.cur.data;
  CHECK_THROWS_AS(flow.provide(bare), ContractViolation);
  // Mode mixups are rejected.
  CHECK_THROWS_AS(flow.provide(std::string("/nowhere.umfl")), ContractViolation);
  FlowProvider ff(FlowProvider::Mode::file);
  CHECK_THROWS_AS(ff.provide(f), ContractViolation);
}

TEST_CASE("flow provider: noise magnitude follows the half-normal mean") {
  SyntheticScene sc = make_scene("standard", 20, 4);
  FrameSample f = render_scene(sc, 8);
  const double sigma = 0.5;
  FlowProvider flow(FlowProvider::Mode::oracle, sigma, 11);
  Tensor noisy = flow.provide(f);
  REQUIRE(noisy.numel() == f.flow_prev.numel());
  double mean_abs = 0;
  for (size_t i = 0; i < noisy.numel(); ++i) mean_abs += std::fabs(noisy[i] - f.flow_prev[i]);
  mean_abs /= double(noisy.numel());
  // E|N(0, s^2)| = s*sqrt(2/pi); 24576 draws put the standard error near 2e-3.
  CHECK(mean_abs == doctest::Approx(sigma * std::sqrt(2.0 / M_PI)).epsilon(0.03));

  // Distinct calls draw fresh noise.
  Tensor again = flow.provide(f);
  CHECK(max_abs_diff(noisy, again) > 0);
  CHECK(flow.calls() == 2);
}

TEST_CASE("flow files: round trip, quantization, errors") {
  Rng r(3);
  Tensor flow = r.uniform_tensor({9, 13, 2}, -30.0, 30.0);
  flow[5] = 1.0 / 3.0;  // exercise float truncation
  std::string path = tmp_path("umd_flow_rt.umfl");
  write_flow_file(path, flow);
  Tensor back = read_flow_file(path);
  REQUIRE(back.shape() == flow.shape());
  for (size_t i = 0; i < flow.numel(); ++i) CHECK(back[i] == double(float(flow[i])));

  // Float-exact fields survive bit-for-bit.
  Tensor exact({2, 2, 2});
  for (size_t i = 0; i < exact.numel(); ++i) exact[i] = double(i) * 0.5 - 1.0;
  write_flow_file(path, exact);
  CHECK(identical(read_flow_file(path), exact));

  CHECK_THROWS_WITH_AS(read_flow_file(tmp_path("umd_flow_missing.umfl")),
                       doctest::Contains("umd_flow_missing"), ContractViolation);
  std::string junk = tmp_path("umd_flow_junk.umfl");
  {
    std::FILE* fp = std::fopen(junk.c_str(), "wb");
    std::fputs("PNGX123456789", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_WITH_AS(read_flow_file(junk), doctest::Contains("magic"), ContractViolation);
  CHECK_THROWS_AS(write_flow_file(tmp_path("umd_flow_bad.umfl"), Tensor({4, 4, 3})),
                  ContractViolation);
  std::filesystem::remove(path);
  std::filesystem::remove(junk);
}

TEST_CASE("depth inference never touches the flow provider") {
  SyntheticScene sc = small_scene();
  FrameSample f = render_scene(sc, 5);
  NetworkSpec spec;
  FlowProvider flow(FlowProvider::Mode::oracle, 0.5, 1);

  // Full inference path: pose, teacher, student with refinement + fusion.
  PoseNet pose(spec, 3);
  PoseSE3 T = pose.forward(f.cur.data, f.prev.data).value();
  TeacherNet teacher(spec, 1);
  teacher.forward(f.cur.data);
  StudentNet student(spec, 2);
  StudentOutput o = student.forward(f.cur.data, f.prev.data, T, f.K);
  CHECK(o.depth_fused->val.numel() == 16 * 48);
  CHECK(flow.calls() == 0);
}
