#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "umd/geometry.hpp"
#include "umd/image.hpp"
#include "umd/rng.hpp"

using namespace umd;
using umd::ad::Var;

namespace {

PoseSE3 random_pose(Rng& r, double rot_scale, double trans_scale) {
  Eigen::Vector3d w(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
  Eigen::Vector3d t(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
  return pose_from_axis_angle(w * rot_scale, t * trans_scale);
}

}  // namespace

TEST_CASE("intrinsics round trip and scaling") {
  CameraIntrinsics k(120, 110, 31.5, 24.0);
  Eigen::Matrix3d prod = k.K() * k.K_inv();
  CHECK((prod - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(CameraIntrinsics(0, 1, 0, 0), ContractViolation);
  CHECK_THROWS_AS(CameraIntrinsics(1, -2, 0, 0), ContractViolation);

  CameraIntrinsics half = k.scaled(0.5, 0.25);
  CHECK(half.fx == doctest::Approx(60));
  CHECK(half.fy == doctest::Approx(27.5));
  CHECK(half.cx == doctest::Approx(15.75));
  CHECK(half.cy == doctest::Approx(6.0));
}

TEST_CASE("se3 group laws") {
  Rng r(21);
  PoseSE3 a = random_pose(r, 0.8, 2.0);
  PoseSE3 b = random_pose(r, 0.5, 1.0);
  PoseSE3 c = random_pose(r, 0.3, 3.0);

  PoseSE3 ai = se3_compose(a, PoseSE3::identity());
  CHECK((ai.R - a.R).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ai.t - a.t).cwiseAbs().maxCoeff() < 1e-12);

  PoseSE3 inv = se3_compose(a, se3_invert(a));
  CHECK((inv.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(inv.t.cwiseAbs().maxCoeff() < 1e-8);

  PoseSE3 ab_c = se3_compose(se3_compose(a, b), c);
  PoseSE3 a_bc = se3_compose(a, se3_compose(b, c));
  CHECK((ab_c.R - a_bc.R).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((ab_c.t - a_bc.t).cwiseAbs().maxCoeff() < 1e-8);

  PoseSE3 twice = se3_invert(se3_invert(a));
  CHECK((twice.R - a.R).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((twice.t - a.t).cwiseAbs().maxCoeff() < 1e-10);

  PoseSE3 bad;
  bad.R(0, 0) = 2.0;
  CHECK_THROWS_AS(se3_compose(bad, a), ContractViolation);
  CHECK_THROWS_AS(se3_invert(bad), ContractViolation);

  // Pure translations commute and add.
  PoseSE3 tx;
  tx.t = Eigen::Vector3d(1, 0, 0);
  PoseSE3 two = se3_compose(tx, tx);
  CHECK(two.t.x() == doctest::Approx(2));
  CHECK(two.t.y() == doctest::Approx(0));

  CHECK(rotation_angle(a.R) == doctest::Approx(a.R.eulerAngles(0, 1, 2).norm())
            .epsilon(1.0));  // loose: just both in [0, pi]
  CHECK(rotation_angle(Eigen::Matrix3d::Identity()) == doctest::Approx(0));
}

TEST_CASE("axis-angle pose agrees with the autodiff rotation") {
  Rng r(22);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector3d w(r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2));
    PoseSE3 p = pose_from_axis_angle(w, Eigen::Vector3d::Zero());
    Tensor wt({3}, std::vector<double>{w.x(), w.y(), w.z()});
    Tensor r9 = umd::ad::rodrigues(umd::ad::constant(wt))->val;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(p.R(i, j) == doctest::Approx(r9[size_t(i) * 3 + j]).epsilon(1e-10));
  }
}

TEST_CASE("pixel grid covers the image exactly once") {
  Tensor g = pixel_grid(3, 4);
  REQUIRE(g.shape() == Shape{3, 4, 3});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(g.at(y, x, 0) == x);
      CHECK(g.at(y, x, 1) == y);
      CHECK(g.at(y, x, 2) == 1.0);
    }
}

TEST_CASE("image grid clamps on ingestion and validates") {
  Tensor t({8, 8, 1});
  t[0] = -0.5;
  t[1] = 1.5;
  t[2] = 0.25;
  ImageGrid img(t);
  CHECK(img.data[0] == 0.0);
  CHECK(img.data[1] == 1.0);
  CHECK(img.data[2] == 0.25);
  CHECK(img.height() == 8);

  CHECK_THROWS_AS(ImageGrid(Tensor({4, 8, 1})), ContractViolation);
  Tensor bad({8, 8, 1});
  bad[3] = std::nan("");
  CHECK_THROWS_AS(ImageGrid{bad}, ContractViolation);
}

TEST_CASE("raw sampling: identity, constant, hand case, validity") {
  Rng r(23);
  Tensor img = r.uniform_tensor({8, 9, 3}, 0, 1);
  SampleResult s = sample_image(img, identity_coords(8, 9));
  CHECK(max_abs_diff(s.image, img) == 0.0);
  CHECK(s.valid.min_value() == 1.0);

  Tensor flat({8, 8, 1}, 0.42);
  Tensor coords({8, 8, 2});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      coords.at(y, x, 0) = r.uniform(0, 7);
      coords.at(y, x, 1) = r.uniform(0, 7);
    }
  SampleResult sf = sample_image(flat, coords);
  CHECK(sf.image.min_value() == doctest::Approx(0.42));
  CHECK(sf.image.max_value() == doctest::Approx(0.42));

  Tensor tiny({2, 2, 1}, std::vector<double>{0, 1, 2, 3});
  Tensor center({1, 1, 2}, std::vector<double>{0.5, 0.5});
  CHECK(sample_image(tiny, center).image[0] == doctest::Approx(1.5));

  Tensor off({1, 1, 2}, std::vector<double>{-0.1, 0.0});
  SampleResult so = sample_image(tiny, off);
  CHECK(so.valid[0] == 0.0);
  CHECK(so.image[0] == doctest::Approx(0.0));  // clamped to border pixel

  Tensor nan_coords({1, 1, 2}, std::vector<double>{std::nan(""), 0});
  CHECK_THROWS_AS(sample_image(tiny, nan_coords), ContractViolation);
}

TEST_CASE("reproject: identity pose gives the identity grid") {
  CameraIntrinsics k(100, 100, 15.5, 11.5);
  Rng r(24);
  Tensor depth = r.uniform_tensor({24, 32}, 2.0, 20.0);
  ReprojectResult rp = reproject(depth, PoseSE3::identity(), k);
  CHECK(max_abs_diff(rp.coords, identity_coords(24, 32)) < 1e-10);
  CHECK(rp.valid.min_value() == 1.0);
}

TEST_CASE("reproject: fronto-parallel plane under x-translation") {
  // Plane at Z=10, fx=100, translation 1 m along x: every pixel shifts by
  // fx*t_x/Z = 10 px in u, matching the closed-form pinhole oracle. The sign
  // follows the target-to-source convention fixed by the identity test.
  CameraIntrinsics k(100, 100, 16, 12);
  Tensor depth({24, 32}, 10.0);
  PoseSE3 T;
  T.t = Eigen::Vector3d(1, 0, 0);
  ReprojectResult rp = reproject(depth, T, k);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(rp.coords.at(y, x, 0) == doctest::Approx(x + 10.0).epsilon(1e-12));
      CHECK(rp.coords.at(y, x, 1) == doctest::Approx(double(y)).epsilon(1e-12));
    }
}

TEST_CASE("reproject: rotation-only coords are depth independent") {
  CameraIntrinsics k(90, 95, 16, 12);
  PoseSE3 T = pose_from_axis_angle(Eigen::Vector3d(0.02, -0.03, 0.01),
                                   Eigen::Vector3d::Zero());
  Tensor d1({24, 32}, 3.0), d2({24, 32}, 17.0);
  ReprojectResult a = reproject(d1, T, k);
  ReprojectResult b = reproject(d2, T, k);
  CHECK(max_abs_diff(a.coords, b.coords) < 1e-10);
}

TEST_CASE("reproject rejects nonpositive depth") {
  CameraIntrinsics k(100, 100, 4, 4);
  Tensor d({8, 8}, 5.0);
  d.at(3, 3) = 0.0;
  CHECK_THROWS_AS(reproject(d, PoseSE3::identity(), k), ContractViolation);
  d.at(3, 3) = -1.0;
  CHECK_THROWS_AS(reproject(d, PoseSE3::identity(), k), ContractViolation);
}

TEST_CASE("reproject marks points behind the camera invalid") {
  CameraIntrinsics k(50, 50, 8, 8);
  Tensor depth({16, 16}, 2.0);
  PoseSE3 T;
  T.t = Eigen::Vector3d(0, 0, -5);  // moves every point behind the camera
  ReprojectResult rp = reproject(depth, T, k);
  CHECK(rp.valid.max_value() == 0.0);
}

TEST_CASE("rigid flow: zero at identity, matches plane oracle, definitional") {
  CameraIntrinsics k(100, 100, 16, 12);
  Tensor depth({24, 32}, 10.0);
  Tensor zero = rigid_flow(depth, PoseSE3::identity(), k);
  CHECK(std::fabs(zero.min_value()) < 1e-10);
  CHECK(std::fabs(zero.max_value()) < 1e-10);

  PoseSE3 T;
  T.t = Eigen::Vector3d(1, 0, 0);
  Tensor f = rigid_flow(depth, T, k);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(f.at(y, x, 0) == doctest::Approx(10.0).epsilon(1e-12));
      CHECK(f.at(y, x, 1) == doctest::Approx(0.0).scale(1));
    }

  Rng r(25);
  Tensor rd = r.uniform_tensor({16, 20}, 2, 12);
  PoseSE3 rt = random_pose(r, 0.05, 0.4);
  Tensor rf = rigid_flow(rd, rt, k);
  ReprojectResult rp = reproject(rd, rt, k);
  double worst = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 20; ++x) {
      worst = std::max(worst, std::fabs(rf.at(y, x, 0) - (rp.coords.at(y, x, 0) - x)));
      worst = std::max(worst, std::fabs(rf.at(y, x, 1) - (rp.coords.at(y, x, 1) - y)));
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("warp-flow consistency: sampling at grid+flow equals reprojection") {
  CameraIntrinsics k(80, 85, 10, 8);
  Rng r(26);
  Tensor depth = r.uniform_tensor({16, 20}, 2, 12);
  Tensor src = r.uniform_tensor({16, 20, 3}, 0, 1);
  PoseSE3 T = random_pose(r, 0.04, 0.5);

  SampleResult via_reproject = synthesize_view(src, depth, T, k);
  Tensor f = rigid_flow(depth, T, k);
  Tensor coords = identity_coords(16, 20);
  for (size_t i = 0; i < coords.numel(); ++i) coords[i] += f[i];
  SampleResult via_flow = sample_image(src, coords);
  CHECK(max_abs_diff(via_reproject.image, via_flow.image) < 1e-12);
}

TEST_CASE("synthesize_view with identity pose returns the source") {
  CameraIntrinsics k(70, 75, 12, 9);
  Rng r(27);
  Tensor src = r.uniform_tensor({20, 26, 3}, 0, 1);
  Tensor depth = r.uniform_tensor({20, 26}, 1, 30);
  SampleResult s = synthesize_view(src, depth, PoseSE3::identity(), k);
  CHECK(max_abs_diff(s.image, src) < 1e-9);
  CHECK(s.valid.min_value() == 1.0);
}

TEST_CASE("differentiable reproject matches the raw path") {
  CameraIntrinsics k(60, 66, 10, 7.5);
  Rng r(28);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor depth = r.uniform_tensor({14, 18}, 2, 12);
    Eigen::Vector3d w(r.uniform(-0.1, 0.1), r.uniform(-0.1, 0.1),
                      r.uniform(-0.1, 0.1));
    Eigen::Vector3d t(r.uniform(-0.5, 0.5), r.uniform(-0.5, 0.5),
                      r.uniform(-0.5, 0.5));
    PoseSE3 T = pose_from_axis_angle(w, t);

    Tensor wt({3}, std::vector<double>{w.x(), w.y(), w.z()});
    Tensor tt({3}, std::vector<double>{t.x(), t.y(), t.z()});
    auto vrp = umd::ad::reproject(umd::ad::constant(depth),
                                  umd::ad::rodrigues(umd::ad::constant(wt)),
                                  umd::ad::constant(tt), k);
    ReprojectResult rp = reproject(depth, T, k);
    double worst = 0;
    for (int y = 0; y < 14; ++y)
      for (int x = 0; x < 18; ++x) {
        worst = std::max(worst,
                         std::fabs(vrp.u->val.at(y, x) - rp.coords.at(y, x, 0)));
        worst = std::max(worst,
                         std::fabs(vrp.v->val.at(y, x) - rp.coords.at(y, x, 1)));
      }
    CHECK(worst < 1e-10);
    CHECK(max_abs_diff(vrp.valid, rp.valid) == 0.0);

    Tensor src = r.uniform_tensor({14, 18, 3}, 0, 1);
    Var synth = umd::ad::synthesize_view(umd::ad::constant(src), vrp);
    SampleResult raw = synthesize_view(src, depth, T, k);
    CHECK(max_abs_diff(synth->val, raw.image) < 1e-10);
  }
}

TEST_CASE("synthesis gradients w.r.t. depth, rotation, translation") {
  CameraIntrinsics k(40, 42, 7.5, 7.5);
  Rng r(29);
  int trials = 100, used = 0;
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Tensor depth = r.uniform_tensor({8, 8}, 3, 10);
    Tensor src = r.uniform_tensor({8, 8, 1}, 0, 1);
    Tensor w = r.uniform_tensor({3}, -0.05, 0.05);
    Tensor t = r.uniform_tensor({3}, -0.3, 0.3);

    // Pixels whose sample coords sit within 1e-3 of the bilinear kinks (the
    // integer grid) or outside the image are excluded: finite differences are
    // not meaningful across a kink.
    auto probe = umd::ad::reproject(umd::ad::constant(depth),
                                    umd::ad::rodrigues(umd::ad::constant(w)),
                                    umd::ad::constant(t), k);
    Tensor mask({8, 8});
    int kept = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        double u = probe.u->val.at(y, x), v = probe.v->val.at(y, x);
        bool keep = probe.valid.at(y, x) > 0 &&
                    std::fabs(u - std::round(u)) > 1e-3 &&
                    std::fabs(v - std::round(v)) > 1e-3;
        mask.at(y, x) = keep ? 1.0 : 0.0;
        kept += keep;
      }
    if (kept < 8) continue;
    ++used;

    auto rep = testutil::fd_check(
        [&](const std::vector<Var>& in) {
          auto vrp = umd::ad::reproject(in[0], umd::ad::rodrigues(in[1]),
                                        in[2], k);
          Var synth = umd::ad::synthesize_view(umd::ad::constant(src), vrp);
          Var m = umd::ad::expand_lastdim(umd::ad::constant(mask), 1);
          return umd::ad::mean(umd::ad::square(synth) * m);
        },
        {depth, w, t}, 1e-5);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(used > 80);
  CHECK(worst < 1e-3);
}
