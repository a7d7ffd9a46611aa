#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "umd/consistency.hpp"
#include "umd/data.hpp"
#include "umd/geometry.hpp"
#include "umd/imageio.hpp"

using namespace umd;
namespace fs = std::filesystem;

namespace {

// Max |flow - rigid| over pixels selected by keep.
double max_flow_gap(const Tensor& flow, const Tensor& rigid,
                    const Tensor& mask, bool moving_pixels) {
  double worst = 0;
  for (int y = 0; y < flow.dim(0); ++y)
    for (int x = 0; x < flow.dim(1); ++x) {
      if ((mask.at(y, x) != 0) != moving_pixels) continue;
      worst = std::max(worst, std::fabs(flow.at(y, x, 0) - rigid.at(y, x, 0)));
      worst = std::max(worst, std::fabs(flow.at(y, x, 1) - rigid.at(y, x, 1)));
    }
  return worst;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Static scene with a fast jittering camera: small absolute excursion but a
// wide baseline between neighboring frames, so the cost volume has parallax
// to work with.
SyntheticScene static_textured_scene(int frames) {
  SyntheticScene s = make_scene("standard", frames, 11);
  s.object.present = false;
  s.noise_sigma = 0.0;
  auto pos = [](int i) {
    return Eigen::Vector3d(0.22 * std::sin(0.9 * i),
                           0.10 * std::sin(0.7 * i + 0.5),
                           0.15 * std::sin(0.5 * i));
  };
  auto rot = [](int i) {
    return Eigen::Vector3d(0.004 * std::sin(0.2 * i),
                           0.008 * std::sin(0.15 * i), 0.0);
  };
  s.trajectory.clear();
  for (int i = 0; i < frames; ++i)
    s.trajectory.push_back(
        pose_from_axis_angle(rot(i) - rot(0), pos(i) - pos(0)));
  return s;
}

}  // namespace

TEST_CASE("renderer: static pixels obey rigid-flow consistency") {
  for (const char* preset : {"standard", "low_texture", "moving_box"}) {
    SyntheticScene scene = make_scene(preset, 20, 3);
    for (int f : {1, 7, 14, 18}) {
      FrameSample s = render_scene(scene, f);
      Tensor rigid = rigid_flow(s.depth, s.T_prev, s.K);
      CHECK(max_flow_gap(s.flow_prev, rigid, s.motion_mask, false) < 1e-6);
    }
  }
}

TEST_CASE("renderer: motionless scene yields zero flow and identical frames") {
  SyntheticScene s = make_scene("standard", 5, 1);
  s.object.present = false;
  s.noise_sigma = 0.0;
  for (auto& c : s.trajectory) c = PoseSE3::identity();
  FrameSample sample = render_scene(s, 2);
  CHECK(max_abs_diff(sample.prev.data, sample.cur.data) == 0.0);
  CHECK(max_abs_diff(sample.next.data, sample.cur.data) == 0.0);
  for (size_t i = 0; i < sample.flow_prev.numel(); ++i)
    CHECK(std::fabs(sample.flow_prev[i]) < 1e-10);
  CHECK(sample.motion_mask.max_value() == 0.0);
}

TEST_CASE("renderer: flow differs from rigid exactly on the motion mask") {
  SyntheticScene scene = make_scene("moving_box", 30, 5);
  FrameSample s = render_scene(scene, 10);
  CHECK(s.object_in_view);
  double frac = s.motion_mask.mean();
  CHECK(frac > 0.06);
  CHECK(frac < 0.12);

  Tensor rigid = rigid_flow(s.depth, s.T_prev, s.K);
  CHECK(max_flow_gap(s.flow_prev, rigid, s.motion_mask, false) < 1e-6);
  // Every masked pixel shows a clear disagreement.
  double least = 1e300;
  for (int y = 0; y < s.depth.dim(0); ++y)
    for (int x = 0; x < s.depth.dim(1); ++x) {
      if (s.motion_mask.at(y, x) == 0) continue;
      double du = s.flow_prev.at(y, x, 0) - rigid.at(y, x, 0);
      double dv = s.flow_prev.at(y, x, 1) - rigid.at(y, x, 1);
      least = std::min(least, std::hypot(du, dv));
    }
  CHECK(least > 0.5);
}

TEST_CASE("renderer: deterministic per scene and frame") {
  SyntheticScene scene = make_scene("standard", 12, 9);
  FrameSample a = render_scene(scene, 6);
  FrameSample b = render_scene(scene, 6);
  CHECK(max_abs_diff(a.cur.data, b.cur.data) == 0.0);
  CHECK(max_abs_diff(a.prev.data, b.prev.data) == 0.0);
  CHECK(max_abs_diff(a.depth, b.depth) == 0.0);
  CHECK(max_abs_diff(a.flow_prev, b.flow_prev) == 0.0);
}

TEST_CASE("renderer: depth is the nearest surface in camera frame") {
  SyntheticScene scene = make_scene("standard", 12, 4);
  FrameSample s = render_scene(scene, 5);
  CHECK(s.depth.min_value() > 1.0);
  CHECK(s.depth.max_value() < 11.5);
  for (int y = 0; y < s.depth.dim(0); ++y)
    for (int x = 0; x < s.depth.dim(1); ++x)
      if (s.motion_mask.at(y, x) != 0) CHECK(s.depth.at(y, x) < 3.5);
}

TEST_CASE("renderer: object leaving the frustum is flagged") {
  SyntheticScene scene = make_scene("moving_box", 50, 5);
  scene.object.vx = 0.6;  // outruns the camera instead of riding along
  FrameSample early = render_scene(scene, 1);
  CHECK(early.object_in_view);
  FrameSample late = render_scene(scene, 45);
  CHECK_FALSE(late.object_in_view);
  CHECK(late.motion_mask.max_value() == 0.0);
  CHECK(late.depth.all_finite());
}

TEST_CASE("scene: save/load round trip is exact") {
  fs::path dir = fresh_dir("umd_scene_rt");
  SyntheticScene s = make_scene("standard", 10, 21);
  std::string p1 = (dir / "scene.txt").string();
  std::string p2 = (dir / "scene2.txt").string();
  save_scene(s, p1);
  SyntheticScene loaded = load_scene(p1);
  save_scene(loaded, p2);

  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK_FALSE(s1.empty());

  FrameSample a = render_scene(s, 4);
  FrameSample b = render_scene(loaded, 4);
  CHECK(max_abs_diff(a.cur.data, b.cur.data) == 0.0);
  CHECK(max_abs_diff(a.depth, b.depth) == 0.0);
}

TEST_CASE("scene: validation rejects broken configs") {
  SyntheticScene s = make_scene("standard", 8, 1);
  SyntheticScene no_bg = s;
  for (auto& l : no_bg.layers) l.bounded = true;
  CHECK_THROWS_AS(no_bg.validate(), ContractViolation);

  SyntheticScene off_origin = s;
  off_origin.trajectory[0] = pose_from_axis_angle({0, 0, 0}, {0.1, 0, 0});
  CHECK_THROWS_AS(off_origin.validate(), ContractViolation);

  SyntheticScene short_traj = s;
  short_traj.trajectory.pop_back();
  CHECK_THROWS_AS(short_traj.validate(), ContractViolation);

  CHECK_THROWS_AS(make_scene("no_such_preset", 8, 1), ContractViolation);
  CHECK_THROWS_AS(render_scene(s, 0), ContractViolation);
  CHECK_THROWS_AS(render_scene(s, 7), ContractViolation);
}

TEST_CASE("kitti: export then load round-trips tensors") {
  fs::path dir = fresh_dir("umd_kitti_rt");
  SyntheticScene scene = make_scene("standard", 8, 33);
  export_kitti_sequence(scene, dir.string(), "seq00", "mini");

  LoadOptions opt;
  opt.target_h = scene.height;
  opt.target_w = scene.width;
  auto samples = load_kitti_sequence(dir.string(), "mini", opt);
  REQUIRE(samples.size() == 6);

  FrameSample gt = render_scene(scene, 3);
  const FrameSample& got = samples[2];
  CHECK(got.frame == 3);
  CHECK(got.K.fx == scene.intrinsics.fx);
  CHECK(got.K.cy == scene.intrinsics.cy);

  // Images come back exactly as their 8-bit quantization.
  for (size_t i = 0; i < gt.cur.data.numel(); ++i) {
    double q = std::lround(gt.cur.data[i] * 255.0) / 255.0;
    CHECK(got.cur.data[i] == doctest::Approx(q).epsilon(1e-12));
  }
  // Depth comes back as its 1/256 m quantization.
  for (size_t i = 0; i < gt.depth.numel(); ++i) {
    double q = std::lround(gt.depth[i] * 256.0) / 256.0;
    CHECK(got.depth[i] == doctest::Approx(q).epsilon(1e-12));
  }
  REQUIRE(got.has_pose);
  CHECK((got.T_prev.R - gt.T_prev.R).norm() < 1e-12);
  CHECK((got.T_prev.t - gt.T_prev.t).norm() < 1e-12);

  // Loading twice gives identical tensors.
  auto again = load_kitti_sequence(dir.string(), "mini", opt);
  REQUIRE(again.size() == samples.size());
  CHECK(max_abs_diff(again[2].cur.data, samples[2].cur.data) == 0.0);
}

TEST_CASE("kitti: split handling and error reporting") {
  fs::path dir = fresh_dir("umd_kitti_err");
  SyntheticScene scene = make_scene("standard", 6, 2);
  export_kitti_sequence(scene, dir.string(), "seq00", "mini");
  LoadOptions opt;
  opt.target_h = scene.height;
  opt.target_w = scene.width;

  {  // empty split -> empty stream
    std::ofstream(dir / "splits" / "empty.txt");
    CHECK(load_kitti_sequence(dir.string(), "empty", opt).empty());
  }
  {  // missing split file names the path
    bool threw = false;
    try {
      load_kitti_sequence(dir.string(), "nope", opt);
    } catch (const ContractViolation& e) {
      threw = true;
      CHECK(std::string(e.what()).find("nope.txt") != std::string::npos);
    }
    CHECK(threw);
  }
  {  // missing image names the path
    fs::path img = dir / "seq00" / "image_02" / "data" / "0000000002.png";
    fs::rename(img, img.string() + ".bak");
    bool threw = false;
    try {
      load_kitti_sequence(dir.string(), "mini", opt);
    } catch (const ContractViolation& e) {
      threw = true;
      CHECK(std::string(e.what()).find("0000000002.png") != std::string::npos);
    }
    CHECK(threw);
    fs::rename(img.string() + ".bak", img);
  }
  {  // corrupt image skips that sample, keeps the rest
    fs::path img = dir / "seq00" / "image_02" / "data" / "0000000004.png";
    std::ofstream(img) << "not a png";
    auto samples = load_kitti_sequence(dir.string(), "mini", opt);
    CHECK(samples.size() == 2);  // frames 1,2 survive; 3,4 touch the bad file
    for (const auto& s : samples) CHECK(s.frame <= 2);
  }
}

TEST_CASE("kitti: halving the resolution halves the intrinsics") {
  fs::path dir = fresh_dir("umd_kitti_half");
  SyntheticScene scene = make_scene("standard", 6, 2);
  export_kitti_sequence(scene, dir.string(), "seq00", "mini");
  LoadOptions opt;
  opt.target_h = scene.height / 2;
  opt.target_w = scene.width / 2;
  auto samples = load_kitti_sequence(dir.string(), "mini", opt);
  REQUIRE(!samples.empty());
  CHECK(samples[0].cur.height() == scene.height / 2);
  CHECK(samples[0].cur.width() == scene.width / 2);
  CHECK(samples[0].K.fx == doctest::Approx(scene.intrinsics.fx / 2).epsilon(1e-12));
  CHECK(samples[0].K.fy == doctest::Approx(scene.intrinsics.fy / 2).epsilon(1e-12));
  CHECK(samples[0].K.cx == doctest::Approx(scene.intrinsics.cx / 2).epsilon(1e-12));
  CHECK(samples[0].K.cy == doctest::Approx(scene.intrinsics.cy / 2).epsilon(1e-12));
}

TEST_CASE("cost volume argmin tracks rendered depth on textured pixels") {
  SyntheticScene scene = static_textured_scene(40);
  FrameSample s = render_scene(scene, 12);
  auto hyp = depth_hypotheses(1.0, 12.0, 32);
  CostVolume cv =
      build_cost_volume(s.cur.data, s.prev.data, s.T_prev, s.K, hyp);
  Tensor dmap = argmin_depth(cv);

  // Texture measure: channel-mean absolute forward-difference magnitude.
  int h = s.depth.dim(0), w = s.depth.dim(1);
  int hits = 0, used = 0;
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) {
      double g = 0;
      for (int c = 0; c < 3; ++c)
        g += std::fabs(s.cur.data.at(y, x + 1, c) - s.cur.data.at(y, x, c)) +
             std::fabs(s.cur.data.at(y + 1, x, c) - s.cur.data.at(y, x, c));
      if (g / 3.0 < 0.02) continue;
      // Nearest hypothesis index to GT depth vs argmin index.
      int gt_bin = 0, got_bin = 0;
      for (int k = 0; k < int(hyp.size()); ++k) {
        if (std::fabs(hyp[size_t(k)] - s.depth.at(y, x)) <
            std::fabs(hyp[size_t(gt_bin)] - s.depth.at(y, x)))
          gt_bin = k;
        if (dmap.at(y, x) == hyp[size_t(k)]) got_bin = k;
      }
      ++used;
      if (std::abs(gt_bin - got_bin) <= 1) ++hits;
    }
  REQUIRE(used > 2000);
  CHECK(double(hits) / used > 0.85);
}
