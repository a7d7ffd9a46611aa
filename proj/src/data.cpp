#include "umd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "umd/imageio.hpp"
#include "umd/rng.hpp"

namespace fs = std::filesystem;

namespace umd {

double PlaneLayer::texture(double x, double y, int channel) const {
  double v = base;
  for (size_t j = 0; j < amp.size(); ++j)
    v += amp[j] * std::sin(freq_x[j] * x + freq_y[j] * y + phase[j] +
                           1.7 * channel);
  return v;
}

void SyntheticScene::validate() const {
  UMD_REQUIRE(height >= 8 && width >= 8, "scene: frame too small");
  UMD_REQUIRE(frame_count >= 3, "scene: need at least 3 frames");
  UMD_REQUIRE(!layers.empty(), "scene: need at least one layer");
  bool unbounded = false;
  for (const auto& l : layers) {
    UMD_REQUIRE(l.z >= 0.1 && l.z <= 100.0, "scene: layer depth out of range");
    UMD_REQUIRE(l.amp.size() == l.freq_x.size() &&
                    l.amp.size() == l.freq_y.size() &&
                    l.amp.size() == l.phase.size(),
                "scene: texture component lists must align");
    if (!l.bounded) unbounded = true;
  }
  UMD_REQUIRE(unbounded, "scene: need an unbounded background layer");
  if (object.present)
    UMD_REQUIRE(object.z >= 0.1 && object.z <= 100.0,
                "scene: object depth out of range");
  UMD_REQUIRE(int(trajectory.size()) == frame_count,
              "scene: trajectory length must equal frame_count");
  UMD_REQUIRE(trajectory[0].valid() &&
                  trajectory[0].R.isApprox(Eigen::Matrix3d::Identity(), 1e-12) &&
                  trajectory[0].t.norm() < 1e-12,
              "scene: trajectory must start at identity");
  UMD_REQUIRE(noise_sigma >= 0, "scene: noise_sigma must be >= 0");
}

namespace {

struct Hit {
  double lambda = 0;
  Eigen::Vector3d world{0, 0, 0};
  const PlaneLayer* layer = nullptr;
  bool is_object = false;
};

Eigen::Vector2d object_center(const MovingObject& o, int frame) {
  return {o.cx0 + o.vx * frame, o.cy0 + o.vy * frame};
}

// Nearest surface along o + lambda*d; every ray must hit the background.
Hit cast_ray(const SyntheticScene& s, int frame, const Eigen::Vector3d& o,
             const Eigen::Vector3d& d) {
  Hit best;
  double best_l = 1e300;
  auto consider = [&](double plane_z, bool bounded, double x0, double x1,
                      double y0, double y1, const PlaneLayer* layer,
                      bool is_obj) {
    if (std::fabs(d.z()) < 1e-12) return;
    double l = (plane_z - o.z()) / d.z();
    if (l <= 1e-9 || l >= best_l) return;
    Eigen::Vector3d p = o + l * d;
    if (bounded && (p.x() < x0 || p.x() > x1 || p.y() < y0 || p.y() > y1))
      return;
    best = Hit{l, p, layer, is_obj};
    best_l = l;
  };
  for (const auto& l : s.layers)
    consider(l.z, l.bounded, l.x0, l.x1, l.y0, l.y1, &l, false);
  if (s.object.present) {
    Eigen::Vector2d c = object_center(s.object, frame);
    consider(s.object.z, true, c.x() - s.object.half_x, c.x() + s.object.half_x,
             c.y() - s.object.half_y, c.y() + s.object.half_y,
             &s.object.texture, true);
  }
  UMD_REQUIRE(best.layer != nullptr, "renderer: ray escaped the scene");
  return best;
}

Tensor render_image(const SyntheticScene& s, int frame) {
  const PoseSE3& C = s.trajectory[size_t(frame)];
  const CameraIntrinsics& K = s.intrinsics;
  Tensor img({s.height, s.width, 3});
  Eigen::Vector2d oc = object_center(s.object, frame);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      Eigen::Vector3d dir_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      Eigen::Vector3d dir = C.R * dir_cam;
      Hit h = cast_ray(s, frame, C.t, dir);
      double tx = h.world.x(), ty = h.world.y();
      if (h.is_object) {
        tx -= oc.x();
        ty -= oc.y();
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = h.layer->texture(tx, ty, c);
    }
  if (s.noise_sigma > 0) {
    Rng noise = Rng(s.seed, 0xF00D).stream(uint64_t(frame));
    for (size_t i = 0; i < img.numel(); ++i)
      img[i] += s.noise_sigma * noise.normal();
  }
  // Sensor saturation; also guarantees the [0, 1] range the networks demand.
  for (size_t i = 0; i < img.numel(); ++i)
    img[i] = std::clamp(img[i], 0.0, 1.0);
  return img;
}

Eigen::Vector2d project(const PoseSE3& cam, const CameraIntrinsics& K,
                        const Eigen::Vector3d& world) {
  Eigen::Vector3d p = cam.R.transpose() * (world - cam.t);
  UMD_REQUIRE(p.z() > 1e-9, "renderer: point behind camera");
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

std::string frame_name(int f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%010d", f);
  return buf;
}

Tensor resize_nearest(const Tensor& v, int oh, int ow) {
  if (v.dim(0) == oh && v.dim(1) == ow) return v;
  Tensor out({oh, ow});
  double sy = double(v.dim(0)) / oh, sx = double(v.dim(1)) / ow;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      int iy = std::min(v.dim(0) - 1, int((y + 0.5) * sy));
      int ix = std::min(v.dim(1) - 1, int((x + 0.5) * sx));
      out.at(y, x) = v.at(iy, ix);
    }
  return out;
}

}  // namespace

FrameSample render_scene(const SyntheticScene& scene, int frame) {
  scene.validate();
  UMD_REQUIRE(frame >= 1 && frame + 1 < scene.frame_count,
              "render_scene: frame must have neighbors on both sides");
  const CameraIntrinsics& K = scene.intrinsics;
  const PoseSE3& Ct = scene.trajectory[size_t(frame)];
  const PoseSE3& Cp = scene.trajectory[size_t(frame - 1)];
  const PoseSE3& Cn = scene.trajectory[size_t(frame + 1)];

  FrameSample out;
  out.frame = frame;
  out.K = K;
  out.prev = ImageGrid(render_image(scene, frame - 1));
  out.cur = ImageGrid(render_image(scene, frame));
  out.next = ImageGrid(render_image(scene, frame + 1));
  out.T_prev = se3_compose(se3_invert(Cp), Ct);
  out.T_next = se3_compose(se3_invert(Cn), Ct);
  out.has_pose = true;

  out.depth = Tensor({scene.height, scene.width});
  out.flow_prev = Tensor({scene.height, scene.width, 2});
  out.motion_mask = Tensor({scene.height, scene.width});
  out.flat_mask = Tensor({scene.height, scene.width});
  bool moving = scene.object.present &&
                (scene.object.vx != 0 || scene.object.vy != 0);
  bool seen = false;
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      Eigen::Vector3d dir_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      Hit h = cast_ray(scene, frame, Ct.t, Ct.R * dir_cam);
      Eigen::Vector3d cam_pt = Ct.R.transpose() * (h.world - Ct.t);
      out.depth.at(y, x) = cam_pt.z();
      Eigen::Vector3d at_prev = h.world;
      if (h.is_object) {
        seen = true;
        at_prev -= Eigen::Vector3d(scene.object.vx, scene.object.vy, 0.0);
      }
      Eigen::Vector2d q = project(Cp, K, at_prev);
      out.flow_prev.at(y, x, 0) = q.x() - x;
      out.flow_prev.at(y, x, 1) = q.y() - y;
      out.motion_mask.at(y, x) = (h.is_object && moving) ? 1.0 : 0.0;
      out.flat_mask.at(y, x) = (!h.is_object && h.layer->flat) ? 1.0 : 0.0;
    }
  out.object_in_view = seen;
  return out;
}

// Presets ---------------------------------------------------------------------

namespace {

PlaneLayer textured_layer(Rng rng, double z, int components, double amp_hi,
                          double freq_hi) {
  // Band-limited noise: many sinusoids with log-spread incommensurate
  // frequencies, random directions and phases, and a mildly red spectrum.
  // Coarse bands keep the photometric basin wide, mid/high bands make a
  // misaligned warp expensive, and the irregular spectrum avoids the
  // periodic-texture failure mode where a shift by one period looks aligned.
  const double kTau = 6.283185307179586;
  const int n = components * 3;
  PlaneLayer l;
  l.z = z;
  const size_t un = size_t(n);
  std::vector<double> f(un), a(un);
  double total = 0;
  for (int j = 0; j < n; ++j) {
    f[size_t(j)] = freq_hi * std::exp(-std::log(24.0) * rng.uniform(0.0, 1.0));
    a[size_t(j)] = std::pow(f[size_t(j)] / freq_hi, -0.6);
    total += a[size_t(j)];
  }
  for (int j = 0; j < n; ++j) {
    double theta = rng.uniform(0.0, kTau);
    l.amp.push_back(3.2 * amp_hi * a[size_t(j)] / total);
    l.freq_x.push_back(f[size_t(j)] * std::cos(theta));
    l.freq_y.push_back(f[size_t(j)] * std::sin(theta));
    l.phase.push_back(rng.uniform(0.0, kTau));
  }
  return l;
}

std::vector<PoseSE3> drifting_trajectory(int frames, double v) {
  // Dominant lateral drift with bounded wobble. Inter-frame translation keeps
  // one consistent direction (a driving camera, not a tripod shake): with a
  // direction that never flips, from-scratch pose+depth bootstrapping is
  // well-posed, the same reason road footage trains while handheld jitter does
  // not. The wobble still swings the step size ~4x and the off-axis
  // components change sign, so the pose head has to read the images rather
  // than memorize one bias.
  auto pos = [&](int i) {
    return Eigen::Vector3d(v * (i + 0.7 * std::sin(0.9 * i)),
                           0.05 * std::sin(0.7 * i + 1.0),
                           0.10 * std::sin(0.25 * i));
  };
  auto rot = [&](int i) {
    return Eigen::Vector3d(0.004 * std::sin(0.8 * i + 0.7),
                           0.008 * std::sin(0.6 * i), 0.0);
  };
  std::vector<PoseSE3> traj;
  for (int i = 0; i < frames; ++i)
    traj.push_back(pose_from_axis_angle(rot(i) - rot(0), pos(i) - pos(0)));
  return traj;
}

}  // namespace

SyntheticScene make_scene(const std::string& preset, int frames,
                          uint64_t seed) {
  SyntheticScene s;
  s.name = preset;
  s.frame_count = frames;
  s.seed = seed;
  Rng rng(seed, 0x5CE11E);

  // Layouts are corridors: bounded layers are horizontal bands long enough in
  // x that the drifting camera never runs out of them, so every frame sees the
  // same depth structure (top band near, bottom band mid, background far).
  if (preset == "standard" || preset == "moving_box") {
    s.noise_sigma = 0.01;
    s.layers.push_back(textured_layer(rng.stream(0), 11.0, 4, 0.12, 11.0));
    PlaneLayer a = textured_layer(rng.stream(1), 4.0, 4, 0.12, 31.0);
    a.bounded = true;
    a.x0 = -3.9;
    a.x1 = 9.9;
    a.y0 = -1.30;
    a.y1 = -0.13;
    s.layers.push_back(a);
    PlaneLayer b = textured_layer(rng.stream(2), 6.0, 4, 0.12, 21.0);
    b.bounded = true;
    b.x0 = -5.8;
    b.x1 = 11.7;
    b.y0 = 0.33;
    b.y1 = 2.00;
    s.layers.push_back(b);
    s.object.present = true;
    s.object.z = 3.0;
    s.object.texture = textured_layer(rng.stream(3), 3.0, 4, 0.13, 42.0);
    // The box roughly rides along with the camera so it stays in frame for
    // the whole sequence; its world velocity still dwarfs the flow threshold.
    if (preset == "standard") {
      s.object.half_x = 0.54;
      s.object.half_y = 0.39;
      s.object.cx0 = -0.5;
      s.object.cy0 = 0.05;
      s.object.vx = 0.15;
      s.object.vy = 0.004;
    } else {
      s.object.half_x = 0.66;
      s.object.half_y = 0.42;
      s.object.cx0 = -0.2;
      s.object.cy0 = 0.0;
      s.object.vx = 0.15;
      s.object.vy = 0.006;
    }
    s.trajectory = drifting_trajectory(frames, 0.12);
  } else if (preset == "low_texture") {
    s.noise_sigma = 0.02;
    PlaneLayer sky = textured_layer(rng.stream(0), 9.0, 1, 0.012, 1.0);
    sky.flat = true;
    s.layers.push_back(sky);
    PlaneLayer ground = textured_layer(rng.stream(1), 4.0, 4, 0.13, 31.0);
    ground.bounded = true;
    ground.x0 = -4.5;
    ground.x1 = 10.5;
    ground.y0 = 0.12;
    ground.y1 = 3.0;
    s.layers.push_back(ground);
    PlaneLayer wall = textured_layer(rng.stream(2), 6.0, 4, 0.12, 21.0);
    wall.bounded = true;
    wall.x0 = -6.0;
    wall.x1 = 11.9;
    wall.y0 = -1.2;
    wall.y1 = 0.0;
    s.layers.push_back(wall);
    s.trajectory = drifting_trajectory(frames, 0.12);
  } else {
    throw ContractViolation("unknown scene preset: " + preset);
  }
  s.validate();
  return s;
}

// Serialization ---------------------------------------------------------------

namespace {

void put(std::ostream& os, const std::string& key, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << key << ' ' << buf << '\n';
}

void put_list(std::ostream& os, const std::string& key,
              const std::vector<double>& v) {
  os << key;
  for (double x : v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << ' ' << buf;
  }
  os << '\n';
}

void put_layer(std::ostream& os, const std::string& p, const PlaneLayer& l) {
  put(os, p + ".z", l.z);
  put(os, p + ".base", l.base);
  put(os, p + ".flat", l.flat ? 1 : 0);
  put(os, p + ".bounded", l.bounded ? 1 : 0);
  if (l.bounded) {
    put(os, p + ".x0", l.x0);
    put(os, p + ".x1", l.x1);
    put(os, p + ".y0", l.y0);
    put(os, p + ".y1", l.y1);
  }
  put_list(os, p + ".amp", l.amp);
  put_list(os, p + ".freq_x", l.freq_x);
  put_list(os, p + ".freq_y", l.freq_y);
  put_list(os, p + ".phase", l.phase);
}

using KeyMap = std::map<std::string, std::vector<double>>;

double get1(const KeyMap& m, const std::string& key) {
  auto it = m.find(key);
  UMD_REQUIRE(it != m.end() && it->second.size() == 1,
              "scene file: missing key " + key);
  return it->second[0];
}

std::vector<double> get_list(const KeyMap& m, const std::string& key) {
  auto it = m.find(key);
  UMD_REQUIRE(it != m.end(), "scene file: missing key " + key);
  return it->second;
}

PlaneLayer get_layer(const KeyMap& m, const std::string& p) {
  PlaneLayer l;
  l.z = get1(m, p + ".z");
  l.base = get1(m, p + ".base");
  l.flat = get1(m, p + ".flat") != 0;
  l.bounded = get1(m, p + ".bounded") != 0;
  if (l.bounded) {
    l.x0 = get1(m, p + ".x0");
    l.x1 = get1(m, p + ".x1");
    l.y0 = get1(m, p + ".y0");
    l.y1 = get1(m, p + ".y1");
  }
  l.amp = get_list(m, p + ".amp");
  l.freq_x = get_list(m, p + ".freq_x");
  l.freq_y = get_list(m, p + ".freq_y");
  l.phase = get_list(m, p + ".phase");
  return l;
}

}  // namespace

void save_scene(const SyntheticScene& s, const std::string& path) {
  s.validate();
  std::ofstream os(path);
  UMD_REQUIRE(os.good(), "cannot open scene file for writing: " + path);
  os << "name " << s.name << '\n';
  put(os, "height", s.height);
  put(os, "width", s.width);
  put(os, "frame_count", s.frame_count);
  put(os, "seed", double(s.seed));
  put(os, "noise_sigma", s.noise_sigma);
  put(os, "fx", s.intrinsics.fx);
  put(os, "fy", s.intrinsics.fy);
  put(os, "cx", s.intrinsics.cx);
  put(os, "cy", s.intrinsics.cy);
  put(os, "layer_count", double(s.layers.size()));
  for (size_t i = 0; i < s.layers.size(); ++i)
    put_layer(os, "layer" + std::to_string(i), s.layers[i]);
  put(os, "object.present", s.object.present ? 1 : 0);
  if (s.object.present) {
    put(os, "object.z", s.object.z);
    put(os, "object.half_x", s.object.half_x);
    put(os, "object.half_y", s.object.half_y);
    put(os, "object.cx0", s.object.cx0);
    put(os, "object.cy0", s.object.cy0);
    put(os, "object.vx", s.object.vx);
    put(os, "object.vy", s.object.vy);
    put_layer(os, "object.texture", s.object.texture);
  }
  for (size_t i = 0; i < s.trajectory.size(); ++i) {
    const PoseSE3& c = s.trajectory[i];
    // Matrix entries straight through, so a reload renders bit-identically.
    std::vector<double> row;
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) row.push_back(c.R(r, col));
    for (int r = 0; r < 3; ++r) row.push_back(c.t[r]);
    put_list(os, "traj" + std::to_string(i), row);
  }
  UMD_REQUIRE(os.good(), "scene file write failed: " + path);
}

SyntheticScene load_scene(const std::string& path) {
  std::ifstream is(path);
  UMD_REQUIRE(is.good(), "cannot open scene file: " + path);
  KeyMap m;
  std::string name = "custom";
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "name") {
      ls >> name;
      continue;
    }
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    m[key] = vals;
  }
  SyntheticScene s;
  s.name = name;
  s.height = int(get1(m, "height"));
  s.width = int(get1(m, "width"));
  s.frame_count = int(get1(m, "frame_count"));
  s.seed = uint64_t(get1(m, "seed"));
  s.noise_sigma = get1(m, "noise_sigma");
  s.intrinsics = CameraIntrinsics(get1(m, "fx"), get1(m, "fy"), get1(m, "cx"),
                                  get1(m, "cy"));
  int layers = int(get1(m, "layer_count"));
  for (int i = 0; i < layers; ++i)
    s.layers.push_back(get_layer(m, "layer" + std::to_string(i)));
  s.object.present = get1(m, "object.present") != 0;
  if (s.object.present) {
    s.object.z = get1(m, "object.z");
    s.object.half_x = get1(m, "object.half_x");
    s.object.half_y = get1(m, "object.half_y");
    s.object.cx0 = get1(m, "object.cx0");
    s.object.cy0 = get1(m, "object.cy0");
    s.object.vx = get1(m, "object.vx");
    s.object.vy = get1(m, "object.vy");
    s.object.texture = get_layer(m, "object.texture");
  }
  for (int i = 0; i < s.frame_count; ++i) {
    std::vector<double> v = get_list(m, "traj" + std::to_string(i));
    UMD_REQUIRE(v.size() == 12, "scene file: bad trajectory entry");
    PoseSE3 c;
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) c.R(r, col) = v[size_t(3 * r + col)];
    for (int r = 0; r < 3; ++r) c.t[r] = v[size_t(9 + r)];
    UMD_REQUIRE(c.valid(), "scene file: trajectory entry is not a rigid pose");
    s.trajectory.push_back(c);
  }
  s.validate();
  return s;
}

// KITTI-style layout ----------------------------------------------------------

std::vector<FrameSample> load_kitti_sequence(const std::string& root,
                                             const std::string& split,
                                             const LoadOptions& opt) {
  fs::path split_path = fs::path(root) / "splits" / (split + ".txt");
  std::ifstream sf(split_path);
  UMD_REQUIRE(sf.good(), "missing split file: " + split_path.string());

  std::vector<FrameSample> samples;
  std::map<std::string, std::vector<PoseSE3>> pose_cache;
  std::string line;
  while (std::getline(sf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string seq;
    int f = -1;
    ls >> seq >> f;
    UMD_REQUIRE(!seq.empty() && f >= 1, "bad split line: " + line);
    fs::path sdir = fs::path(root) / seq;

    std::ifstream cf(sdir / "calib.txt");
    UMD_REQUIRE(cf.good(), "missing calib file: " + (sdir / "calib.txt").string());
    double fx, fy, cx, cy;
    UMD_REQUIRE(bool(cf >> fx >> fy >> cx >> cy),
                "bad calib file: " + (sdir / "calib.txt").string());

    auto img_path = [&](int i) {
      return sdir / "image_02" / "data" / (frame_name(i) + ".png");
    };
    for (int i = f - 1; i <= f + 1; ++i)
      UMD_REQUIRE(fs::exists(img_path(i)),
                  "missing image: " + img_path(i).string());

    Tensor raw[3];
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      try {
        raw[k] = read_png(img_path(f - 1 + k).string());
      } catch (const ContractViolation& e) {
        std::cerr << "warning: skipping frame " << f << " in " << seq << ": "
                  << e.what() << '\n';
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    double sx = double(opt.target_w) / raw[1].dim(1);
    double sy = double(opt.target_h) / raw[1].dim(0);
    FrameSample s;
    s.frame = f;
    s.K = CameraIntrinsics(fx, fy, cx, cy).scaled(sx, sy);
    s.prev = ImageGrid(resize_image(raw[0], opt.target_h, opt.target_w));
    s.cur = ImageGrid(resize_image(raw[1], opt.target_h, opt.target_w));
    s.next = ImageGrid(resize_image(raw[2], opt.target_h, opt.target_w));

    fs::path dpath = sdir / "proj_depth" / (frame_name(f) + ".png");
    if (fs::exists(dpath))
      s.depth = resize_nearest(read_png16(dpath.string(), opt.depth_png_scale),
                               opt.target_h, opt.target_w);

    if (!pose_cache.count(seq) && fs::exists(sdir / "poses.txt")) {
      std::ifstream pf(sdir / "poses.txt");
      std::vector<PoseSE3> poses;
      std::string pl;
      while (std::getline(pf, pl)) {
        if (pl.empty()) continue;
        std::istringstream ps(pl);
        PoseSE3 p;
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) UMD_REQUIRE(bool(ps >> p.R(r, c)),
                                                  "bad pose line: " + pl);
          UMD_REQUIRE(bool(ps >> p.t[r]), "bad pose line: " + pl);
        }
        poses.push_back(p);
      }
      pose_cache[seq] = std::move(poses);
    }
    auto pit = pose_cache.find(seq);
    if (pit != pose_cache.end() && f + 1 < int(pit->second.size())) {
      const auto& poses = pit->second;
      s.T_prev = se3_compose(se3_invert(poses[size_t(f - 1)]), poses[size_t(f)]);
      s.T_next = se3_compose(se3_invert(poses[size_t(f + 1)]), poses[size_t(f)]);
      s.has_pose = true;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void export_kitti_sequence(const SyntheticScene& scene, const std::string& root,
                           const std::string& seq, const std::string& split) {
  scene.validate();
  fs::path sdir = fs::path(root) / seq;
  fs::create_directories(sdir / "image_02" / "data");
  fs::create_directories(sdir / "proj_depth");
  fs::create_directories(fs::path(root) / "splits");

  {
    std::ofstream cf(sdir / "calib.txt");
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n",
                  scene.intrinsics.fx, scene.intrinsics.fy, scene.intrinsics.cx,
                  scene.intrinsics.cy);
    cf << buf;
  }
  {
    std::ofstream pf(sdir / "poses.txt");
    for (const auto& c : scene.trajectory) {
      char buf[64];
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 4; ++col) {
          double v = col < 3 ? c.R(r, col) : c.t[r];
          std::snprintf(buf, sizeof buf, "%.17g", v);
          pf << buf << (r == 2 && col == 3 ? "" : " ");
        }
      pf << '\n';
    }
  }
  for (int f = 0; f < scene.frame_count; ++f)
    write_png((sdir / "image_02" / "data" / (frame_name(f) + ".png")).string(),
              render_image(scene, f));
  std::ofstream spf(fs::path(root) / "splits" / (split + ".txt"));
  for (int f = 1; f + 1 < scene.frame_count; ++f) {
    FrameSample s = render_scene(scene, f);
    write_png16((sdir / "proj_depth" / (frame_name(f) + ".png")).string(),
                s.depth, 256.0);
    spf << seq << ' ' << f << '\n';
  }
}

}  // namespace umd
