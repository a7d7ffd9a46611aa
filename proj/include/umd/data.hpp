#ifndef UMD_DATA_HPP_
#define UMD_DATA_HPP_

#include <string>
#include <vector>

#include "umd/camera.hpp"
#include "umd/image.hpp"
#include "umd/pose.hpp"
#include "umd/tensor.hpp"

namespace umd {

// A fronto-parallel textured plane at world depth z. Texture is band-limited:
// base + sum_j amp[j] * sin(freq_x[j]*x + freq_y[j]*y + phase[j] + 1.7*c) for
// channel c, evaluated at the world-space hit point, so every frame observes
// the same surface signal analytically (no resampling error).
struct PlaneLayer {
  double z = 10.0;
  double base = 0.5;
  std::vector<double> amp, freq_x, freq_y, phase;
  bool bounded = false;  // unbounded planes catch every ray
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool flat = false;  // marks deliberately texture-poor surfaces

  double texture(double x, double y, int channel) const;
};

// A textured rectangle at fixed depth whose center translates by (vx, vy)
// world meters per frame. Its texture is anchored to the object.
struct MovingObject {
  bool present = false;
  double z = 2.0;
  double half_x = 0.3, half_y = 0.2;
  double cx0 = 0, cy0 = 0;
  double vx = 0, vy = 0;
  PlaneLayer texture;
};

// World frame = camera frame of the first trajectory pose (identity).
struct SyntheticScene {
  std::string name = "custom";
  int height = 64, width = 192;
  int frame_count = 50;
  uint64_t seed = 0;
  double noise_sigma = 0.0;  // per-pixel iid image noise, applied per frame
  CameraIntrinsics intrinsics{100, 100, 95.5, 31.5};
  std::vector<PlaneLayer> layers;
  MovingObject object;
  std::vector<PoseSE3> trajectory;  // world_from_camera, [0] == identity

  void validate() const;
};

// Presets: "standard" (layered planes + small moving box), "low_texture"
// (flat far plane above textured near surfaces, no object), "moving_box"
// (box covering ~10% of the frame).
SyntheticScene make_scene(const std::string& preset, int frames = 50,
                          uint64_t seed = 0);

struct FrameSample {
  ImageGrid prev, cur, next;  // I_{t-1}, I_t, I_{t+1}
  CameraIntrinsics K{100, 100, 95.5, 31.5};
  Tensor depth;        // H x W, camera-frame z of I_t (empty if unknown)
  PoseSE3 T_prev, T_next;  // target->source relative poses
  bool has_pose = false;
  Tensor flow_prev;    // H x W x 2, GT flow t -> t-1 (empty if unknown)
  Tensor motion_mask;  // H x W, 1 where the moving object is seen at t
  Tensor flat_mask;    // H x W, 1 where the surface is texture-poor
  bool object_in_view = false;
  int frame = 0;
};

// Deterministic given (scene, frame); frame must leave room for t-1 and t+1.
FrameSample render_scene(const SyntheticScene& scene, int frame);

// Key-value text serialization, round-trip exact to printed precision.
void save_scene(const SyntheticScene& scene, const std::string& path);
SyntheticScene load_scene(const std::string& path);

// Desk-scale mirror of the KITTI raw layout:
//   root/<seq>/calib.txt                "fx fy cx cy"
//   root/<seq>/image_02/data/NNNNNNNNNN.png
//   root/<seq>/proj_depth/NNNNNNNNNN.png   optional, 16-bit, depth*256
//   root/<seq>/poses.txt                   optional, 3x4 row-major per line
//   root/splits/<split>.txt                lines "<seq> <frame>"
struct LoadOptions {
  int target_h = 192, target_w = 640;
  double depth_png_scale = 256.0;
};
std::vector<FrameSample> load_kitti_sequence(const std::string& root,
                                             const std::string& split,
                                             const LoadOptions& opt);

// Renders [1, count-2] of a scene into the layout above (plus a split file
// listing every exported center frame).
void export_kitti_sequence(const SyntheticScene& scene, const std::string& root,
                           const std::string& seq, const std::string& split);

}  // namespace umd

#endif  // UMD_DATA_HPP_
