#ifndef UMD_NETWORKS_HPP_
#define UMD_NETWORKS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "umd/autodiff.hpp"
#include "umd/camera.hpp"
#include "umd/consistency.hpp"
#include "umd/data.hpp"
#include "umd/pose.hpp"
#include "umd/rng.hpp"
#include "umd/uncertainty.hpp"

namespace umd {

// Shared sizing knobs for the three small networks. Channels are per encoder
// stage 1 and double at each downsampling; four stages at strides 2,2,2,1
// put the deepest features at 1/8 resolution, so inputs must be divisible
// by 8 (2^{scales-1} with scales fixed at 4).
struct NetworkSpec {
  enum class EncoderKind { conv, conv_with_sequence_mixer };

  int scales = 4;
  int base_channels = 8;
  EncoderKind encoder_kind = EncoderKind::conv;
  double d_min = 0.1;   // meters, sigmoid/bin mapping lower end
  double d_max = 100.0; // meters, upper end
  int cost_bins = 16;   // hypothesis count for the student's cost volume
  int n_bins = 8;       // adaptive depth bins in the student head
  int prompt_channels = 4;
  int prompt_h = 8;
  int prompt_w = 24;
  double pose_scale = 0.01; // output scaling on both pose heads

  void validate() const;
};

// Lazily created named parameter leaves. Initial values depend only on
// (seed, name, shape), never on creation order, so two stores built with the
// same seed agree parameter-by-parameter. Registration order is recorded for
// stable reporting and serialization.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  // Returns the named parameter, creating it on first use. init_sigma == 0
  // gives a zero tensor, otherwise i.i.d. normal with that sigma. Asking for
  // an existing name with a different shape is an error.
  ad::Var get(const std::string& name, const Shape& shape, double init_sigma);

  // Overwrites (or creates) the named parameter's values in place, keeping
  // the Var identity so existing graphs see the new values.
  void set(const std::string& name, const Tensor& value);

  bool has(const std::string& name) const { return vars_.count(name) != 0; }
  ad::Var find(const std::string& name) const; // error if absent

  const std::vector<std::string>& names() const { return order_; }
  std::vector<ad::Var> all() const; // registration order
  size_t total_params() const;
  void zero_grad() const;
  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::vector<std::string> order_;
  std::map<std::string, ad::Var> vars_;
};

// Inverse-depth pyramid; scale s lives at (H/2^s, W/2^s), s = 0 finest.
// depth[s] = 1/inv_depth[s], both rank-2 and inside [d_min, d_max] by
// construction (sigmoid mapping or convex combination of bin centers).
struct MultiScaleDepth {
  std::vector<ad::Var> inv_depth;
  std::vector<ad::Var> depth;
};

// Single-frame depth network: 4-stage conv encoder (optionally with a global
// sequence-mixing layer per stage), skip-connected decoder, sigmoid disparity
// head at every scale.
class TeacherNet {
 public:
  TeacherNet(const NetworkSpec& spec, uint64_t seed);

  // img: H x W x C in [0, 1]; H, W divisible by 2^{scales-1}.
  MultiScaleDepth forward(const Tensor& img);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  ParamStore params_;
};

struct StudentOutput {
  MultiScaleDepth depths;          // pre-refinement, from bin probabilities
  std::vector<ad::Var> sigma2;     // per-scale variance, clamped positive
  std::vector<ad::Var> probs;      // per-scale H_s x W_s x n_bins simplex
  CostVolume cost_volume;          // raw matching costs fed to the encoder
  ad::Var bin_widths;              // global softmax simplex, length n_bins
  ad::Var bin_centers;             // cumulative mapping of the widths
  ad::Var depth_pre;               // finest-scale depth before refinement
  ad::Var depth_post;              // after the residual refinement head
  ad::Var depth_fused;             // variance-masked blend of pre/post
  Tensor refine_mask;              // 1 where depth_post was selected
  ad::Var features;                // finest decoder features (embedding source)
};

// Multi-frame depth network. The cost volume between I_t and I_{t-1} is
// resized and concatenated into the encoder at the 1/8-resolution stage; a
// learned prompt tensor is concatenated (with resampling) at the deepest
// decoder stage. Heads predict global bin widths, per-scale bin probabilities
// and variance, and a zero-initialized residual refinement of the finest
// logits, so depth_post == depth_pre at initialization.
class StudentNet {
 public:
  StudentNet(const NetworkSpec& spec, uint64_t seed);

  StudentOutput forward(const Tensor& img_t, const Tensor& img_prev,
                        const PoseSE3& t_prev, const CameraIntrinsics& k);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  ParamStore params_;
};

struct PoseOutput {
  ad::Var axis_angle;   // length 3
  ad::Var translation;  // length 3
  ad::Var rot9;         // rodrigues(axis_angle), row-major
  PoseSE3 value() const;
};

// Exact inverse transform on the same graph: gradients flow back through the
// original prediction. Lets the trainer feed the pose net time-ordered pairs
// (which keeps the regression target consistent across a sequence) and still
// warp in both temporal directions.
PoseOutput invert_pose(const PoseOutput& p);

// Relative pose from a channel-concatenated frame pair. Both heads are scaled
// by pose_scale so the initial output stays near identity.
class PoseNet {
 public:
  PoseNet(const NetworkSpec& spec, uint64_t seed);

  // Pose mapping points of frame a into frame b's camera.
  PoseOutput forward(const Tensor& img_a, const Tensor& img_b);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  NetworkSpec spec_;
  ParamStore params_;
};

// Training-time optical flow source. Oracle mode serves the renderer's
// ground-truth flow plus i.i.d. Gaussian noise; file mode decodes a stored
// field. The call counter exists so inference paths can prove they never
// touched flow.
class FlowProvider {
 public:
  enum class Mode { oracle, file };

  explicit FlowProvider(Mode mode, double noise_sigma = 0.0,
                        uint64_t seed = 0);

  // Oracle mode: sample must carry renderer ground truth (flow_prev).
  Tensor provide(const FrameSample& sample);
  // File mode: decodes the flow file at path.
  Tensor provide(const std::string& path);

  Mode mode() const { return mode_; }
  int calls() const { return calls_; }
  // Draw position of the noise stream, for exact checkpoint restore.
  uint64_t noise_counter() const { return rng_.counter(); }
  void set_noise_counter(uint64_t c) { rng_.set_counter(c); }

 private:
  Mode mode_;
  double noise_sigma_;
  Rng rng_;
  int calls_ = 0;
};

// Binary flow container: magic "UMFL", then height and width as little-endian
// int32, then H*W*2 little-endian float32 (du, dv) row-major. Values pass
// through float, so doubles are quantized on write.
void write_flow_file(const std::string& path, const Tensor& flow);
Tensor read_flow_file(const std::string& path);

} // namespace umd

#endif // UMD_NETWORKS_HPP_
