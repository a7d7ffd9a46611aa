#include "umd/networks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "umd/common.hpp"
#include "umd/rng.hpp"

namespace umd {

void NetworkSpec::validate() const {
  UMD_REQUIRE(scales == 4, "NetworkSpec: encoder/decoder layout is fixed at 4 scales");
  UMD_REQUIRE(base_channels >= 1 && (base_channels & (base_channels - 1)) == 0,
              "NetworkSpec: base_channels must be a power of two");
  UMD_REQUIRE(d_min > 0 && d_max > d_min, "NetworkSpec: need 0 < d_min < d_max");
  UMD_REQUIRE(cost_bins >= 2, "NetworkSpec: cost_bins must be >= 2");
  UMD_REQUIRE(n_bins >= 2, "NetworkSpec: n_bins must be >= 2");
  UMD_REQUIRE(prompt_channels >= 0, "NetworkSpec: prompt_channels must be >= 0");
  if (prompt_channels > 0)
    UMD_REQUIRE(prompt_h >= 1 && prompt_w >= 1, "NetworkSpec: prompt size must be positive");
  UMD_REQUIRE(pose_scale > 0, "NetworkSpec: pose_scale must be positive");
}

// ParamStore ------------------------------------------------------------------

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

ad::Var ParamStore::get(const std::string& name, const Shape& shape, double init_sigma) {
  auto it = vars_.find(name);
  if (it != vars_.end()) {
    UMD_REQUIRE(it->second->val.shape() == shape,
                "ParamStore: shape mismatch for existing parameter " + name);
    return it->second;
  }
  // Stream id comes from the name, so init is order-independent.
  Rng r(seed_, fnv1a(name));
  Tensor t = init_sigma == 0.0 ? Tensor(shape) : r.normal_tensor(shape, init_sigma);
  ad::Var v = ad::leaf(std::move(t), true);
  vars_.emplace(name, v);
  order_.push_back(name);
  return v;
}

void ParamStore::set(const std::string& name, const Tensor& value) {
  auto it = vars_.find(name);
  if (it != vars_.end()) {
    UMD_REQUIRE(it->second->val.shape() == value.shape(),
                "ParamStore: shape mismatch assigning parameter " + name);
    it->second->val = value;
    return;
  }
  vars_.emplace(name, ad::leaf(value, true));
  order_.push_back(name);
}

ad::Var ParamStore::find(const std::string& name) const {
  auto it = vars_.find(name);
  UMD_REQUIRE(it != vars_.end(), "ParamStore: unknown parameter " + name);
  return it->second;
}

std::vector<ad::Var> ParamStore::all() const {
  std::vector<ad::Var> out;
  out.reserve(order_.size());
  for (const auto& n : order_) out.push_back(vars_.at(n));
  return out;
}

size_t ParamStore::total_params() const {
  size_t n = 0;
  for (const auto& kv : vars_) n += kv.second->val.numel();
  return n;
}

void ParamStore::zero_grad() const { ad::zero_grad(all()); }

// Shared building blocks ------------------------------------------------------

namespace {

ad::Var conv_block(ParamStore& ps, const std::string& name, const ad::Var& x,
                   int out_ch, int k, int stride, bool act) {
  int in_ch = x->val.shape().back();
  double sig = std::sqrt(2.0 / double(k * k * in_ch));
  ad::Var w = ps.get(name + ".w", {k, k, in_ch, out_ch}, sig);
  ad::Var b = ps.get(name + ".b", {out_ch}, 0.0);
  ad::Var y = ad::conv2d(x, w, b, stride);
  return act ? ad::relu(y) : y;
}

// Cheap global mixing stage: each pixel sees a learned projection of the
// spatial mean, added residually.
ad::Var seq_mix(ParamStore& ps, const std::string& name, const ad::Var& x) {
  const Shape& s = x->val.shape();
  int c = s[2];
  ad::Var w = ps.get(name + ".w", {c, c}, std::sqrt(1.0 / double(c)));
  ad::Var b = ps.get(name + ".b", {c}, 0.0);
  ad::Var g = ad::matvec(w, ad::global_mean_hw(x), b);
  return ad::add(x, ad::broadcast_hw(g, s[0], s[1]));
}

struct EncoderOut {
  ad::Var e1, e2, e3, e4;
};

// Four stages at strides 2,2,2,1. inject3, when present, is concatenated to
// the stage-2 output before the 1/8-resolution conv (cost-volume entry point).
EncoderOut run_encoder(ParamStore& ps, const NetworkSpec& spec, const ad::Var& x,
                       const ad::Var& inject3) {
  int c = spec.base_channels;
  bool mix = spec.encoder_kind == NetworkSpec::EncoderKind::conv_with_sequence_mixer;
  EncoderOut e;
  e.e1 = conv_block(ps, "enc1", x, c, 3, 2, true);
  if (mix) e.e1 = seq_mix(ps, "mix1", e.e1);
  e.e2 = conv_block(ps, "enc2", e.e1, 2 * c, 3, 2, true);
  if (mix) e.e2 = seq_mix(ps, "mix2", e.e2);
  ad::Var in3 = inject3 ? ad::concat_lastdim({e.e2, inject3}) : e.e2;
  e.e3 = conv_block(ps, "enc3", in3, 4 * c, 3, 2, true);
  if (mix) e.e3 = seq_mix(ps, "mix3", e.e3);
  e.e4 = conv_block(ps, "enc4", e.e3, 4 * c, 3, 1, true);
  if (mix) e.e4 = seq_mix(ps, "mix4", e.e4);
  return e;
}

// Skip-connected decoder; returns features per scale, index 0 finest (full
// resolution). top is the deepest input (e4, possibly with a prompt attached).
std::vector<ad::Var> run_decoder(ParamStore& ps, const NetworkSpec& spec,
                                 const EncoderOut& e, const ad::Var& top, int h, int w) {
  int c = spec.base_channels;
  ad::Var d3 = conv_block(ps, "dec3", ad::concat_lastdim({top, e.e3}), 4 * c, 3, 1, true);
  const Shape& s2 = e.e2->val.shape();
  ad::Var d2 = conv_block(
      ps, "dec2", ad::concat_lastdim({ad::resize_bilinear(d3, s2[0], s2[1]), e.e2}),
      2 * c, 3, 1, true);
  const Shape& s1 = e.e1->val.shape();
  ad::Var d1 = conv_block(
      ps, "dec1", ad::concat_lastdim({ad::resize_bilinear(d2, s1[0], s1[1]), e.e1}),
      c, 3, 1, true);
  ad::Var d0 = conv_block(ps, "dec0", ad::resize_bilinear(d1, h, w), c, 3, 1, true);
  return {d0, d1, d2, d3};
}

void check_image(const Tensor& img, int div, const char* who) {
  const Shape& s = img.shape();
  UMD_REQUIRE(s.size() == 3 && s[2] >= 1, std::string(who) + ": image must be H x W x C");
  UMD_REQUIRE(s[0] % div == 0 && s[1] % div == 0,
              std::string(who) + ": resolution not divisible by 2^(S-1)");
  for (size_t i = 0; i < img.numel(); ++i)
    UMD_REQUIRE(std::isfinite(img[i]) && img[i] >= 0.0 && img[i] <= 1.0,
                std::string(who) + ": image values must lie in [0, 1]");
}

ad::Var conv1x1(ParamStore& ps, const std::string& name, const ad::Var& x, int out_ch) {
  return conv_block(ps, name, x, out_ch, 1, 1, false);
}

}  // namespace

// TeacherNet ------------------------------------------------------------------

TeacherNet::TeacherNet(const NetworkSpec& spec, uint64_t seed)
    : spec_(spec), params_(seed) {
  spec_.validate();
  // A zero-bias sigmoid head starts at disparity 0.5, i.e. depth ~2*d_min,
  // hugging the near rail where saturation can trap it. Bias the heads so the
  // initial prediction sits in the logit-linear middle of the range instead
  // (disparity ~0.12, about 8*d_min when d_max >> d_min).
  for (int s = 0; s < spec_.scales; ++s)
    params_.set("head" + std::to_string(s) + ".b", Tensor({1}, -2.0));
}

MultiScaleDepth TeacherNet::forward(const Tensor& img) {
  check_image(img, 1 << (spec_.scales - 1), "teacher_forward");
  int h = img.shape()[0], w = img.shape()[1];
  ad::Var x = ad::constant(img);
  EncoderOut e = run_encoder(params_, spec_, x, {});
  std::vector<ad::Var> feats = run_decoder(params_, spec_, e, e.e4, h, w);

  double inv_lo = 1.0 / spec_.d_max, inv_hi = 1.0 / spec_.d_min;
  MultiScaleDepth out;
  for (int s = 0; s < spec_.scales; ++s) {
    ad::Var logit = conv_block(params_, "head" + std::to_string(s), feats[s], 1, 3, 1, false);
    const Shape& fs = logit->val.shape();
    ad::Var disp = ad::sigmoid(ad::reshape(logit, {fs[0], fs[1]}));
    ad::Var inv = ad::add(ad::constant(inv_lo),
                          ad::mul(ad::constant(inv_hi - inv_lo), disp));
    out.inv_depth.push_back(inv);
    out.depth.push_back(ad::div(ad::constant(1.0), inv));
  }
  return out;
}

// StudentNet ------------------------------------------------------------------

StudentNet::StudentNet(const NetworkSpec& spec, uint64_t seed)
    : spec_(spec), params_(seed) {
  spec_.validate();
}

StudentOutput StudentNet::forward(const Tensor& img_t, const Tensor& img_prev,
                                  const PoseSE3& t_prev, const CameraIntrinsics& k) {
  check_image(img_t, 1 << (spec_.scales - 1), "student_forward");
  UMD_REQUIRE(img_prev.shape() == img_t.shape(),
              "student_forward: frame pair must share a resolution");
  UMD_REQUIRE(t_prev.valid(), "student_forward: pose must be a rigid transform");
  int h = img_t.shape()[0], w = img_t.shape()[1];

  StudentOutput out;
  out.cost_volume = build_cost_volume(
      img_t, img_prev, t_prev, k,
      depth_hypotheses(spec_.d_min, spec_.d_max, spec_.cost_bins));

  ad::Var x = ad::constant(img_t);
  ad::Var cvr = ad::resize_bilinear(ad::constant(out.cost_volume.costs), h / 4, w / 4);
  EncoderOut e = run_encoder(params_, spec_, x, cvr);

  ad::Var top = e.e4;
  if (spec_.prompt_channels > 0) {
    ad::Var prompt = params_.get(
        "prompt", {spec_.prompt_h, spec_.prompt_w, spec_.prompt_channels}, 0.05);
    top = ad::prompt_concat(top, prompt, /*resample=*/true);
  }
  std::vector<ad::Var> feats = run_decoder(params_, spec_, e, top, h, w);

  int nb = spec_.n_bins;
  out.bin_widths = ad::softmax_lastdim(params_.get("bin_logits", {nb}, 0.0));
  BinConfig bc;
  bc.n = nb;
  bc.d_min = spec_.d_min;
  bc.d_max = spec_.d_max;
  out.bin_centers = ad::bin_centers(out.bin_widths, bc);

  ad::Var logits0;
  for (int s = 0; s < spec_.scales; ++s) {
    ad::Var logits = conv1x1(params_, "bins" + std::to_string(s), feats[s], nb);
    if (s == 0) logits0 = logits;
    ad::Var probs = ad::softmax_lastdim(logits);
    ad::Var depth = ad::depth_from_probs(probs, out.bin_centers);
    const Shape& fs = feats[s]->val.shape();
    ad::Var logsig = ad::reshape(conv1x1(params_, "sig" + std::to_string(s), feats[s], 1),
                                 {fs[0], fs[1]});
    out.probs.push_back(probs);
    out.sigma2.push_back(ad::clamp(ad::exp(logsig), kSigma2Min, kSigma2Max));
    out.depths.depth.push_back(depth);
    out.depths.inv_depth.push_back(ad::div(ad::constant(1.0), depth));
  }

  // Residual refinement of the finest logits. The head starts at exactly
  // zero, so depth_post == depth_pre until training moves it.
  ad::Var rin = ad::concat_lastdim(
      {logits0, ad::reshape(out.sigma2[0], {h, w, 1}), feats[0]});
  ad::Var rw = params_.get("refine.w", {1, 1, rin->val.shape()[2], nb}, 0.0);
  ad::Var rb = params_.get("refine.b", {nb}, 0.0);
  ad::Var logits_post = ad::add(logits0, ad::conv2d(rin, rw, rb, 1));
  out.depth_pre = out.depths.depth[0];
  out.depth_post = ad::depth_from_probs(ad::softmax_lastdim(logits_post), out.bin_centers);

  UncertaintyMask um = uncertainty_mask(out.sigma2[0]->val, 0.8);
  out.refine_mask = um.mask;
  out.depth_fused = ad::fuse_depth(out.depth_pre, out.depth_post, um.mask);
  out.features = feats[0];
  return out;
}

// PoseNet ---------------------------------------------------------------------

PoseNet::PoseNet(const NetworkSpec& spec, uint64_t seed)
    : spec_(spec), params_(seed) {
  spec_.validate();
}

PoseOutput PoseNet::forward(const Tensor& img_a, const Tensor& img_b) {
  const Shape& sa = img_a.shape();
  UMD_REQUIRE(sa.size() == 3, "pose_forward: image must be H x W x C");
  UMD_REQUIRE(img_b.shape() == sa, "pose_forward: frame pair must share a resolution");
  int h = sa[0], w = sa[1], c = sa[2];

  Tensor pair({h, w, 2 * c});
  for (size_t i = 0; i < size_t(h) * w; ++i) {
    for (int k = 0; k < c; ++k) {
      pair[i * 2 * c + k] = img_a[i * c + k];
      pair[i * 2 * c + c + k] = img_b[i * c + k];
    }
  }

  int bc = spec_.base_channels;
  ad::Var p1 = conv_block(params_, "p1", ad::constant(std::move(pair)), bc, 3, 2, true);
  ad::Var p2 = conv_block(params_, "p2", p1, 2 * bc, 3, 2, true);
  ad::Var p3 = conv_block(params_, "p3", p2, 2 * bc, 3, 2, true);
  ad::Var g = ad::global_mean_hw(p3);

  double sig = std::sqrt(1.0 / double(2 * bc));
  // Rotation keeps a fixed conservative scale: if the rotation head can move
  // as fast as the translation head, yaw plus depth-at-infinity explains the
  // mean flow and the solver parks in that degenerate basin. Translation
  // magnitude is pose_scale times a learnable log-scale, so once the
  // direction is right the baseline can grow exponentially instead of one
  // Adam step at a time.
  ad::Var scale = ad::constant(0.01);
  ad::Var tscale = ad::mul(
      ad::exp(ad::index(params_.get("trans.logscale", {1}, 0.0), 0)),
      ad::constant(spec_.pose_scale));
  PoseOutput out;
  out.axis_angle = ad::mul(
      ad::matvec(params_.get("rot.w", {2 * bc, 3}, sig), g, params_.get("rot.b", {3}, 0.0)),
      scale);
  out.translation = ad::mul(
      ad::matvec(params_.get("trans.w", {2 * bc, 3}, sig), g, params_.get("trans.b", {3}, 0.0)),
      tscale);
  out.rot9 = ad::rodrigues(out.axis_angle);
  return out;
}

PoseSE3 PoseOutput::value() const {
  PoseSE3 T;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) T.R(r, c) = rot9->val[size_t(r) * 3 + c];
  for (int i = 0; i < 3; ++i) T.t(i) = translation->val[size_t(i)];
  UMD_REQUIRE(T.valid(), "PoseOutput: rotation drifted off SO(3)");
  return T;
}

PoseOutput invert_pose(const PoseOutput& p) {
  PoseOutput out;
  out.axis_angle = ad::neg(p.axis_angle);
  out.rot9 = ad::rodrigues(out.axis_angle);
  // (R, t)^-1 = (R^T, -R^T t); matvec contracts over rows, so feeding the
  // forward rotation matrix yields R^T t directly.
  out.translation = ad::neg(ad::matvec(ad::reshape(p.rot9, {3, 3}), p.translation,
                                       ad::constant(Tensor({3}))));
  return out;
}

// FlowProvider ----------------------------------------------------------------

FlowProvider::FlowProvider(Mode mode, double noise_sigma, uint64_t seed)
    : mode_(mode), noise_sigma_(noise_sigma), rng_(seed, 0xF10Cull) {
  UMD_REQUIRE(noise_sigma >= 0, "FlowProvider: noise_sigma must be >= 0");
}

Tensor FlowProvider::provide(const FrameSample& sample) {
  UMD_REQUIRE(mode_ == Mode::oracle, "flow_provide: sample input requires oracle mode");
  UMD_REQUIRE(!sample.flow_prev.empty(),
              "flow_provide: sample carries no ground-truth flow (oracle mode needs "
              "synthetic data)");
  ++calls_;
  Tensor out = sample.flow_prev;
  if (noise_sigma_ > 0)
    for (size_t i = 0; i < out.numel(); ++i) out[i] += noise_sigma_ * rng_.normal();
  return out;
}

Tensor FlowProvider::provide(const std::string& path) {
  UMD_REQUIRE(mode_ == Mode::file, "flow_provide: path input requires file mode");
  ++calls_;
  return read_flow_file(path);
}

// Flow files ------------------------------------------------------------------

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  f.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void write_flow_file(const std::string& path, const Tensor& flow) {
  const Shape& s = flow.shape();
  UMD_REQUIRE(s.size() == 3 && s[2] == 2, "write_flow_file: flow must be H x W x 2");
  std::ofstream f(path, std::ios::binary);
  UMD_REQUIRE(f.good(), "write_flow_file: cannot open " + path);
  f.write("UMFL", 4);
  put_u32(f, uint32_t(s[0]));
  put_u32(f, uint32_t(s[1]));
  for (size_t i = 0; i < flow.numel(); ++i) {
    float fv = float(flow[i]);
    uint32_t u;
    std::memcpy(&u, &fv, 4);
    put_u32(f, u);
  }
  f.flush();
  UMD_REQUIRE(f.good(), "write_flow_file: write failed for " + path);
}

Tensor read_flow_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  UMD_REQUIRE(f.good(), "read_flow_file: missing flow file " + path);
  char magic[4];
  f.read(magic, 4);
  UMD_REQUIRE(f.good() && std::memcmp(magic, "UMFL", 4) == 0,
              "read_flow_file: bad magic in " + path);
  int32_t h = int32_t(get_u32(f)), w = int32_t(get_u32(f));
  UMD_REQUIRE(f.good() && h > 0 && w > 0, "read_flow_file: bad dimensions in " + path);
  Tensor out({h, w, 2});
  for (size_t i = 0; i < out.numel(); ++i) {
    uint32_t u = get_u32(f);
    UMD_REQUIRE(f.good(), "read_flow_file: truncated data in " + path);
    float fv;
    std::memcpy(&fv, &u, 4);
    out[i] = double(fv);
  }
  return out;
}

}  // namespace umd
