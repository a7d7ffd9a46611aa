#include "umd/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "umd/common.hpp"
#include "umd/consistency.hpp"
#include "umd/geometry.hpp"

namespace umd {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    UMD_REQUIRE(used == v.size(), "trailing junk");
    return d;
  } catch (const ContractViolation&) {
    throw;
  } catch (...) {
    throw ContractViolation("config: bad numeric value for " + key + ": " + v);
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    long long i = std::stoll(v, &used);
    UMD_REQUIRE(used == v.size(), "trailing junk");
    return i;
  } catch (const ContractViolation&) {
    throw;
  } catch (...) {
    throw ContractViolation("config: bad integer value for " + key + ": " + v);
  }
}

}  // namespace

// TrainConfig -----------------------------------------------------------------

void TrainConfig::validate() const {
  UMD_REQUIRE(lambda_u >= 0 && lambda_tri >= 0, "config: loss weights must be >= 0");
  UMD_REQUIRE(lambda_sm > 0, "config: lambda_sm must be positive");
  UMD_REQUIRE(scales == 4, "config: the network layout fixes S = 4");
  UMD_REQUIRE(lr >= 0, "config: lr must be >= 0");
  UMD_REQUIRE(lr_drop_epochs >= 0, "config: lr_drop_epochs must be >= 0");
  UMD_REQUIRE(batch >= 1, "config: batch must be >= 1");
  UMD_REQUIRE(epochs >= 1, "config: epochs must be >= 1");
  UMD_REQUIRE(frames >= 3, "config: need at least 3 frames");
  UMD_REQUIRE(height >= 8 && width >= 8 && height % 8 == 0 && width % 8 == 0,
              "config: resolution must be a positive multiple of 8");
  UMD_REQUIRE(flow_noise >= 0, "config: flow_noise must be >= 0");
  UMD_REQUIRE(encoder == "conv" || encoder == "mixer",
              "config: encoder must be conv or mixer");
  network_spec().validate();
}

NetworkSpec TrainConfig::network_spec() const {
  NetworkSpec s;
  s.scales = scales;
  s.base_channels = base_channels;
  s.encoder_kind = encoder == "mixer" ? NetworkSpec::EncoderKind::conv_with_sequence_mixer
                                      : NetworkSpec::EncoderKind::conv;
  s.d_min = d_min;
  s.d_max = d_max;
  s.cost_bins = cost_bins;
  s.n_bins = n_bins;
  return s;
}

std::string serialize_train_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "lambda_u = " << fmt_double(c.lambda_u) << "\n";
  o << "lambda_tri = " << fmt_double(c.lambda_tri) << "\n";
  o << "lambda_sm = " << fmt_double(c.lambda_sm) << "\n";
  o << "scales = " << c.scales << "\n";
  o << "lr = " << fmt_double(c.lr) << "\n";
  o << "lr_drop_epochs = " << c.lr_drop_epochs << "\n";
  o << "batch = " << c.batch << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "seed = " << c.seed << "\n";
  o << "scene = " << c.scene << "\n";
  o << "frames = " << c.frames << "\n";
  o << "height = " << c.height << "\n";
  o << "width = " << c.width << "\n";
  o << "flow_noise = " << fmt_double(c.flow_noise) << "\n";
  o << "ablate_motion = " << (c.ablate_motion ? 1 : 0) << "\n";
  o << "base_channels = " << c.base_channels << "\n";
  o << "n_bins = " << c.n_bins << "\n";
  o << "cost_bins = " << c.cost_bins << "\n";
  o << "d_min = " << fmt_double(c.d_min) << "\n";
  o << "d_max = " << fmt_double(c.d_max) << "\n";
  o << "encoder = " << c.encoder << "\n";
  return o.str();
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    UMD_REQUIRE(eq != std::string::npos, "config: expected key = value, got: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    UMD_REQUIRE(!key.empty() && !val.empty(), "config: empty key or value in: " + line);

    if (key == "lambda_u") c.lambda_u = parse_double(key, val);
    else if (key == "lambda_tri") c.lambda_tri = parse_double(key, val);
    else if (key == "lambda_sm") c.lambda_sm = parse_double(key, val);
    else if (key == "scales") c.scales = int(parse_int(key, val));
    else if (key == "lr") c.lr = parse_double(key, val);
    else if (key == "lr_drop_epochs") c.lr_drop_epochs = int(parse_int(key, val));
    else if (key == "batch") c.batch = int(parse_int(key, val));
    else if (key == "epochs") c.epochs = int(parse_int(key, val));
    else if (key == "seed") c.seed = uint64_t(parse_int(key, val));
    else if (key == "scene") c.scene = val;
    else if (key == "frames") c.frames = int(parse_int(key, val));
    else if (key == "height") c.height = int(parse_int(key, val));
    else if (key == "width") c.width = int(parse_int(key, val));
    else if (key == "flow_noise") c.flow_noise = parse_double(key, val);
    else if (key == "ablate_motion") c.ablate_motion = parse_int(key, val) != 0;
    else if (key == "base_channels") c.base_channels = int(parse_int(key, val));
    else if (key == "n_bins") c.n_bins = int(parse_int(key, val));
    else if (key == "cost_bins") c.cost_bins = int(parse_int(key, val));
    else if (key == "d_min") c.d_min = parse_double(key, val);
    else if (key == "d_max") c.d_max = parse_double(key, val);
    else if (key == "encoder") c.encoder = val;
    else
      throw ContractViolation("config: unknown key " + key);
  }
  c.validate();
  return c;
}

uint64_t config_hash(const TrainConfig& cfg) { return fnv1a(serialize_train_config(cfg)); }

// total_loss ------------------------------------------------------------------

ad::Var total_loss(const std::vector<ScaleLosses>& per_scale, const TrainConfig& cfg) {
  UMD_REQUIRE(int(per_scale.size()) == cfg.scales,
              "total_loss: expected exactly S per-scale tuples");
  ad::Var sum = ad::constant(0.0);
  for (const ScaleLosses& t : per_scale) {
    UMD_REQUIRE(t.self && t.u && t.tri, "total_loss: missing term");
    UMD_REQUIRE(t.self->val.numel() == 1 && t.u->val.numel() == 1 && t.tri->val.numel() == 1,
                "total_loss: terms must be scalars");
    ad::Var term = ad::add(t.self, ad::mul(ad::constant(cfg.lambda_u), t.u));
    term = ad::add(term, ad::mul(ad::constant(cfg.lambda_tri), t.tri));
    sum = ad::add(sum, term);
  }
  return ad::mul(sum, ad::constant(1.0 / double(cfg.scales)));
}

// Depth metrics ---------------------------------------------------------------

namespace {

double median_of(std::vector<double> v) {
  size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
  return 0.5 * (hi + v[mid - 1]);
}

}  // namespace

DepthMetrics evaluate_depth(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt,
                            const DepthEvalOptions& opt) {
  UMD_REQUIRE(!pred.empty(), "evaluate_depth: empty streams");
  UMD_REQUIRE(pred.size() == gt.size(), "evaluate_depth: stream lengths differ");
  UMD_REQUIRE(opt.include.empty() || opt.include.size() == pred.size(),
              "evaluate_depth: include-mask stream length differs");
  UMD_REQUIRE(opt.min_depth > 0 && opt.max_depth > opt.min_depth,
              "evaluate_depth: need 0 < min_depth < max_depth");

  DepthMetrics acc;
  for (size_t f = 0; f < pred.size(); ++f) {
    UMD_REQUIRE(pred[f].shape() == gt[f].shape(), "evaluate_depth: frame shape mismatch");
    std::vector<double> ps, gs;
    for (size_t i = 0; i < gt[f].numel(); ++i) {
      if (gt[f][i] <= opt.min_depth || gt[f][i] > opt.max_depth) continue;
      if (!opt.include.empty() && opt.include[f][i] <= 0.5) continue;
      ps.push_back(pred[f][i]);
      gs.push_back(gt[f][i]);
    }
    UMD_REQUIRE(!ps.empty(),
                "evaluate_depth: no valid overlap in frame " + std::to_string(f));
    double scale = opt.median_scaling ? median_of(gs) / median_of(ps) : 1.0;

    DepthMetrics m;
    for (size_t i = 0; i < ps.size(); ++i) {
      double p = std::clamp(ps[i] * scale, opt.min_depth, opt.max_depth);
      double g = gs[i];
      m.abs_rel += std::fabs(p - g) / g;
      m.sq_rel += (p - g) * (p - g) / g;
      m.rmse += (p - g) * (p - g);
      double dl = std::log(p) - std::log(g);
      m.rmse_log += dl * dl;
      double ratio = std::max(p / g, g / p);
      m.a1 += ratio < 1.25;
      m.a2 += ratio < 1.25 * 1.25;
      m.a3 += ratio < 1.25 * 1.25 * 1.25;
    }
    double n = double(ps.size());
    acc.abs_rel += m.abs_rel / n;
    acc.sq_rel += m.sq_rel / n;
    acc.rmse += std::sqrt(m.rmse / n);
    acc.rmse_log += std::sqrt(m.rmse_log / n);
    acc.a1 += m.a1 / n;
    acc.a2 += m.a2 / n;
    acc.a3 += m.a3 / n;
  }
  double nf = double(pred.size());
  acc.abs_rel /= nf;
  acc.sq_rel /= nf;
  acc.rmse /= nf;
  acc.rmse_log /= nf;
  acc.a1 /= nf;
  acc.a2 /= nf;
  acc.a3 /= nf;
  return acc;
}

// CSV -------------------------------------------------------------------------

std::string loss_csv_header(const TrainConfig& cfg) {
  std::string h = "step,lr,teacher";
  for (int s = 0; s < cfg.scales; ++s) {
    h += ",self_s" + std::to_string(s);
    h += ",u_s" + std::to_string(s);
    h += ",tri_s" + std::to_string(s);
  }
  h += ",total,grand,mask_frac,flow_mask_frac,sigma_clamped";
  return h;
}

std::string loss_csv_row(const StepReport& r) {
  std::ostringstream o;
  o << r.step << ',' << fmt_double(r.lr) << ',' << fmt_double(r.teacher);
  for (size_t s = 0; s < r.self_s.size(); ++s)
    o << ',' << fmt_double(r.self_s[s]) << ',' << fmt_double(r.u_s[s]) << ','
      << fmt_double(r.tri_s[s]);
  o << ',' << fmt_double(r.total) << ',' << fmt_double(r.grand) << ','
    << fmt_double(r.mask_fraction) << ',' << fmt_double(r.flow_mask_fraction) << ','
    << r.sigma_clamped;
  return o.str();
}

// Trainer ---------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      net_spec_((cfg.validate(), cfg.network_spec())),
      teacher_(net_spec_, cfg.seed * 4u + 1),
      student_(net_spec_, cfg.seed * 4u + 2),
      pose_(net_spec_, cfg.seed * 4u + 3),
      flow_(FlowProvider::Mode::oracle, cfg.flow_noise, cfg.seed),
      order_rng_(cfg.seed, 0x0bdeull) {
  SyntheticScene sc = make_scene(cfg_.scene, cfg_.frames, cfg_.seed);
  if (sc.height != cfg_.height || sc.width != cfg_.width) {
    double kx = double(cfg_.width) / sc.width, ky = double(cfg_.height) / sc.height;
    sc.intrinsics.fx *= kx;
    sc.intrinsics.cx = (sc.intrinsics.cx + 0.5) * kx - 0.5;
    sc.intrinsics.fy *= ky;
    sc.intrinsics.cy = (sc.intrinsics.cy + 0.5) * ky - 0.5;
    sc.height = cfg_.height;
    sc.width = cfg_.width;
  }
  data_.reserve(size_t(cfg_.frames - 2));
  for (int f = 1; f + 1 < cfg_.frames; ++f) data_.push_back(render_scene(sc, f));
}

int Trainer::steps_per_epoch() const {
  return std::max<int>(1, (int(data_.size()) + cfg_.batch - 1) / cfg_.batch);
}

double Trainer::current_lr() const {
  int epoch = step_ / steps_per_epoch();
  bool dropped = epoch >= cfg_.epochs - cfg_.lr_drop_epochs;
  return dropped ? cfg_.lr / 10.0 : cfg_.lr;
}

struct Trainer::SampleTerms {
  ad::Var teacher;
  std::vector<ScaleLosses> scales;
  ad::Var cons_sum;
  int clamped = 0;
  double mask_fraction = 0, flow_fraction = 0;
};

Trainer::SampleTerms Trainer::build_losses(const FrameSample& f) {
  const int h = cfg_.height, w = cfg_.width;
  PhotometricConfig pcfg;
  ad::Var cur = ad::constant(f.cur.data);
  ad::Var prev = ad::constant(f.prev.data);
  ad::Var next = ad::constant(f.next.data);

  // The pose net always sees time-ordered pairs; the backward warp uses the
  // graph-level inverse. Ordered pairs mean both calls regress the same
  // motion sign under a persistent camera velocity, which is what makes the
  // from-scratch bootstrap stable (an unordered pair forces the net to read
  // direction from the images before it has learned to see, and its best
  // blind fit is zero motion).
  PoseOutput pp = invert_pose(pose_.forward(f.prev.data, f.cur.data));
  PoseOutput pn = pose_.forward(f.cur.data, f.next.data);

  auto to_full = [&](const ad::Var& m) {
    const Shape& s = m->val.shape();
    if (s[0] == h && s[1] == w) return m;
    return ad::reshape(ad::resize_bilinear(ad::reshape(m, {s[0], s[1], 1}), h, w), {h, w});
  };
  auto photo_min = [&](const ad::Var& depth_full) {
    ad::VarReproject rp = ad::reproject(depth_full, pp.rot9, pp.translation, f.K);
    ad::VarReproject rn = ad::reproject(depth_full, pn.rot9, pn.translation, f.K);
    ad::Var ep = ad::photometric_error(ad::synthesize_view(prev, rp), cur, pcfg);
    ad::Var en = ad::photometric_error(ad::synthesize_view(next, rn), cur, pcfg);
    return ad::min_reprojection({ep, en}, {rp.valid, rn.valid});
  };

  SampleTerms st;

  // Teacher: plain photometric + smoothness at every scale, no masks. Its
  // depth feeds the student's masks and consistency target below.
  MultiScaleDepth td = teacher_.forward(f.cur.data);
  ad::Var t_loss = ad::constant(0.0);
  for (int s = 0; s < cfg_.scales; ++s) {
    ad::Var d_full = to_full(td.depth[s]);
    ad::MinReprojection mr = photo_min(d_full);
    ad::Var sm = ad::smoothness_loss(to_full(td.inv_depth[s]), f.cur.data);
    t_loss = ad::add(t_loss, ad::add(ad::mean(mr.loss),
                                     ad::mul(ad::constant(cfg_.lambda_sm), sm)));
  }
  st.teacher = ad::mul(t_loss, ad::constant(1.0 / double(cfg_.scales)));

  StudentOutput so = student_.forward(f.cur.data, f.prev.data, pp.value(), f.K);

  // Masks, computed once at the finest scale from values (no gradients).
  Tensor d_cv = argmin_depth(so.cost_volume);
  Tensor m_union = inconsistency_mask(d_cv, td.depth[0]->val);
  Tensor m_flow({h, w});
  if (!cfg_.ablate_motion) {
    Tensor flow = flow_.provide(f);
    Tensor rigid = rigid_flow(so.depths.depth[0]->val, pp.value(), f.K);
    FlowMaskConfig fm;
    m_flow = flow_difference_mask(flow, rigid, fm).mask;
    for (size_t i = 0; i < m_union.numel(); ++i)
      m_union[i] = std::max(m_union[i], m_flow[i]);
  }
  for (size_t i = 0; i < m_union.numel(); ++i) {
    st.mask_fraction += m_union[i];
    st.flow_fraction += m_flow[i];
  }
  st.mask_fraction /= double(m_union.numel());
  st.flow_fraction /= double(m_flow.numel());

  SelfLossWeights sw;
  sw.lambda_sm = cfg_.lambda_sm;
  TripletConfig tc;
  st.cons_sum = ad::constant(0.0);
  for (int s = 0; s < cfg_.scales; ++s) {
    // The finest scale supervises the fused output (the network's final
    // depth); coarser scales supervise their own bins decoding.
    ad::Var d_full = to_full(s == 0 ? so.depth_fused : so.depths.depth[s]);
    ad::Var inv_full = ad::div(ad::constant(1.0), d_full);
    ad::MinReprojection mr = photo_min(d_full);
    ad::Var l_cons = ad::consistency_loss(d_full, to_full(td.depth[s]), m_union);
    ad::Var l_sm = ad::smoothness_loss(inv_full, f.cur.data);
    ad::Var l_self = ad::self_supervised_loss(mr.loss, l_cons, l_sm, m_union, sw);

    ad::UncertaintyLoss ul = ad::uncertainty_loss(mr.loss, to_full(so.sigma2[s]));
    st.clamped += ul.clamped;

    ad::Var l_tri = (s == 0 && !cfg_.ablate_motion)
                        ? ad::isolated_triplet_loss(so.features, m_flow, tc)
                        : ad::constant(0.0);
    st.scales.push_back({l_self, ul.loss, l_tri});
    st.cons_sum = ad::add(st.cons_sum, l_cons);
  }
  return st;
}

StepReport Trainer::step() {
  StepReport r;
  r.step = step_;
  r.lr = current_lr();
  r.self_s.assign(size_t(cfg_.scales), 0.0);
  r.u_s.assign(size_t(cfg_.scales), 0.0);
  r.tri_s.assign(size_t(cfg_.scales), 0.0);

  teacher_.params().zero_grad();
  student_.params().zero_grad();
  pose_.params().zero_grad();

  auto named_finite = [&](double v, const std::string& name) {
    UMD_REQUIRE(std::isfinite(v),
                "train_step " + std::to_string(step_) + ": non-finite " + name);
  };

  ad::Var batch_total;
  for (int b = 0; b < cfg_.batch; ++b) {
    const FrameSample& f = data_[size_t(order_rng_.uniform_int(int(data_.size())))];
    SampleTerms st = build_losses(f);
    named_finite(ad::value0(st.teacher), "L_teacher");
    for (int s = 0; s < cfg_.scales; ++s) {
      named_finite(ad::value0(st.scales[size_t(s)].self),
                   "L_self at scale " + std::to_string(s));
      named_finite(ad::value0(st.scales[size_t(s)].u), "L_u at scale " + std::to_string(s));
      named_finite(ad::value0(st.scales[size_t(s)].tri),
                   "L_tri at scale " + std::to_string(s));
      r.self_s[size_t(s)] += ad::value0(st.scales[size_t(s)].self);
      r.u_s[size_t(s)] += ad::value0(st.scales[size_t(s)].u);
      r.tri_s[size_t(s)] += ad::value0(st.scales[size_t(s)].tri);
    }
    ad::Var tot = total_loss(st.scales, cfg_);
    ad::Var grand = ad::add(tot, st.teacher);
    r.teacher += ad::value0(st.teacher);
    r.total += ad::value0(tot);
    r.sigma_clamped += st.clamped;
    r.mask_fraction += st.mask_fraction;
    r.flow_mask_fraction += st.flow_fraction;
    batch_total = b == 0 ? grand : ad::add(batch_total, grand);
  }
  double inv_b = 1.0 / double(cfg_.batch);
  batch_total = ad::mul(batch_total, ad::constant(inv_b));
  r.teacher *= inv_b;
  r.total *= inv_b;
  r.mask_fraction *= inv_b;
  r.flow_mask_fraction *= inv_b;
  for (int s = 0; s < cfg_.scales; ++s) {
    r.self_s[size_t(s)] *= inv_b;
    r.u_s[size_t(s)] *= inv_b;
    r.tri_s[size_t(s)] *= inv_b;
  }
  r.grand = ad::value0(batch_total);
  named_finite(r.grand, "total");

  ad::backward(batch_total);
  ++adam_t_;
  adam_update(teacher_.params(), "t:", r.lr);
  adam_update(student_.params(), "s:", r.lr);
  adam_update(pose_.params(), "p:", r.lr);
  ++step_;
  return r;
}

void Trainer::adam_update(ParamStore& store, const std::string& prefix, double lr) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double c1 = 1.0 - std::pow(b1, adam_t_), c2 = 1.0 - std::pow(b2, adam_t_);
  for (const std::string& name : store.names()) {
    ad::Var p = store.find(name);
    if (p->grad.empty()) continue;
    auto& slot = adam_[prefix + name];
    if (slot.first.empty()) {
      slot.first = Tensor(p->val.shape());
      slot.second = Tensor(p->val.shape());
    }
    for (size_t i = 0; i < p->val.numel(); ++i) {
      double g = p->grad[i];
      slot.first[i] = b1 * slot.first[i] + (1 - b1) * g;
      slot.second[i] = b2 * slot.second[i] + (1 - b2) * g * g;
      double mh = slot.first[i] / c1, vh = slot.second[i] / c2;
      p->val[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

std::vector<StepReport> Trainer::run(int steps) {
  std::vector<StepReport> out;
  out.reserve(size_t(steps));
  for (int i = 0; i < steps; ++i) out.push_back(step());
  return out;
}

Tensor Trainer::predict_depth(const FrameSample& f) {
  PoseSE3 T = se3_invert(pose_.forward(f.prev.data, f.cur.data).value());
  StudentOutput so = student_.forward(f.cur.data, f.prev.data, T, f.K);
  return so.depth_fused->val;
}

double Trainer::teacher_grad_from_consistency() {
  teacher_.params().zero_grad();
  student_.params().zero_grad();
  pose_.params().zero_grad();
  SampleTerms st = build_losses(data_[0]);
  ad::backward(st.cons_sum);
  double mx = 0;
  for (const ad::Var& p : teacher_.params().all())
    for (size_t i = 0; i < p->grad.numel(); ++i) mx = std::max(mx, std::fabs(p->grad[i]));
  teacher_.params().zero_grad();
  student_.params().zero_grad();
  pose_.params().zero_grad();
  return mx;
}

// Checkpoints -----------------------------------------------------------------

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  f.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
  f.write(reinterpret_cast<char*>(b), 8);
}

void put_f64(std::ofstream& f, double d) { put_u64(f, std::bit_cast<uint64_t>(d)); }

uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& f) { return std::bit_cast<double>(get_u64(f)); }

void put_tensor(std::ofstream& f, const Tensor& t) {
  const Shape& s = t.shape();
  put_u32(f, uint32_t(s.size()));
  for (int d : s) put_u32(f, uint32_t(d));
  for (size_t i = 0; i < t.numel(); ++i) put_f64(f, t[i]);
}

Tensor get_tensor(std::ifstream& f) {
  uint32_t rank = get_u32(f);
  UMD_REQUIRE(rank >= 1 && rank <= 4, "checkpoint: bad tensor rank");
  Shape s;
  for (uint32_t i = 0; i < rank; ++i) s.push_back(int(get_u32(f)));
  Tensor t(s);
  for (size_t i = 0; i < t.numel(); ++i) t[i] = get_f64(f);
  return t;
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  UMD_REQUIRE(f.good(), "save_checkpoint: cannot open " + path);
  f.write("UMCK", 4);
  put_u32(f, kCheckpointVersion);
  std::string cfg_text = serialize_train_config(cfg_);
  put_u64(f, fnv1a(cfg_text));
  put_u32(f, uint32_t(cfg_text.size()));
  f.write(cfg_text.data(), std::streamsize(cfg_text.size()));
  put_u32(f, uint32_t(step_));
  put_u32(f, uint32_t(adam_t_));
  put_u64(f, order_rng_.counter());
  put_u64(f, flow_.noise_counter());

  const ParamStore* stores[3] = {&teacher_.params(), &student_.params(), &pose_.params()};
  const char* prefixes[3] = {"t:", "s:", "p:"};
  for (int k = 0; k < 3; ++k) {
    const auto& names = stores[k]->names();
    put_u32(f, uint32_t(names.size()));
    for (const std::string& n : names) {
      put_u32(f, uint32_t(n.size()));
      f.write(n.data(), std::streamsize(n.size()));
      put_tensor(f, stores[k]->find(n)->val);
      auto it = adam_.find(prefixes[k] + n);
      if (it == adam_.end()) {
        put_u32(f, 0);
      } else {
        put_u32(f, 1);
        put_tensor(f, it->second.first);
        put_tensor(f, it->second.second);
      }
    }
  }
  f.flush();
  UMD_REQUIRE(f.good(), "save_checkpoint: write failed for " + path);
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  UMD_REQUIRE(f.good(), "load_checkpoint: missing file " + path);
  char magic[4];
  f.read(magic, 4);
  UMD_REQUIRE(f.good() && std::memcmp(magic, "UMCK", 4) == 0,
              "load_checkpoint: bad magic in " + path);
  UMD_REQUIRE(get_u32(f) == kCheckpointVersion, "load_checkpoint: unsupported version");
  uint64_t hash = get_u64(f);
  UMD_REQUIRE(hash == config_hash(cfg_),
              "load_checkpoint: config does not match the checkpointed run");
  std::string cfg_text(get_u32(f), '\0');
  f.read(cfg_text.data(), std::streamsize(cfg_text.size()));
  step_ = int(get_u32(f));
  adam_t_ = int(get_u32(f));
  order_rng_.set_counter(get_u64(f));
  flow_.set_noise_counter(get_u64(f));

  ParamStore* stores[3] = {&teacher_.params(), &student_.params(), &pose_.params()};
  const char* prefixes[3] = {"t:", "s:", "p:"};
  adam_.clear();
  for (int k = 0; k < 3; ++k) {
    uint32_t n = get_u32(f);
    for (uint32_t i = 0; i < n; ++i) {
      std::string name(get_u32(f), '\0');
      f.read(name.data(), std::streamsize(name.size()));
      stores[k]->set(name, get_tensor(f));
      if (get_u32(f) == 1) {
        auto& slot = adam_[prefixes[k] + name];
        slot.first = get_tensor(f);
        slot.second = get_tensor(f);
      }
    }
  }
  UMD_REQUIRE(f.good(), "load_checkpoint: truncated file " + path);
}

Trainer Trainer::from_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  UMD_REQUIRE(f.good(), "from_checkpoint: missing file " + path);
  char magic[4];
  f.read(magic, 4);
  UMD_REQUIRE(f.good() && std::memcmp(magic, "UMCK", 4) == 0,
              "from_checkpoint: bad magic in " + path);
  UMD_REQUIRE(get_u32(f) == kCheckpointVersion, "from_checkpoint: unsupported version");
  get_u64(f);  // hash, revalidated by load_checkpoint
  std::string cfg_text(get_u32(f), '\0');
  f.read(cfg_text.data(), std::streamsize(cfg_text.size()));
  UMD_REQUIRE(f.good(), "from_checkpoint: truncated header in " + path);
  Trainer t(parse_train_config(cfg_text));
  t.load_checkpoint(path);
  return t;
}

}  // namespace umd
