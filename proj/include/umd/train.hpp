#ifndef UMD_TRAIN_HPP_
#define UMD_TRAIN_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "umd/autodiff.hpp"
#include "umd/data.hpp"
#include "umd/motion.hpp"
#include "umd/networks.hpp"
#include "umd/photometric.hpp"
#include "umd/uncertainty.hpp"

namespace umd {

// Full training recipe. The weighted total over scales is
// (1/S) * sum_s (L_self + lambda_u * L_u + lambda_tri * L_tri); the teacher's
// own photometric+smoothness objective is added on top so teacher, student,
// and pose net train jointly. Learning rate drops by 10x for the final
// lr_drop_epochs epochs.
struct TrainConfig {
  double lambda_u = 1.0;
  double lambda_tri = 0.1;
  double lambda_sm = 1e-3;
  int scales = 4;
  double lr = 1e-4;
  int lr_drop_epochs = 5;
  int batch = 12;  // desk-scale runs override this downward
  int epochs = 20;
  uint64_t seed = 1;

  // Desk-scale data source: a rendered synthetic scene.
  std::string scene = "standard";
  int frames = 50;
  int height = 64;
  int width = 192;
  double flow_noise = 0.5;  // px sigma on the oracle flow
  // Drops the motion mask and the triplet term (the dynamic-object path),
  // keeping everything else; used for ablation comparisons.
  bool ablate_motion = false;

  // Network sizing forwarded into NetworkSpec.
  int base_channels = 8;
  int n_bins = 8;
  int cost_bins = 16;
  double d_min = 0.1;
  double d_max = 100.0;
  std::string encoder = "conv";  // or "mixer"

  void validate() const;
  NetworkSpec network_spec() const;
};

// Key-value config text: one "key = value" per line, '#' comments. Unknown
// keys and malformed values are errors; omitted keys keep defaults.
TrainConfig parse_train_config(const std::string& text);
std::string serialize_train_config(const TrainConfig& cfg);
uint64_t config_hash(const TrainConfig& cfg);

struct ScaleLosses {
  ad::Var self, u, tri;
};

// (1/S) * sum over scales of (L_self + lambda_u * L_u + lambda_tri * L_tri).
// Requires exactly cfg.scales entries.
ad::Var total_loss(const std::vector<ScaleLosses>& per_scale, const TrainConfig& cfg);

// Eigen-protocol depth metrics.
struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double a1 = 0, a2 = 0, a3 = 0;  // delta < 1.25, 1.25^2, 1.25^3
};

struct DepthEvalOptions {
  bool median_scaling = true;      // per-frame median(gt)/median(pred)
  double min_depth = 1e-3;
  double max_depth = 100.0;        // predictions capped here
  std::vector<Tensor> include;     // optional per-frame pixel masks (1 = count)
};

// Per-frame metrics over valid GT pixels (min < gt <= max, inside the include
// mask when given), averaged across frames. A frame with no countable pixel
// is an error.
DepthMetrics evaluate_depth(const std::vector<Tensor>& pred,
                            const std::vector<Tensor>& gt,
                            const DepthEvalOptions& opt = {});

// One optimizer step's itemized numbers. total is the weighted multi-scale
// sum above; grand adds the teacher objective and is the scalar actually
// stepped on.
struct StepReport {
  int step = 0;
  double lr = 0;
  double teacher = 0;
  std::vector<double> self_s, u_s, tri_s;
  double total = 0;
  double grand = 0;
  int sigma_clamped = 0;        // variance clamp events this step
  double mask_fraction = 0;     // mean of the combined photometric mask
  double flow_mask_fraction = 0;
};

std::string loss_csv_header(const TrainConfig& cfg);
std::string loss_csv_row(const StepReport& r);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // One batch: forward, itemize, backprop, adaptive-moment update.
  // Non-finite loss terms abort with the offending term named.
  StepReport step();

  // Convenience: run the remaining steps of the configured epoch budget.
  std::vector<StepReport> run(int steps);

  int steps_per_epoch() const;
  int total_steps() const { return steps_per_epoch() * cfg_.epochs; }
  int steps_done() const { return step_; }
  double current_lr() const;  // schedule position for the next step

  // Inference: predicted finest depth for a sample; never touches flow.
  Tensor predict_depth(const FrameSample& f);

  // Max |teacher parameter gradient| when backpropagating only the
  // teacher-student consistency terms; the stop-gradient contract makes
  // this exactly zero.
  double teacher_grad_from_consistency();

  // Versioned checkpoint with the serialized config embedded; restore is
  // bitwise (parameters, moments, step counters, rng positions).
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);
  static Trainer from_checkpoint(const std::string& path);

  const TrainConfig& config() const { return cfg_; }
  const std::vector<FrameSample>& data() const { return data_; }
  TeacherNet& teacher() { return teacher_; }
  StudentNet& student() { return student_; }
  PoseNet& pose() { return pose_; }
  FlowProvider& flow() { return flow_; }

 private:
  struct SampleTerms;
  SampleTerms build_losses(const FrameSample& f);
  void adam_update(ParamStore& store, const std::string& prefix, double lr);

  TrainConfig cfg_;
  NetworkSpec net_spec_;
  TeacherNet teacher_;
  StudentNet student_;
  PoseNet pose_;
  FlowProvider flow_;
  std::vector<FrameSample> data_;
  Rng order_rng_;
  std::map<std::string, std::pair<Tensor, Tensor>> adam_;  // first/second moments
  int adam_t_ = 0;
  int step_ = 0;
};

}  // namespace umd

#endif  // UMD_TRAIN_HPP_
