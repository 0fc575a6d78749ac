#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinytrack/autodiff.hpp"
#include "tinytrack/degrade.hpp"
#include "tinytrack/synth.hpp"
#include "tinytrack/tracker.hpp"

namespace tinytrack::distill {

/// Reliable distillation measure: the teacher loss acts as the distillation
/// upper bound; a teacher doing worse than the student yields 0 and switches
/// the corresponding distillation terms off. The value is a detached
/// constant — no gradient flows through it.
double rdm(double student_loss, double teacher_loss);

struct DistillGate {
  double rdm_iou = 0.0;
  double rdm_cls = 0.0;
};

/// Combination weights of the total objective.
struct LossWeights {
  double alpha = 100.0;  // classification loss
  double beta = 0.01;    // IoU regression loss
  double gamma = 5.0;    // feature consistency
  double delta = 2.0;    // score-level distillation
  double eta = 0.1;      // IoU-level distillation
};

struct LossBundle {
  double cls = 0.0;
  double iou = 0.0;
  double gen = 0.0;
  double dis = 0.0;
  double cons = 0.0;
  double score_d = 0.0;
  double iou_d = 0.0;
  double total = 0.0;
};

/// Three fully connected layers with a sigmoid output strictly inside (0,1).
class Discriminator {
 public:
  struct Config {
    int input_dim = 144;  // flattened ROI feature size
    int hidden1 = 256;
    int hidden2 = 64;
    double leaky_slope = 0.1;
    std::uint64_t init_seed = 21;
  };

  explicit Discriminator(const Config& cfg);

  /// D(roi) in (0,1); accepts [C,b,b] or already-flattened features.
  ad::Var probability(const ad::Var& roi) const;

  std::span<ad::Param> params() { return params_; }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  std::vector<ad::Param> params_;
};

/// Adversarial generator objective: -sum_i log D(S_i).
ad::Var gen_loss(const Discriminator& d, std::span<const ad::Var> student_rois);

/// Discriminator objective: -sum_i (log D(T_i) + log(1 - D(S_i))).
ad::Var dis_loss(const Discriminator& d, std::span<const ad::Var> teacher_rois,
                 std::span<const ad::Var> student_rois);

/// (1/N) sum_i || S_i - T_i ||_1 over matched feature pairs; the L1 norm is
/// the elementwise absolute sum, the mean runs over batch items only.
ad::Var consistency_loss(std::span<const ad::Var> student_rois,
                         std::span<const ad::Var> teacher_rois);

/// Same L1 form over classification score maps.
ad::Var score_distill_loss(std::span<const ad::Var> student_scores,
                           std::span<const ad::Var> teacher_scores);

/// Same L1 form over scalar candidate confidence values.
ad::Var iou_distill_loss(std::span<const ad::Var> student_ious,
                         std::span<const ad::Var> teacher_ious);

/// alpha*L_cls + beta*L_iou + RDM_iou*L_gen + gamma*RDM_iou*L_cons
/// + delta*RDM_cls*L_score_d + eta*RDM_iou*L_iou_d.
double total_loss(const LossBundle& parts, const DistillGate& gate,
                  const LossWeights& w);

/// Which distillation levels participate; the full model enables all three.
struct DistillFlags {
  bool feature = true;
  bool score = true;
  bool iou = true;

  bool any() const { return feature || score || iou; }
  static DistillFlags none() { return {false, false, false}; }
};

struct TrainStepConfig {
  LossWeights weights;
  DistillFlags flags;
  degrade::DegradeSpec degrade_spec;
  /// When false, the student sees the clean crops (used to pretrain the
  /// network that later acts as the teacher).
  bool degrade_inputs = true;
  int frames_train = 2;
  int frames_test = 1;
  double crop_context = 4.0;   // crop side = context * sqrt(w*h)
  double jitter_center = 0.08; // center jitter as a fraction of the crop side
  double jitter_log_scale = 0.15;
  int filter_iters = 3;
  int kl_grid_res = 5;
  double kl_center_range = 0.4;
  double kl_log_range = 0.3;
  double kl_label_sigma = 0.15;
};

/// One video's sampled crops, already resized to the network input; boxes in
/// network-input pixels. Teacher consumes these as-is, the student sees the
/// degraded copies. `annotation_boxes` keeps the original-coordinate ground
/// truth of every sampled frame: the degradation factor measures how large
/// the objects really are, before crop normalization.
struct VideoSample {
  std::vector<Image> train_images;
  std::vector<Image> test_images;
  std::vector<BoundingBox> train_boxes;
  std::vector<BoundingBox> test_boxes;
  std::vector<BoundingBox> annotation_boxes;
};

struct TrainStepStats {
  LossBundle bundle;
  DistillGate gate;
  bool applied = false;
  std::string diagnostic;  // set when the step was aborted
};

struct OptimizerConfig {
  double lr_classifier = 5e-5;
  double lr_regressor = 5e-4;
  double lr_backbone = 5e-5;
  double lr_discriminator = 1e-4;
  double lr_decay = 0.2;
  int lr_decay_every = 15;  // epochs
};

/// Runs distillation training steps: the teacher network stays frozen (it is
/// only ever evaluated under NoGrad), the student follows the gradient of the
/// total objective, the discriminator follows its own objective in the same
/// step. Passing a null teacher trains the plain baseline (alpha/beta terms).
class DistillTrainer {
 public:
  DistillTrainer(const track::TrackerNet* teacher, track::TrackerNet& student,
                 Discriminator& discriminator, const TrainStepConfig& cfg,
                 const OptimizerConfig& opt, std::uint64_t seed);

  TrainStepStats step(const VideoSample& batch);

  void set_epoch(int epoch) { epoch_ = epoch; }
  double lr_scale() const;
  degrade::Degrader& degrader() { return degrader_; }

 private:
  const track::TrackerNet* teacher_;
  track::TrackerNet& student_;
  Discriminator& disc_;
  TrainStepConfig cfg_;
  OptimizerConfig opt_cfg_;
  degrade::Degrader degrader_;
  ad::Adam adam_backbone_, adam_cls_, adam_iou_, adam_disc_;
  int epoch_ = 0;
};

struct TrainConfig {
  int epochs = 2;
  int videos_per_epoch = 50;
  TrainStepConfig step;
  OptimizerConfig optimizer;
  std::uint64_t seed = 7;
};

struct TrainOutcome {
  std::vector<LossBundle> history;
  std::vector<double> epoch_mean_total;
  long long steps = 0;
  int aborted_steps = 0;
};

/// Sample one training batch (crop + jitter + resize) from a video.
VideoSample sample_video(const synth::SynthSequence& video, const TrainStepConfig& cfg,
                         int net_input, Rng& rng);

/// Full offline loop over synthetic videos. Deterministic for a fixed seed.
TrainOutcome train(const track::TrackerNet* teacher, track::TrackerNet& student,
                   Discriminator& discriminator,
                   std::span<const synth::SynthSequence> videos,
                   const TrainConfig& cfg);

}  // namespace tinytrack::distill
