#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tinytrack/backbone.hpp"
#include "tinytrack/box.hpp"
#include "tinytrack/image.hpp"
#include "tinytrack/iou_head.hpp"
#include "tinytrack/metrics.hpp"
#include "tinytrack/target_model.hpp"

namespace tinytrack::track {

/// Complete network: shared backbone, a 1x1 projection feeding the online
/// classifier, and the candidate-scoring head. Teacher and student in the
/// distillation setup are two instances of this class.
struct TrackerNetConfig {
  int net_input = 128;  // square network input side, multiple of 16
  BackboneConfig backbone;
  IoUHeadConfig iou;
  int filter_size = 5;
  double filter_lambda = 0.05;
  double label_sigma = 0.6;  // feature cells
  /// Gain on the learned classifier channels relative to the fixed pooled
  /// image channels (the latter carry the alias-free localization signal).
  double conv_feature_gain = 0.3;
  std::uint64_t seed = 1234;
};

/// Cell-resolution image statistics appended to the classifier features:
/// channel 0 is the mean-centered box-pooled intensity, channel 1 the local
/// contrast. Both are exact low-pass signals, so the correlation response
/// stays smooth under sub-cell target motion.
ad::Tensor pooled_image_channels(const Image& crop, int stride = Backbone::kStride);

class TrackerNet {
 public:
  explicit TrackerNet(const TrackerNetConfig& cfg);

  const TrackerNetConfig& config() const { return cfg_; }
  int feature_size() const { return cfg_.net_input / Backbone::kStride; }
  /// Channels the online classifier sees: projected backbone plus the two
  /// pooled image channels.
  int classifier_channels() const { return cfg_.backbone.out_channels + 2; }

  /// Backbone feature map for a [1,H,W] input.
  ad::Var backbone_features(const ad::Var& image) const;
  /// Features the online classifier consumes: scaled 1x1-projected backbone
  /// features concatenated with the pooled channels of the crop.
  ad::Var classification_features(const ad::Var& backbone_feat,
                                  const Image& crop) const;

  const Backbone& backbone() const { return backbone_; }
  IoUHead& iou_head() { return iou_head_; }
  const IoUHead& iou_head() const { return iou_head_; }

  std::span<ad::Param> backbone_params() { return backbone_.params(); }
  std::span<ad::Param> classifier_params() { return cls_params_; }
  std::span<ad::Param> iou_params() { return iou_head_.params(); }
  std::vector<ad::Param> all_params();

  std::uint64_t param_hash() const;
  void copy_params_from(const TrackerNet& other);

 private:
  TrackerNetConfig cfg_;
  Backbone backbone_;
  std::vector<ad::Param> cls_params_;  // 1x1 conv weight + bias
  IoUHead iou_head_;
};

/// Online tracking parameters (cadence, memory, refinement).
struct TrackerConfig {
  double search_scale = 2.5;      // crop side = search_scale * sqrt(w*h)
  int init_samples = 15;          // augmented first-frame training set size
  int memory_capacity = 40;
  int init_opt_iters = 10;
  int update_opt_iters = 3;
  int update_interval = 20;       // scheduled model update every N-th image
  double interference_ratio = 0.5;
  int interference_radius = 3;    // cells
  int refine_steps = 10;
  double refine_step_size = 1.0;
  /// Refinement trust region (see refine_box). Kept tight per frame: the
  /// classifier re-anchors the position every frame, so refinement only has
  /// to supply sub-cell corrections and slow scale adaptation.
  double refine_max_shift = 0.08;
  double refine_max_log_scale = 0.05;
  /// Center-prior window applied when picking the score peak; the crop is
  /// re-centered on the previous box every frame, so the prior damps spurious
  /// responses near the crop borders. 0 disables it.
  double window_sigma_cells = 1.5;
  /// Exponential damping of the position measurement (1 = undamped).
  double position_damping = 0.65;
  /// Log-domain pull of the box size toward the first-frame size; the
  /// classifier only measures position, so this keeps per-frame refinement
  /// noise from compounding into a scale random walk. 0 disables it.
  double scale_anchor = 0.5;
  double online_sample_weight = 0.5;
};

/// Single-target tracker state machine. One instance owns mutable state
/// (memory, filter); run distinct instances for concurrent sequences.
class Tracker {
 public:
  Tracker(const TrackerNet& net, const TrackerConfig& cfg);

  void initialize(const Image& frame, const BoundingBox& gt);
  BoundingBox process_frame(const Image& frame);

  /// One-pass protocol: the first output equals the given ground truth.
  metrics::TrackResult track_sequence(std::span<const Image> frames,
                                      const BoundingBox& first_gt,
                                      const std::string& sequence_name);

  int model_update_count() const { return model_update_count_; }
  int frames_since_update() const { return frames_since_update_; }
  const TargetModel& target_model() const { return model_; }

 private:
  struct Crop {
    Image image;
    double origin_x = 0.0, origin_y = 0.0;  // image coords of crop corner
    double scale = 1.0;  // crop pixels per image pixel
  };

  Crop make_crop(const Image& frame, double cx, double cy, double side) const;
  BoundingBox crop_to_image(const Crop& crop, const BoundingBox& b) const;
  BoundingBox image_to_crop(const Crop& crop, const BoundingBox& b) const;

  void add_sample(const ad::Tensor& cls_feat, double cx_cells, double cy_cells,
                  double weight);
  void refit(int iterations);

  const TrackerNet& net_;
  TrackerConfig cfg_;

  TargetModel model_;
  SampleMemory memory_;
  ad::Tensor modulation_;
  BoundingBox last_box_;
  BoundingBox init_box_;
  int image_number_ = 0;  // 1-based count including the init frame
  int frames_since_update_ = 0;
  int model_update_count_ = 0;
};

}  // namespace tinytrack::track
