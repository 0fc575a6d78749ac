#include "tinytrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tinytrack/rng.hpp"

namespace tinytrack::track {

TrackerNet::TrackerNet(const TrackerNetConfig& cfg)
    : cfg_([&cfg] {
        TrackerNetConfig c = cfg;
        c.backbone.init_seed = cfg.seed * 2 + 1;
        c.iou.init_seed = cfg.seed * 2 + 2;
        c.iou.feat_channels = c.backbone.out_channels;
        return c;
      }()),
      backbone_(cfg_.backbone),
      iou_head_(cfg_.iou) {
  if (cfg_.net_input % Backbone::kStride != 0 || cfg_.net_input <= 0) {
    throw std::invalid_argument("TrackerNet: net_input must be a positive multiple of 16");
  }
  if (cfg_.filter_size % 2 == 0) {
    throw std::invalid_argument("TrackerNet: filter_size must be odd");
  }
  Rng rng(cfg_.seed * 2 + 3);
  const int c = cfg_.backbone.out_channels;
  cls_params_.push_back({"cls.w", ad::leaf(ad::random_init({c, c, 1, 1}, c, rng))});
  cls_params_.push_back({"cls.b", ad::leaf(ad::Tensor({c}))});
}

ad::Tensor pooled_image_channels(const Image& crop, int stride) {
  const int cells_x = crop.width / stride;
  const int cells_y = crop.height / stride;
  ad::Tensor out({2, cells_y, cells_x});
  const double crop_mean = mean_pixel(crop);
  const double inv = 1.0 / (stride * stride);
  for (int cy = 0; cy < cells_y; ++cy) {
    for (int cx = 0; cx < cells_x; ++cx) {
      double m = 0.0, m2 = 0.0;
      for (int y = 0; y < stride; ++y) {
        for (int x = 0; x < stride; ++x) {
          const double v = crop.at(cx * stride + x, cy * stride + y);
          m += v;
          m2 += v * v;
        }
      }
      m *= inv;
      m2 *= inv;
      out.at3(0, cy, cx) = m - crop_mean;
      out.at3(1, cy, cx) = std::sqrt(std::max(0.0, m2 - m * m));
    }
  }
  return out;
}

ad::Var TrackerNet::backbone_features(const ad::Var& image) const {
  return backbone_.forward(image);
}

ad::Var TrackerNet::classification_features(const ad::Var& backbone_feat,
                                            const Image& crop) const {
  ad::Var projected =
      ad::conv(backbone_feat, cls_params_[0].var, cls_params_[1].var, 1, 0);
  projected = ad::scale(projected, cfg_.conv_feature_gain);
  return ad::concat_channels(projected, ad::constant(pooled_image_channels(crop)));
}

std::vector<ad::Param> TrackerNet::all_params() {
  std::vector<ad::Param> all;
  for (auto& p : backbone_.params()) all.push_back(p);
  for (auto& p : cls_params_) all.push_back(p);
  for (auto& p : iou_head_.params()) all.push_back(p);
  return all;
}

std::uint64_t TrackerNet::param_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : backbone_.params()) h = ad::tensor_hash(p.var->value, h);
  for (const auto& p : cls_params_) h = ad::tensor_hash(p.var->value, h);
  for (const auto& p : iou_head_.params()) h = ad::tensor_hash(p.var->value, h);
  return h;
}

void TrackerNet::copy_params_from(const TrackerNet& other) {
  backbone_.copy_params_from(other.backbone_);
  iou_head_.copy_params_from(other.iou_head_);
  for (size_t i = 0; i < cls_params_.size(); ++i) {
    cls_params_[i].var->value = other.cls_params_[i].var->value;
  }
}

// ---- Tracker ----

Tracker::Tracker(const TrackerNet& net, const TrackerConfig& cfg)
    : net_(net),
      cfg_(cfg),
      memory_(cfg.memory_capacity, cfg.init_samples) {
  model_.lambda = net.config().filter_lambda;
  const int k = net.config().filter_size;
  model_.filter = ad::Tensor({net.classifier_channels(), k, k});
}

Tracker::Crop Tracker::make_crop(const Image& frame, double cx, double cy,
                                 double side) const {
  Crop crop;
  const int n = net_.config().net_input;
  crop.image = crop_window(frame, cx, cy, side, n);
  crop.origin_x = cx - 0.5 * side;
  crop.origin_y = cy - 0.5 * side;
  crop.scale = static_cast<double>(n) / side;
  return crop;
}

BoundingBox Tracker::crop_to_image(const Crop& crop, const BoundingBox& b) const {
  return {crop.origin_x + b.x / crop.scale, crop.origin_y + b.y / crop.scale,
          b.w / crop.scale, b.h / crop.scale};
}

BoundingBox Tracker::image_to_crop(const Crop& crop, const BoundingBox& b) const {
  return {(b.x - crop.origin_x) * crop.scale, (b.y - crop.origin_y) * crop.scale,
          b.w * crop.scale, b.h * crop.scale};
}

void Tracker::add_sample(const ad::Tensor& cls_feat, double cx_cells,
                         double cy_cells, double weight) {
  const int h = cls_feat.dim(1), w = cls_feat.dim(2);
  TrainSample sample;
  sample.features = cls_feat;
  sample.label = gaussian_label(h, w, cx_cells, cy_cells, net_.config().label_sigma);
  sample.weight = weight;
  memory_.add(std::move(sample));
}

void Tracker::refit(int iterations) {
  auto result = optimize_target_model(model_, memory_, iterations);
  model_ = std::move(result.model);
  ++model_update_count_;
  frames_since_update_ = 0;
}

namespace {

struct Augmentation {
  double shift_x = 0.0, shift_y = 0.0;  // crop-window shift in crop pixels
  bool hflip = false, vflip = false;
  int blur = 0;
};

// The fixed 15-element initial augmentation set: identity, the two mirror
// flips, six sub-cell shifts, two blur strengths and four blurred shifts.
// Half- and quarter-cell shifts teach the filter the sub-cell response
// structure the coarse feature grid would otherwise hide.
std::vector<Augmentation> initial_augmentations(double cell) {
  const double h = 0.5 * cell, q = 0.25 * cell;
  return {
      {},
      {.hflip = true},
      {.vflip = true},
      {h, 0.0}, {-h, 0.0}, {0.0, h}, {0.0, -h}, {q, q}, {-q, -q},
      {.blur = 1},
      {.blur = 2},
      {cell, h, false, false, 1},
      {-h, cell, false, false, 1},
      {q, -q, false, false, 1},
      {-q, q, false, false, 1},
  };
}

Image flip_image(const Image& src, bool horizontal, bool vertical) {
  Image dst(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    const int sy = vertical ? src.height - 1 - y : y;
    for (int x = 0; x < src.width; ++x) {
      const int sx = horizontal ? src.width - 1 - x : x;
      dst.at(x, y) = src.at(sx, sy);
    }
  }
  return dst;
}

}  // namespace

void Tracker::initialize(const Image& frame, const BoundingBox& gt) {
  if (!gt.valid()) throw std::invalid_argument("Tracker: invalid first-frame box");
  last_box_ = gt;
  init_box_ = gt;
  image_number_ = 1;
  frames_since_update_ = 0;
  model_update_count_ = 0;

  const double side = cfg_.search_scale * std::sqrt(gt.w * gt.h);
  const Crop base = make_crop(frame, gt.cx(), gt.cy(), side);
  const int n = net_.config().net_input;
  const int stride = Backbone::kStride;

  const auto augs = initial_augmentations(static_cast<double>(stride));
  const int count = std::min<int>(cfg_.init_samples, static_cast<int>(augs.size()));
  for (int i = 0; i < count; ++i) {
    const auto& aug = augs[i];
    Crop crop = base;
    if (aug.shift_x != 0.0 || aug.shift_y != 0.0) {
      crop = make_crop(frame, gt.cx() + aug.shift_x / base.scale,
                       gt.cy() + aug.shift_y / base.scale, side);
    }
    Image img = crop.image;
    BoundingBox in_crop = image_to_crop(crop, gt);
    if (aug.hflip || aug.vflip) {
      img = flip_image(img, aug.hflip, aug.vflip);
      if (aug.hflip) in_crop.x = n - in_crop.x2();
      if (aug.vflip) in_crop.y = n - in_crop.y2();
    }
    if (aug.blur > 0) img = directional_blur(img, 1.0, 0.7, aug.blur);

    ad::NoGradGuard inference;
    const ad::Var bb = net_.backbone_features(ad::constant(ad::image_to_tensor(img)));
    const ad::Var cls = net_.classification_features(bb, img);
    add_sample(cls->value, in_crop.cx() / stride, in_crop.cy() / stride, 1.0);
    if (i == 0) {
      const BoundingBox feat_box{in_crop.x / stride, in_crop.y / stride,
                                 in_crop.w / stride, in_crop.h / stride};
      modulation_ = net_.iou_head().reference(bb, feat_box)->value;
    }
  }
  refit(cfg_.init_opt_iters);
  model_update_count_ = 0;  // the initial fit is not a scheduled update
}

BoundingBox Tracker::process_frame(const Image& frame) {
  ++image_number_;
  ++frames_since_update_;
  const int stride = Backbone::kStride;

  const double side = cfg_.search_scale * std::sqrt(last_box_.w * last_box_.h);
  const Crop crop = make_crop(frame, last_box_.cx(), last_box_.cy(), side);

  ad::Tensor bb_feat, cls_feat;
  {
    ad::NoGradGuard inference;
    const ad::Var bb = net_.backbone_features(ad::constant(ad::image_to_tensor(crop.image)));
    bb_feat = bb->value;
    cls_feat = net_.classification_features(bb, crop.image)->value;
  }
  const ScoreMap scores = score_map(cls_feat, model_.filter);
  const int h = scores.dim(0), w = scores.dim(1);

  // Peak selection under the center prior; sub-cell refinement and the
  // interference check read the raw map.
  const double wc_x = w / 2.0, wc_y = h / 2.0;
  auto prior = [&](int x, int y) {
    if (cfg_.window_sigma_cells <= 0.0) return 1.0;
    const double dx = (x + 0.5) - wc_x, dy = (y + 0.5) - wc_y;
    return std::exp(-(dx * dx + dy * dy) /
                    (2.0 * cfg_.window_sigma_cells * cfg_.window_sigma_cells));
  };
  int peak_x = 0, peak_y = 0;
  double windowed_peak = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = scores.v[static_cast<size_t>(y) * w + x] * prior(x, y);
      if (v > windowed_peak) {
        windowed_peak = v;
        peak_x = x;
        peak_y = y;
      }
    }
  }
  const double peak = scores.v[static_cast<size_t>(peak_y) * w + peak_x];

  // Sub-cell peak via 1-d quadratic fits in x and y.
  auto parabolic = [](double l, double c, double r) {
    const double denom = l - 2.0 * c + r;
    if (std::abs(denom) < 1e-12) return 0.0;
    return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
  };
  double off_x = 0.0, off_y = 0.0;
  if (peak_x > 0 && peak_x + 1 < w) {
    off_x = parabolic(scores.v[static_cast<size_t>(peak_y) * w + peak_x - 1], peak,
                      scores.v[static_cast<size_t>(peak_y) * w + peak_x + 1]);
  }
  if (peak_y > 0 && peak_y + 1 < h) {
    off_y = parabolic(scores.v[static_cast<size_t>(peak_y - 1) * w + peak_x], peak,
                      scores.v[static_cast<size_t>(peak_y + 1) * w + peak_x]);
  }

  // Interference peak: a strong secondary local maximum far from the main one.
  bool interference = false;
  for (int y = 0; y < h && !interference; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - peak_x, dy = y - peak_y;
      if (dx * dx + dy * dy <= static_cast<double>(cfg_.interference_radius) *
                                   cfg_.interference_radius) {
        continue;
      }
      const double v = scores.v[static_cast<size_t>(y) * w + x];
      if (peak > 0.0 && v > cfg_.interference_ratio * peak) {
        bool local_max = true;
        for (int ny = std::max(0, y - 1); ny <= std::min(h - 1, y + 1) && local_max; ++ny) {
          for (int nx = std::max(0, x - 1); nx <= std::min(w - 1, x + 1); ++nx) {
            if (scores.v[static_cast<size_t>(ny) * w + nx] > v) {
              local_max = false;
              break;
            }
          }
        }
        if (local_max) {
          interference = true;
          break;
        }
      }
    }
  }

  BoundingBox estimate = last_box_;
  if (peak > 0.0) {
    // Damped position measurement at the (sub-cell) peak, size carried over.
    const double cx_crop = (peak_x + 0.5 + off_x) * stride;
    const double cy_crop = (peak_y + 0.5 + off_y) * stride;
    const BoundingBox meas = crop_to_image(
        crop, BoundingBox::from_center(cx_crop, cy_crop, last_box_.w * crop.scale,
                                       last_box_.h * crop.scale));
    const double eta = cfg_.position_damping;
    BoundingBox damped = BoundingBox::from_center(
        last_box_.cx() + eta * (meas.cx() - last_box_.cx()),
        last_box_.cy() + eta * (meas.cy() - last_box_.cy()), last_box_.w, last_box_.h);

    // Candidate refinement on the head's predicted score.
    const BoundingBox damped_crop = image_to_crop(crop, damped);
    const BoundingBox feat_start{damped_crop.x / stride, damped_crop.y / stride,
                                 damped_crop.w / stride, damped_crop.h / stride};
    const BoundingBox refined =
        refine_box(net_.iou_head(), bb_feat, modulation_, feat_start,
                   cfg_.refine_steps, cfg_.refine_step_size, nullptr,
                   cfg_.refine_max_shift, cfg_.refine_max_log_scale);
    const BoundingBox in_crop{refined.x * stride, refined.y * stride,
                              refined.w * stride, refined.h * stride};
    BoundingBox in_image = crop_to_image(crop, in_crop);
    if (cfg_.scale_anchor > 0.0) {
      const double a = cfg_.scale_anchor;
      const double w =
          std::exp(a * std::log(init_box_.w) + (1.0 - a) * std::log(in_image.w));
      const double hgt =
          std::exp(a * std::log(init_box_.h) + (1.0 - a) * std::log(in_image.h));
      in_image = BoundingBox::from_center(in_image.cx(), in_image.cy(), w, hgt);
    }
    const BoundingBox clipped = in_image.clipped(frame.width, frame.height);
    estimate = clipped.valid() ? clipped : damped;

    // Remember this frame at the estimated position.
    const BoundingBox est_crop = image_to_crop(crop, estimate);
    add_sample(cls_feat, est_crop.cx() / stride, est_crop.cy() / stride,
               cfg_.online_sample_weight);
  }
  last_box_ = estimate;

  if (interference || image_number_ % cfg_.update_interval == 0) {
    refit(cfg_.update_opt_iters);
  }
  return last_box_;
}

metrics::TrackResult Tracker::track_sequence(std::span<const Image> frames,
                                             const BoundingBox& first_gt,
                                             const std::string& sequence_name) {
  if (frames.empty()) throw std::invalid_argument("track_sequence: no frames");
  metrics::TrackResult result;
  result.sequence_name = sequence_name;
  result.boxes.reserve(frames.size());
  initialize(frames[0], first_gt);
  result.boxes.push_back(first_gt);
  for (size_t i = 1; i < frames.size(); ++i) {
    result.boxes.push_back(process_frame(frames[i]));
  }
  return result;
}

}  // namespace tinytrack::track
