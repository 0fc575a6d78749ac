#include "tinytrack/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tinytrack::distill {

double rdm(double student_loss, double teacher_loss) {
  if (!std::isfinite(student_loss) || !std::isfinite(teacher_loss)) {
    throw std::invalid_argument("rdm: non-finite loss");
  }
  return std::max(0.0, student_loss - teacher_loss);
}

Discriminator::Discriminator(const Config& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  params_.push_back({"disc.w1", ad::leaf(ad::random_init({cfg.hidden1, cfg.input_dim},
                                                         cfg.input_dim, rng))});
  params_.push_back({"disc.b1", ad::leaf(ad::Tensor({cfg.hidden1}))});
  params_.push_back({"disc.w2", ad::leaf(ad::random_init({cfg.hidden2, cfg.hidden1},
                                                         cfg.hidden1, rng))});
  params_.push_back({"disc.b2", ad::leaf(ad::Tensor({cfg.hidden2}))});
  params_.push_back({"disc.w3", ad::leaf(ad::random_init({1, cfg.hidden2},
                                                         cfg.hidden2, rng))});
  params_.push_back({"disc.b3", ad::leaf(ad::Tensor({1}))});
}

ad::Var Discriminator::probability(const ad::Var& roi) const {
  ad::Var x = roi;
  if (x->value.rank() != 1) {
    x = ad::reshape(x, {static_cast<int>(x->value.size())});
  }
  if (x->value.dim(0) != cfg_.input_dim) {
    throw std::invalid_argument("Discriminator: input dimension mismatch");
  }
  x = ad::leaky_relu(ad::linear(x, params_[0].var, params_[1].var), cfg_.leaky_slope);
  x = ad::leaky_relu(ad::linear(x, params_[2].var, params_[3].var), cfg_.leaky_slope);
  x = ad::linear(x, params_[4].var, params_[5].var);
  // Affine epsilon guard keeps the output strictly inside (0,1) even for
  // saturating logits; log D and log(1-D) stay finite.
  constexpr double kEps = 1e-12;
  return ad::add_scalar(ad::scale(ad::sigmoid(x), 1.0 - 2.0 * kEps), kEps);
}

namespace {

void check_probability(const ad::Var& p) {
  const double v = p->value.v[0];
  if (!(v > 0.0) || !(v < 1.0)) {
    throw std::runtime_error("discriminator output left (0,1)");
  }
}

}  // namespace

ad::Var gen_loss(const Discriminator& d, std::span<const ad::Var> student_rois) {
  if (student_rois.empty()) throw std::invalid_argument("gen_loss: empty batch");
  ad::Var total = ad::scalar_constant(0.0);
  for (const auto& roi : student_rois) {
    const ad::Var p = d.probability(roi);
    check_probability(p);
    total = ad::sub(total, ad::log_(p));
  }
  return total;
}

ad::Var dis_loss(const Discriminator& d, std::span<const ad::Var> teacher_rois,
                 std::span<const ad::Var> student_rois) {
  if (teacher_rois.size() != student_rois.size() || teacher_rois.empty()) {
    throw std::invalid_argument("dis_loss: batch size mismatch");
  }
  ad::Var total = ad::scalar_constant(0.0);
  for (size_t i = 0; i < teacher_rois.size(); ++i) {
    const ad::Var pt = d.probability(teacher_rois[i]);
    const ad::Var ps = d.probability(student_rois[i]);
    check_probability(pt);
    check_probability(ps);
    total = ad::sub(total, ad::log_(pt));
    total = ad::sub(total, ad::log_(ad::add_scalar(ad::neg(ps), 1.0)));
  }
  return total;
}

namespace {

ad::Var mean_l1(std::span<const ad::Var> a, std::span<const ad::Var> b,
                const char* what) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument(std::string(what) + ": batch mismatch");
  }
  ad::Var total = ad::scalar_constant(0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    if (!a[i]->value.same_shape(b[i]->value)) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
    total = ad::add(total, ad::abs_sum(ad::sub(a[i], b[i])));
  }
  return ad::scale(total, 1.0 / static_cast<double>(a.size()));
}

}  // namespace

ad::Var consistency_loss(std::span<const ad::Var> student_rois,
                         std::span<const ad::Var> teacher_rois) {
  return mean_l1(student_rois, teacher_rois, "consistency_loss");
}

ad::Var score_distill_loss(std::span<const ad::Var> student_scores,
                           std::span<const ad::Var> teacher_scores) {
  return mean_l1(student_scores, teacher_scores, "score_distill_loss");
}

ad::Var iou_distill_loss(std::span<const ad::Var> student_ious,
                         std::span<const ad::Var> teacher_ious) {
  for (const auto& v : student_ious) {
    if (v->value.size() != 1) {
      throw std::invalid_argument("iou_distill_loss: entries must be scalar");
    }
  }
  return mean_l1(student_ious, teacher_ious, "iou_distill_loss");
}

double total_loss(const LossBundle& parts, const DistillGate& gate,
                  const LossWeights& w) {
  const double components[] = {parts.cls,  parts.iou,     parts.gen,
                               parts.cons, parts.score_d, parts.iou_d,
                               gate.rdm_iou, gate.rdm_cls};
  for (double c : components) {
    if (!std::isfinite(c)) throw std::invalid_argument("total_loss: non-finite component");
  }
  return w.alpha * parts.cls + w.beta * parts.iou + gate.rdm_iou * parts.gen +
         w.gamma * gate.rdm_iou * parts.cons + w.delta * gate.rdm_cls * parts.score_d +
         w.eta * gate.rdm_iou * parts.iou_d;
}

// ---- trainer ----

DistillTrainer::DistillTrainer(const track::TrackerNet* teacher,
                               track::TrackerNet& student,
                               Discriminator& discriminator,
                               const TrainStepConfig& cfg,
                               const OptimizerConfig& opt, std::uint64_t seed)
    : teacher_(teacher),
      student_(student),
      disc_(discriminator),
      cfg_(cfg),
      opt_cfg_(opt),
      degrader_([&] {
        degrade::DegradeSpec spec = cfg.degrade_spec;
        spec.seed ^= seed;
        return spec;
      }()),
      adam_backbone_(opt.lr_backbone),
      adam_cls_(opt.lr_classifier),
      adam_iou_(opt.lr_regressor),
      adam_disc_(opt.lr_discriminator) {
  if (cfg.degrade_spec.network_input_size != student.config().net_input) {
    throw std::invalid_argument(
        "DistillTrainer: degrade network_input_size must match the student input");
  }
  if (teacher_ && teacher_->config().net_input != student.config().net_input) {
    throw std::invalid_argument("DistillTrainer: teacher/student input mismatch");
  }
  const int bins = student.config().iou.roi_bins;
  const int roi_dim = student.config().backbone.out_channels * bins * bins;
  if (discriminator.config().input_dim != roi_dim) {
    throw std::invalid_argument("DistillTrainer: discriminator input dim mismatch");
  }
}

double DistillTrainer::lr_scale() const {
  const int stage = opt_cfg_.lr_decay_every > 0 ? epoch_ / opt_cfg_.lr_decay_every : 0;
  return std::pow(opt_cfg_.lr_decay, static_cast<double>(stage));
}

namespace {

using track::LabelMap;
using track::SampleMemory;
using track::TrainSample;

BoundingBox to_feature_coords(const BoundingBox& b, int stride) {
  return {b.x / stride, b.y / stride, b.w / stride, b.h / stride};
}

ad::Var const_box(const BoundingBox& b) {
  return ad::constant(ad::Tensor({4}, {b.x, b.y, b.x2(), b.y2()}));
}

struct NetForward {
  std::vector<ad::Var> train_bb, train_cls;  // train_bb[0] may be on tape
  std::vector<ad::Var> test_bb, test_cls;
  track::OptimizeResult fit;
  ad::Var modulation;
};

// Forward one network over a sampled batch. With `tape` false everything is
// detached; with `tape` true the test images and the first train image build
// graph while the filter fit stays detached.
NetForward forward_net(const track::TrackerNet& net, const TrainStepConfig& cfg,
                       const std::vector<Image>& train_images,
                       const std::vector<Image>& test_images,
                       const std::vector<BoundingBox>& train_boxes, bool tape) {
  const int stride = track::Backbone::kStride;
  NetForward fw;
  for (size_t i = 0; i < train_images.size(); ++i) {
    const bool on_tape = tape && i == 0;
    std::optional<ad::NoGradGuard> guard;
    if (!on_tape) guard.emplace();
    const ad::Var bb =
        net.backbone_features(ad::constant(ad::image_to_tensor(train_images[i])));
    fw.train_bb.push_back(bb);
    fw.train_cls.push_back(net.classification_features(bb, train_images[i]));
  }
  for (const Image& img : test_images) {
    std::optional<ad::NoGradGuard> guard;
    if (!tape) guard.emplace();
    const ad::Var bb = net.backbone_features(ad::constant(ad::image_to_tensor(img)));
    fw.test_bb.push_back(bb);
    fw.test_cls.push_back(net.classification_features(bb, img));
  }

  // Detached online fit on the train split.
  SampleMemory memory(static_cast<int>(train_images.size()));
  const int fh = fw.train_cls[0]->value.dim(1);
  const int fwd = fw.train_cls[0]->value.dim(2);
  for (size_t i = 0; i < train_images.size(); ++i) {
    const BoundingBox fb = to_feature_coords(train_boxes[i], stride);
    TrainSample sample;
    sample.features = fw.train_cls[i]->value;
    sample.label = track::gaussian_label(fh, fwd, fb.cx(), fb.cy(),
                                         net.config().label_sigma);
    memory.add(std::move(sample));
  }
  track::TargetModel init;
  init.lambda = net.config().filter_lambda;
  init.filter = ad::Tensor({net.classifier_channels(), net.config().filter_size,
                            net.config().filter_size});
  fw.fit = track::optimize_target_model(init, memory, cfg.filter_iters);

  // Modulation from the first train frame (tape-aware).
  {
    std::optional<ad::NoGradGuard> guard;
    if (!tape) guard.emplace();
    fw.modulation = net.iou_head().reference(
        fw.train_bb[0], to_feature_coords(train_boxes[0], stride));
  }
  return fw;
}

}  // namespace

TrainStepStats DistillTrainer::step(const VideoSample& batch) {
  TrainStepStats stats;
  if (batch.train_images.empty() || batch.test_images.empty()) {
    throw std::invalid_argument("train step: empty batch");
  }
  const int stride = track::Backbone::kStride;
  const auto& netcfg = student_.config();

  // Degradation factor from the batch's original-coordinate ground truth.
  const double d =
      degrade::batch_scale_factor(batch.annotation_boxes, cfg_.degrade_spec);

  std::vector<Image> degraded_train, degraded_test;
  degraded_train.reserve(batch.train_images.size());
  degraded_test.reserve(batch.test_images.size());
  if (cfg_.degrade_inputs) {
    for (const auto& img : batch.train_images) degraded_train.push_back(degrader_(img, d));
    for (const auto& img : batch.test_images) degraded_test.push_back(degrader_(img, d));
  } else {
    degraded_train = batch.train_images;
    degraded_test = batch.test_images;
  }

  // ---- teacher (frozen, undegraded inputs) ----
  const bool need_teacher = teacher_ != nullptr && cfg_.flags.any();
  double teacher_cls = 0.0, teacher_iou = 0.0;
  std::vector<ad::Tensor> t_rois, t_score_maps;
  std::vector<double> t_iou_scores;
  std::optional<NetForward> tf;
  if (need_teacher) {
    ad::NoGradGuard frozen;
    tf = forward_net(*teacher_, cfg_, batch.train_images, batch.test_images,
                     batch.train_boxes, /*tape=*/false);
  }

  // ---- student (trainable, degraded inputs) ----
  NetForward sf = forward_net(student_, cfg_, degraded_train, degraded_test,
                              batch.train_boxes, /*tape=*/true);

  const int fh = sf.test_cls[0]->value.dim(1);
  const int fwd = sf.test_cls[0]->value.dim(2);

  std::vector<LabelMap> test_labels;
  for (const auto& b : batch.test_boxes) {
    const BoundingBox fb = to_feature_coords(b, stride);
    test_labels.push_back(track::gaussian_label(fh, fwd, fb.cx(), fb.cy(),
                                                netcfg.label_sigma));
  }

  // Classification loss over the detached filter iterates.
  const ad::Var l_cls = track::classification_loss_ad(
      sf.fit.iterates, sf.test_cls, test_labels);

  // KL regression loss on the candidate grid around each test ground truth.
  auto kl_for = [&](const track::TrackerNet& net, const NetForward& fw,
                    bool tape) -> ad::Var {
    ad::Var total = ad::scalar_constant(0.0);
    for (size_t i = 0; i < batch.test_boxes.size(); ++i) {
      const BoundingBox fb = to_feature_coords(batch.test_boxes[i], stride);
      const track::BoxGrid grid = track::make_box_grid(
          fb, cfg_.kl_grid_res, cfg_.kl_center_range, cfg_.kl_log_range);
      const auto density = track::gaussian_box_label_density(grid, cfg_.kl_label_sigma);
      std::vector<ad::Var> scores;
      scores.reserve(grid.boxes.size());
      {
        std::optional<ad::NoGradGuard> guard;
        if (!tape) guard.emplace();
        for (const auto& cand : grid.boxes) {
          scores.push_back(net.iou_head().score(fw.test_bb[i], fw.modulation,
                                                const_box(cand)));
        }
      }
      const ad::Var stacked = ad::stack_scalars(scores);
      total = ad::add(total,
                      track::kl_regression_loss_ad(stacked, density, grid.cell_volume));
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch.test_boxes.size()));
  };

  const ad::Var l_iou = kl_for(student_, sf, /*tape=*/true);

  // Student confidence values at the ground truth (IoU distillation).
  std::vector<ad::Var> s_iou_scores;
  for (size_t i = 0; i < batch.test_boxes.size(); ++i) {
    const BoundingBox fb = to_feature_coords(batch.test_boxes[i], stride);
    s_iou_scores.push_back(student_.iou_head().score(sf.test_bb[i], sf.modulation,
                                                     const_box(fb)));
  }

  if (need_teacher) {
    ad::NoGradGuard frozen;
    teacher_iou = kl_for(*teacher_, *tf, /*tape=*/false)->value.v[0];
    // Evaluated through the same op sequence as the student's tape so that
    // equal inputs yield bitwise-equal losses (the rdm boundary case).
    teacher_cls = track::classification_loss_ad(tf->fit.iterates, tf->test_cls,
                                                test_labels)->value.v[0];
    for (size_t i = 0; i < batch.test_boxes.size(); ++i) {
      const BoundingBox fb = to_feature_coords(batch.test_boxes[i], stride);
      t_rois.push_back(ad::prpool(tf->test_bb[i], const_box(fb),
                                  netcfg.iou.roi_bins)->value);
      t_score_maps.push_back(track::score_map(tf->test_cls[i]->value,
                                              tf->fit.model.filter));
      t_iou_scores.push_back(teacher_->iou_head().score(
          tf->test_bb[i], tf->modulation, const_box(fb))->value.v[0]);
    }
  }

  stats.bundle.cls = l_cls->value.v[0];
  stats.bundle.iou = l_iou->value.v[0];

  // Gates from the plain loss values; constants on the tape.
  if (need_teacher) {
    stats.gate.rdm_cls = rdm(stats.bundle.cls, teacher_cls);
    stats.gate.rdm_iou = rdm(stats.bundle.iou, teacher_iou);
  }

  // Student-side distillation terms.
  std::vector<ad::Var> s_rois;
  std::vector<ad::Var> s_score_maps;
  for (size_t i = 0; i < batch.test_boxes.size(); ++i) {
    const BoundingBox fb = to_feature_coords(batch.test_boxes[i], stride);
    s_rois.push_back(ad::prpool(sf.test_bb[i], const_box(fb), netcfg.iou.roi_bins));
    const int k = netcfg.filter_size;
    ad::Var sm = ad::conv(sf.test_cls[i],
                          ad::constant(ad::Tensor({1, student_.classifier_channels(), k, k},
                                                  sf.fit.model.filter.v)),
                          nullptr, 1, k / 2);
    s_score_maps.push_back(ad::reshape(sm, {fh, fwd}));
  }

  ad::Var l_gen = ad::scalar_constant(0.0);
  ad::Var l_cons = ad::scalar_constant(0.0);
  ad::Var l_score_d = ad::scalar_constant(0.0);
  ad::Var l_iou_d = ad::scalar_constant(0.0);

  if (need_teacher) {
    std::vector<ad::Var> t_roi_vars, t_map_vars, t_iou_vars;
    for (const auto& t : t_rois) t_roi_vars.push_back(ad::constant(t));
    for (const auto& t : t_score_maps) t_map_vars.push_back(ad::constant(t));
    for (double t : t_iou_scores) t_iou_vars.push_back(ad::scalar_constant(t));

    if (cfg_.flags.feature) {
      l_gen = gen_loss(disc_, s_rois);
      l_cons = consistency_loss(s_rois, t_roi_vars);
    }
    if (cfg_.flags.score) {
      l_score_d = score_distill_loss(s_score_maps, t_map_vars);
    }
    if (cfg_.flags.iou) {
      l_iou_d = iou_distill_loss(s_iou_scores, t_iou_vars);
    }
  }

  stats.bundle.gen = l_gen->value.v[0];
  stats.bundle.cons = l_cons->value.v[0];
  stats.bundle.score_d = l_score_d->value.v[0];
  stats.bundle.iou_d = l_iou_d->value.v[0];

  // Weighted total on the tape; gates multiply as detached constants.
  const LossWeights& w = cfg_.weights;
  ad::Var total = ad::add(ad::scale(l_cls, w.alpha), ad::scale(l_iou, w.beta));
  if (need_teacher && cfg_.flags.feature) {
    total = ad::add(total, ad::scale(l_gen, stats.gate.rdm_iou));
    total = ad::add(total, ad::scale(l_cons, w.gamma * stats.gate.rdm_iou));
  }
  if (need_teacher && cfg_.flags.score) {
    total = ad::add(total, ad::scale(l_score_d, w.delta * stats.gate.rdm_cls));
  }
  if (need_teacher && cfg_.flags.iou) {
    total = ad::add(total, ad::scale(l_iou_d, w.eta * stats.gate.rdm_iou));
  }
  stats.bundle.total = total->value.v[0];

  if (!std::isfinite(stats.bundle.total)) {
    stats.applied = false;
    stats.diagnostic = "non-finite total loss; step aborted";
    return stats;
  }

  // Student update from the total objective.
  auto all_student = student_.all_params();
  ad::zero_grads(all_student);
  ad::zero_grads(disc_.params());
  ad::backward(total);
  const double scale = lr_scale();
  adam_backbone_.step(student_.backbone_params(), scale);
  adam_cls_.step(student_.classifier_params(), scale);
  adam_iou_.step(student_.iou_params(), scale);
  // Gradients that reached the discriminator through L_gen are discarded;
  // its parameters only ever follow L_dis.
  ad::zero_grads(disc_.params());

  // Discriminator update on detached features, same step.
  if (need_teacher && cfg_.flags.feature) {
    std::vector<ad::Var> t_in, s_in;
    for (const auto& t : t_rois) t_in.push_back(ad::constant(t));
    for (const auto& s : s_rois) s_in.push_back(ad::constant(s->value));
    const ad::Var l_dis = dis_loss(disc_, t_in, s_in);
    stats.bundle.dis = l_dis->value.v[0];
    if (std::isfinite(stats.bundle.dis)) {
      ad::backward(l_dis);
      adam_disc_.step(disc_.params(), scale);
    }
  }

  stats.applied = true;
  return stats;
}

VideoSample sample_video(const synth::SynthSequence& video, const TrainStepConfig& cfg,
                         int net_input, Rng& rng) {
  const int frame_count = static_cast<int>(video.frames.size());
  const int need = cfg.frames_train + cfg.frames_test;
  if (frame_count < need) {
    throw std::invalid_argument("sample_video: sequence shorter than the batch");
  }
  std::vector<int> picks;
  while (static_cast<int>(picks.size()) < need) {
    const int idx = rng.uniform_int(frame_count);
    if (std::find(picks.begin(), picks.end(), idx) == picks.end()) {
      picks.push_back(idx);
    }
  }
  VideoSample sample;
  for (int i = 0; i < need; ++i) {
    const int idx = picks[static_cast<size_t>(i)];
    const Image& frame = video.frames[static_cast<size_t>(idx)];
    const BoundingBox& gt = video.record.annotations[static_cast<size_t>(idx)].box;
    const double side = cfg.crop_context * std::sqrt(gt.w * gt.h) *
                        std::exp(rng.uniform(-cfg.jitter_log_scale, cfg.jitter_log_scale));
    const double cx = gt.cx() + rng.uniform(-cfg.jitter_center, cfg.jitter_center) * side;
    const double cy = gt.cy() + rng.uniform(-cfg.jitter_center, cfg.jitter_center) * side;
    Image crop = crop_window(frame, cx, cy, side, net_input);
    const double scale = static_cast<double>(net_input) / side;
    const BoundingBox in_crop{(gt.x - (cx - 0.5 * side)) * scale,
                              (gt.y - (cy - 0.5 * side)) * scale, gt.w * scale,
                              gt.h * scale};
    sample.annotation_boxes.push_back(gt);
    if (i < cfg.frames_train) {
      sample.train_images.push_back(std::move(crop));
      sample.train_boxes.push_back(in_crop);
    } else {
      sample.test_images.push_back(std::move(crop));
      sample.test_boxes.push_back(in_crop);
    }
  }
  return sample;
}

TrainOutcome train(const track::TrackerNet* teacher, track::TrackerNet& student,
                   Discriminator& discriminator,
                   std::span<const synth::SynthSequence> videos,
                   const TrainConfig& cfg) {
  if (videos.empty()) throw std::invalid_argument("train: no videos");
  DistillTrainer trainer(teacher, student, discriminator, cfg.step, cfg.optimizer,
                         cfg.seed);
  Rng sample_rng(cfg.seed ^ 0x7261696eULL);
  TrainOutcome outcome;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    trainer.set_epoch(epoch);
    double acc = 0.0;
    int counted = 0;
    for (int v = 0; v < cfg.videos_per_epoch; ++v) {
      const auto& video = videos[static_cast<size_t>(
          sample_rng.uniform_int(static_cast<int>(videos.size())))];
      const VideoSample batch =
          sample_video(video, cfg.step, student.config().net_input, sample_rng);
      const TrainStepStats stats = trainer.step(batch);
      outcome.history.push_back(stats.bundle);
      ++outcome.steps;
      if (stats.applied) {
        acc += stats.bundle.total;
        ++counted;
      } else {
        ++outcome.aborted_steps;
      }
    }
    outcome.epoch_mean_total.push_back(counted > 0 ? acc / counted : 0.0);
  }
  return outcome;
}

}  // namespace tinytrack::distill
