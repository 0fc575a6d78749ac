#include "tinytrack/iou_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tinytrack/rng.hpp"

namespace tinytrack::track {

BoxParam to_param(const BoundingBox& box) {
  if (!box.valid()) throw std::invalid_argument("to_param: invalid box");
  return {box.cx(), box.cy(), std::log(box.w), std::log(box.h)};
}

BoundingBox to_box(const BoxParam& p) {
  const double w = std::exp(p.lw);
  const double h = std::exp(p.lh);
  return BoundingBox::from_center(p.cx, p.cy, w, h);
}

BoxGrid make_box_grid(const BoundingBox& center, int res_per_dim,
                      double center_range, double log_range) {
  if (res_per_dim < 2) throw std::invalid_argument("make_box_grid: resolution must be >= 2");
  const BoxParam c = to_param(center);
  const double scale = std::sqrt(center.w * center.h);
  const double pos_step = 2.0 * center_range / (res_per_dim - 1);
  const double log_step = 2.0 * log_range / (res_per_dim - 1);

  BoxGrid grid;
  grid.cell_volume = pos_step * pos_step * log_step * log_step;
  grid.boxes.reserve(static_cast<size_t>(res_per_dim) * res_per_dim * res_per_dim *
                     res_per_dim);
  for (int a = 0; a < res_per_dim; ++a) {
    const double dcx = -center_range + a * pos_step;
    for (int b = 0; b < res_per_dim; ++b) {
      const double dcy = -center_range + b * pos_step;
      for (int cidx = 0; cidx < res_per_dim; ++cidx) {
        const double dlw = -log_range + cidx * log_step;
        for (int d = 0; d < res_per_dim; ++d) {
          const double dlh = -log_range + d * log_step;
          BoxParam p{c.cx + dcx * scale, c.cy + dcy * scale, c.lw + dlw, c.lh + dlh};
          grid.boxes.push_back(to_box(p));
          grid.offsets.push_back({dcx, dcy, dlw, dlh});
        }
      }
    }
  }
  return grid;
}

IoUHead::IoUHead(const IoUHeadConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  const int roi_dim = cfg.feat_channels * cfg.roi_bins * cfg.roi_bins;
  // Reference and test branches start from the same projection and the
  // output weights start at 1/hidden, so an untrained head scores candidates
  // by feature-space correlation with the first-frame reference. Training
  // moves all of these freely.
  const ad::Tensor shared_proj = ad::random_init({cfg.hidden, roi_dim}, roi_dim, rng);
  params_.push_back({"iou.w_ref", ad::leaf(shared_proj)});
  params_.push_back({"iou.b_ref", ad::leaf(ad::Tensor({cfg.hidden}))});
  params_.push_back({"iou.w_test", ad::leaf(shared_proj)});
  params_.push_back({"iou.b_test", ad::leaf(ad::Tensor({cfg.hidden}))});
  params_.push_back({"iou.w_out", ad::leaf(ad::Tensor::full({1, cfg.hidden}, 1.0))});
  params_.push_back({"iou.b_out", ad::leaf(ad::Tensor({1}))});
}

void IoUHead::copy_params_from(const IoUHead& other) {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("IoUHead: incompatible architectures");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    params_[i].var->value = other.params_[i].var->value;
  }
}

ad::Var IoUHead::reference(const ad::Var& feat, const BoundingBox& box) const {
  const ad::Var box_var =
      ad::constant(ad::Tensor({4}, {box.x, box.y, box.x2(), box.y2()}));
  ad::Var roi = ad::prpool(feat, box_var, cfg_.roi_bins);
  roi = ad::reshape(roi, {static_cast<int>(roi->value.size())});
  const ad::Var hidden = ad::linear(roi, params_[0].var, params_[1].var);
  return ad::l2_normalize(ad::leaky_relu(hidden, cfg_.leaky_slope));
}

ad::Var IoUHead::score(const ad::Var& feat, const ad::Var& modulation,
                       const ad::Var& box) const {
  ad::Var roi = ad::prpool(feat, box, cfg_.roi_bins);
  roi = ad::reshape(roi, {static_cast<int>(roi->value.size())});
  ad::Var hidden = ad::linear(roi, params_[2].var, params_[3].var);
  hidden = ad::l2_normalize(ad::leaky_relu(hidden, cfg_.leaky_slope));
  // With the shared-projection initialization this starts as the cosine
  // similarity (scaled by w_out) between the candidate and the reference ROI.
  const ad::Var modulated = ad::mul(hidden, modulation);
  return ad::linear(modulated, params_[4].var, params_[5].var);
}

double IoUHead::score_value(const ad::Tensor& feat, const ad::Tensor& modulation,
                            const BoundingBox& box) const {
  ad::NoGradGuard inference;
  const ad::Var box_var =
      ad::constant(ad::Tensor({4}, {box.x, box.y, box.x2(), box.y2()}));
  return score(ad::constant(feat), ad::constant(modulation), box_var)->value.v[0];
}

std::vector<double> predictive_density(std::span<const double> scores,
                                       double cell_volume) {
  if (scores.empty()) throw std::invalid_argument("predictive_density: empty grid");
  if (!(cell_volume > 0.0)) {
    throw std::invalid_argument("predictive_density: cell volume must be positive");
  }
  double m = scores[0];
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("predictive_density: non-finite score");
    m = std::max(m, s);
  }
  double z = 0.0;
  std::vector<double> density(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    density[i] = std::exp(scores[i] - m);
    z += density[i];
  }
  const double norm = 1.0 / (z * cell_volume);
  for (auto& p : density) p *= norm;
  return density;
}

std::vector<double> gaussian_box_label_density(const BoxGrid& grid, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_box_label_density: degenerate label distribution");
  }
  std::vector<double> density(grid.offsets.size());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double mass = 0.0;
  for (size_t i = 0; i < grid.offsets.size(); ++i) {
    const auto& o = grid.offsets[i];
    const double r2 = o[0] * o[0] + o[1] * o[1] + o[2] * o[2] + o[3] * o[3];
    density[i] = std::exp(-r2 * inv);
    mass += density[i];
  }
  if (!(mass > 0.0)) {
    throw std::invalid_argument("gaussian_box_label_density: degenerate label distribution");
  }
  const double norm = 1.0 / (mass * grid.cell_volume);
  for (auto& p : density) p *= norm;
  return density;
}

double kl_regression_loss(std::span<const double> scores,
                          std::span<const double> label_density,
                          double cell_volume) {
  if (scores.size() != label_density.size() || scores.empty()) {
    throw std::invalid_argument("kl_regression_loss: grid mismatch");
  }
  double m = scores[0];
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("kl_regression_loss: non-finite score");
    m = std::max(m, s);
  }
  double z = 0.0;
  double cross = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    z += std::exp(scores[i] - m);
    cross += scores[i] * label_density[i] * cell_volume;
  }
  return m + std::log(z * cell_volume) - cross;
}

ad::Var kl_regression_loss_ad(const ad::Var& scores,
                              std::span<const double> label_density,
                              double cell_volume) {
  if (static_cast<size_t>(scores->value.size()) != label_density.size()) {
    throw std::invalid_argument("kl_regression_loss_ad: grid mismatch");
  }
  ad::Tensor weights(scores->value.shape);
  for (size_t i = 0; i < label_density.size(); ++i) {
    weights.v[i] = label_density[i] * cell_volume;
  }
  const ad::Var log_z = ad::add_scalar(ad::logsumexp(scores), std::log(cell_volume));
  return ad::sub(log_z, ad::dot(scores, weights));
}

double label_entropy_term(std::span<const double> label_density,
                          double cell_volume) {
  double acc = 0.0;
  for (double p : label_density) {
    if (p > 0.0) acc += p * std::log(p) * cell_volume;
  }
  return acc;
}

BoundingBox refine_box(const IoUHead& head, const ad::Tensor& feat,
                       const ad::Tensor& modulation, const BoundingBox& start,
                       int steps, double step_size, double* final_score,
                       double max_shift, double max_log_scale) {
  BoxParam p = to_param(start);
  const BoxParam origin = p;
  const double scale = std::sqrt(start.w * start.h);
  const ad::Var feat_var = ad::constant(feat);
  const ad::Var mod_var = ad::constant(modulation);

  auto score_at = [&](const BoxParam& q, ad::Tensor* corner_grad) {
    const BoundingBox b = to_box(q);
    ad::Var box_var = ad::leaf(ad::Tensor({4}, {b.x, b.y, b.x2(), b.y2()}));
    const ad::Var s = head.score(feat_var, mod_var, box_var);
    if (corner_grad) {
      ad::backward(s);
      *corner_grad = box_var->has_grad() ? box_var->grad : ad::Tensor({4});
    }
    return s->value.v[0];
  };

  double current = score_at(p, nullptr);
  double step = step_size;
  for (int it = 0; it < steps; ++it) {
    ad::Tensor cg({4});
    score_at(p, &cg);
    // Chain corner gradients into (cx, cy, lw, lh); position axes move in
    // units of the reference scale to match the grid parameterization.
    const double w = std::exp(p.lw), h = std::exp(p.lh);
    const double g_cx = (cg.v[0] + cg.v[2]) * scale;
    const double g_cy = (cg.v[1] + cg.v[3]) * scale;
    const double g_lw = 0.5 * w * (cg.v[2] - cg.v[0]);
    const double g_lh = 0.5 * h * (cg.v[3] - cg.v[1]);
    const double gnorm = std::sqrt(g_cx * g_cx + g_cy * g_cy + g_lw * g_lw + g_lh * g_lh);
    if (gnorm < 1e-12) break;

    bool accepted = false;
    for (int halving = 0; halving < 12 && !accepted; ++halving) {
      BoxParam candidate{p.cx + step * g_cx / gnorm * scale,
                         p.cy + step * g_cy / gnorm * scale,
                         p.lw + step * g_lw / gnorm,
                         p.lh + step * g_lh / gnorm};
      // Clamp into the trust region around the starting box.
      candidate.cx = std::clamp(candidate.cx, origin.cx - max_shift * scale,
                                origin.cx + max_shift * scale);
      candidate.cy = std::clamp(candidate.cy, origin.cy - max_shift * scale,
                                origin.cy + max_shift * scale);
      candidate.lw = std::clamp(candidate.lw, origin.lw - max_log_scale,
                                origin.lw + max_log_scale);
      candidate.lh = std::clamp(candidate.lh, origin.lh - max_log_scale,
                                origin.lh + max_log_scale);
      const double cand_score = score_at(candidate, nullptr);
      if (cand_score >= current) {
        p = candidate;
        current = cand_score;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  if (final_score) *final_score = current;
  return to_box(p);
}

}  // namespace tinytrack::track
