#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tinytrack/autodiff.hpp"
#include "tinytrack/box.hpp"

namespace tinytrack::track {

using RoiFeature = ad::Tensor;  // [C, bins, bins] pooled region features

/// Box candidates live in (cx, cy, log w, log h) space; the position axes
/// are normalized by the reference box scale so the grid is size-invariant.
struct BoxParam {
  double cx = 0.0;
  double cy = 0.0;
  double lw = 0.0;  // log width
  double lh = 0.0;  // log height
};

BoxParam to_param(const BoundingBox& box);
BoundingBox to_box(const BoxParam& p);

/// Uniform candidate grid around a center box. `offsets` stores the
/// normalized grid coordinates; `cell_volume` is the Riemann cell for
/// grid-sum approximations of the continuous integrals.
struct BoxGrid {
  std::vector<BoundingBox> boxes;
  std::vector<std::array<double, 4>> offsets;
  double cell_volume = 0.0;
};

BoxGrid make_box_grid(const BoundingBox& center, int res_per_dim,
                      double center_range = 0.5, double log_range = 0.35);

/// Modulated candidate scoring head: a reference branch pools the first
/// frame's ROI into a modulation vector, the test branch scores candidate
/// boxes; the score is differentiable in the candidate coordinates.
struct IoUHeadConfig {
  int feat_channels = 16;
  int roi_bins = 3;
  int hidden = 64;
  double leaky_slope = 0.1;
  std::uint64_t init_seed = 11;
};

class IoUHead {
 public:
  explicit IoUHead(const IoUHeadConfig& cfg);

  /// Modulation vector from the reference frame features and its box
  /// (feature coordinates).
  ad::Var reference(const ad::Var& feat, const BoundingBox& box) const;

  /// Confidence s(y, x) for one candidate box Var (x1,y1,x2,y2).
  ad::Var score(const ad::Var& feat, const ad::Var& modulation,
                const ad::Var& box) const;

  /// Convenience: plain score of a fixed box (no tape).
  double score_value(const ad::Tensor& feat, const ad::Tensor& modulation,
                     const BoundingBox& box) const;

  std::vector<ad::Param>& params() { return params_; }
  const std::vector<ad::Param>& params() const { return params_; }
  const IoUHeadConfig& config() const { return cfg_; }

  void copy_params_from(const IoUHead& other);

 private:
  IoUHeadConfig cfg_;
  std::vector<ad::Param> params_;  // w_ref, b_ref, w_test, b_test, w_out, b_out
};

/// exp(s) normalized by the grid-sum partition function; the returned
/// densities satisfy sum(p_i) * cell_volume == 1 up to rounding. Guarded by
/// max-subtraction; non-finite scores raise.
std::vector<double> predictive_density(std::span<const double> scores,
                                       double cell_volume);

/// Gaussian label density over the grid offsets, normalized so that
/// sum(p_i) * cell_volume == 1 (a proper discrete distribution on the grid).
std::vector<double> gaussian_box_label_density(const BoxGrid& grid, double sigma);

/// KL objective reduced by the constant label entropy:
/// log(sum exp(s) * dy) - sum(s * p_label * dy).
double kl_regression_loss(std::span<const double> scores,
                          std::span<const double> label_density,
                          double cell_volume);

/// Tape version over a stacked score vector.
ad::Var kl_regression_loss_ad(const ad::Var& scores,
                              std::span<const double> label_density,
                              double cell_volume);

/// Entropy term dropped by the reduction; loss + label_entropy_term is the
/// full (non-negative) divergence. Exposed for the Gibbs-inequality checks.
double label_entropy_term(std::span<const double> label_density,
                          double cell_volume);

/// Gradient ascent on the head's predicted score in (cx, cy, log w, log h)
/// space with step halving; the accepted score sequence never decreases.
/// `feat` and `modulation` are plain tensors (inference-time refinement).
/// The trust region caps how far refinement may move the box from `start`:
/// at most `max_shift` reference-scale units of center motion and
/// `max_log_scale` of log-size change per axis.
BoundingBox refine_box(const IoUHead& head, const ad::Tensor& feat,
                       const ad::Tensor& modulation, const BoundingBox& start,
                       int steps = 10, double step_size = 1.0,
                       double* final_score = nullptr, double max_shift = 1.0,
                       double max_log_scale = 0.4);

}  // namespace tinytrack::track
