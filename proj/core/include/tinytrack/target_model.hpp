#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "tinytrack/autodiff.hpp"

namespace tinytrack::track {

using ScoreMap = ad::Tensor;  // [H, W] classification response

/// Gaussian regression label over feature cells; peaks at the cell holding
/// (cx, cy). Coordinates use the (i + 0.5) cell-center convention.
struct LabelMap {
  ad::Tensor values;  // [H, W]
  double cx = 0.0;
  double cy = 0.0;
  double sigma = 1.0;
};

LabelMap gaussian_label(int h, int w, double cx, double cy, double sigma);

/// The online-learned convolutional filter and its regularization weight.
struct TargetModel {
  ad::Tensor filter;  // [C, k, k]
  double lambda = 0.05;
};

struct TrainSample {
  ad::Tensor features;  // [C, H, W]
  LabelMap label;
  double weight = 1.0;
};

/// Bounded store of (features, label) pairs with positive importance
/// weights. The first `protected_count` entries (the initial augmented set)
/// are never evicted; beyond capacity the oldest online sample goes first.
class SampleMemory {
 public:
  explicit SampleMemory(int capacity, int protected_count = 0)
      : capacity_(capacity), protected_count_(protected_count) {
    if (capacity <= 0) throw std::invalid_argument("SampleMemory: capacity must be > 0");
  }

  void add(TrainSample sample);
  std::span<const TrainSample> entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }

 private:
  int capacity_;
  int protected_count_;
  std::vector<TrainSample> entries_;
};

constexpr double kHingeMaskThreshold = 0.05;

/// Correlation of features with the filter, 'same' padding: [C,H,W] -> [H,W].
ScoreMap score_map(const ad::Tensor& features, const ad::Tensor& filter);

/// Hinge-like residual (plain-tensor version of the ad op): score - label in
/// the target region, max(0, score) in the background.
ad::Tensor residual_hinge(const ScoreMap& score, const LabelMap& label,
                          double mask_threshold = kHingeMaskThreshold);

/// Weighted mean of squared residual norms plus ||lambda f||^2. With unit
/// weights this is exactly the discriminative model-fitting objective.
double model_loss(const TargetModel& model, const SampleMemory& memory,
                  double mask_threshold = kHingeMaskThreshold);

/// Same objective built on the tape, for gradient checks and training.
ad::Var model_loss_ad(const ad::Var& filter, const SampleMemory& memory,
                      double lambda, double mask_threshold = kHingeMaskThreshold);

struct OptimizeResult {
  TargetModel model;
  std::vector<double> loss_history;      // length n_iter + 1, monotone non-increasing
  std::vector<ad::Tensor> iterates;      // f^(0) .. f^(n_iter)
};

class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Steepest descent with the exact step length of the local quadratic (the
/// hinge's active set is frozen per step) plus backtracking, so the loss
/// sequence never increases. Throws OptimizationError if a step cannot be
/// made non-increasing within tolerance.
OptimizeResult optimize_target_model(const TargetModel& init,
                                     const SampleMemory& memory, int n_iter,
                                     double mask_threshold = kHingeMaskThreshold);

/// Offline classification objective over the filter iterates: the summation
/// runs over iterates 0..N while the normalizer is N, exactly as the
/// training objective is written (see README notes on the index range).
double classification_loss(std::span<const ad::Tensor> filter_iterates,
                           std::span<const TrainSample> test_set,
                           double mask_threshold = kHingeMaskThreshold);

/// Tape version: gradients flow into the test features; the iterates stay
/// constant (the online fit is not differentiated through).
ad::Var classification_loss_ad(std::span<const ad::Tensor> filter_iterates,
                               std::span<const ad::Var> test_features,
                               std::span<const LabelMap> test_labels,
                               double mask_threshold = kHingeMaskThreshold);

}  // namespace tinytrack::track
