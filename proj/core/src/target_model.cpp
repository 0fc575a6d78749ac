#include "tinytrack/target_model.hpp"

#include <algorithm>
#include <cmath>

namespace tinytrack::track {

LabelMap gaussian_label(int h, int w, double cx, double cy, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_label: sigma must be > 0");
  LabelMap label;
  label.values = ad::Tensor({h, w});
  label.cx = cx;
  label.cy = cy;
  label.sigma = sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5) - cx;
      const double dy = (y + 0.5) - cy;
      label.values.v[static_cast<size_t>(y) * w + x] =
          std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return label;
}

void SampleMemory::add(TrainSample sample) {
  if (!(sample.weight > 0.0)) {
    throw std::invalid_argument("SampleMemory: weights must be positive");
  }
  if (static_cast<int>(entries_.size()) < capacity_) {
    entries_.push_back(std::move(sample));
    return;
  }
  const size_t first_evictable = static_cast<size_t>(
      std::min(protected_count_, static_cast<int>(entries_.size()) - 1));
  entries_.erase(entries_.begin() + static_cast<long>(first_evictable));
  entries_.push_back(std::move(sample));
}

namespace {

std::vector<int> filter4_shape(const ad::Tensor& filter) {
  if (filter.rank() != 3) throw std::invalid_argument("target model filter must be [C,k,k]");
  if (filter.dim(1) != filter.dim(2) || filter.dim(1) % 2 == 0) {
    throw std::invalid_argument("target model filter must be square with odd size");
  }
  return {1, filter.dim(0), filter.dim(1), filter.dim(2)};
}

ad::Tensor as4(const ad::Tensor& filter) {
  return ad::Tensor(filter4_shape(filter), filter.v);
}

}  // namespace

ScoreMap score_map(const ad::Tensor& features, const ad::Tensor& filter) {
  const ad::Tensor f4 = as4(filter);
  const int pad = filter.dim(1) / 2;
  ad::Tensor out = ad::conv2d(features, f4, nullptr, 1, pad);
  return ad::Tensor({out.dim(1), out.dim(2)}, std::move(out.v));
}

ad::Tensor residual_hinge(const ScoreMap& score, const LabelMap& label,
                          double mask_threshold) {
  if (!score.same_shape(label.values)) {
    throw std::invalid_argument("residual_hinge: score/label shape mismatch");
  }
  ad::Tensor out = score;
  for (size_t i = 0; i < out.v.size(); ++i) {
    if (label.values.v[i] > mask_threshold) {
      out.v[i] = score.v[i] - label.values.v[i];
    } else {
      out.v[i] = std::max(0.0, score.v[i]);
    }
  }
  return out;
}

double model_loss(const TargetModel& model, const SampleMemory& memory,
                  double mask_threshold) {
  if (memory.empty()) throw std::invalid_argument("model_loss: empty memory");
  double acc = 0.0;
  double wsum = 0.0;
  for (const auto& sample : memory.entries()) {
    const ScoreMap s = score_map(sample.features, model.filter);
    const ad::Tensor r = residual_hinge(s, sample.label, mask_threshold);
    double norm2 = 0.0;
    for (double x : r.v) norm2 += x * x;
    acc += sample.weight * norm2;
    wsum += sample.weight;
  }
  double reg = 0.0;
  for (double x : model.filter.v) reg += x * x;
  return acc / wsum + model.lambda * model.lambda * reg;
}

ad::Var model_loss_ad(const ad::Var& filter, const SampleMemory& memory,
                      double lambda, double mask_threshold) {
  if (memory.empty()) throw std::invalid_argument("model_loss_ad: empty memory");
  const int k = filter->value.dim(1);
  const ad::Var f4 = ad::reshape(filter, filter4_shape(filter->value));
  ad::Var total = ad::scalar_constant(0.0);
  double wsum = 0.0;
  for (const auto& sample : memory.entries()) {
    ad::Var s = ad::conv(ad::constant(sample.features), f4, nullptr, 1, k / 2);
    s = ad::reshape(s, {s->value.dim(1), s->value.dim(2)});
    const ad::Var r = ad::hinge_residual(s, sample.label.values, mask_threshold);
    total = ad::add(total, ad::scale(ad::square_sum(r), sample.weight));
    wsum += sample.weight;
  }
  total = ad::scale(total, 1.0 / wsum);
  return ad::add(total, ad::scale(ad::square_sum(filter), lambda * lambda));
}

namespace {

// Gradient of the fitting objective at the current filter.
ad::Tensor fit_gradient(const TargetModel& model, const SampleMemory& memory,
                        double mask_threshold, double wsum) {
  ad::Tensor grad(model.filter.shape);
  const int pad = model.filter.dim(1) / 2;
  const std::vector<int> w_shape = filter4_shape(model.filter);
  for (const auto& sample : memory.entries()) {
    const ScoreMap s = score_map(sample.features, model.filter);
    ad::Tensor r = residual_hinge(s, sample.label, mask_threshold);
    ad::Tensor r3({1, r.dim(0), r.dim(1)}, std::move(r.v));
    const ad::Tensor gw =
        ad::conv2d_grad_weight(sample.features, r3, w_shape, 1, pad);
    const double scale = 2.0 * sample.weight / wsum;
    for (size_t i = 0; i < grad.v.size(); ++i) grad.v[i] += scale * gw.v[i];
  }
  const double reg = 2.0 * model.lambda * model.lambda;
  for (size_t i = 0; i < grad.v.size(); ++i) grad.v[i] += reg * model.filter.v[i];
  return grad;
}

// g^T H g for the quadratic model with the hinge active set frozen at the
// current point.
double curvature_along(const TargetModel& model, const SampleMemory& memory,
                       const ad::Tensor& g, double mask_threshold, double wsum) {
  double acc = 0.0;
  for (const auto& sample : memory.entries()) {
    const ScoreMap s = score_map(sample.features, model.filter);
    const ScoreMap q = score_map(sample.features, g);
    double norm2 = 0.0;
    for (size_t i = 0; i < q.v.size(); ++i) {
      const bool active = sample.label.values.v[i] > mask_threshold || s.v[i] > 0.0;
      if (active) norm2 += q.v[i] * q.v[i];
    }
    acc += 2.0 * sample.weight * norm2 / wsum;
  }
  double g2 = 0.0;
  for (double x : g.v) g2 += x * x;
  return acc + 2.0 * model.lambda * model.lambda * g2;
}

}  // namespace

OptimizeResult optimize_target_model(const TargetModel& init,
                                     const SampleMemory& memory, int n_iter,
                                     double mask_threshold) {
  if (memory.empty()) throw std::invalid_argument("optimize_target_model: empty memory");
  if (n_iter < 0) throw std::invalid_argument("optimize_target_model: n_iter < 0");
  OptimizeResult result;
  result.model = init;
  result.iterates.push_back(init.filter);
  double loss = model_loss(result.model, memory, mask_threshold);
  result.loss_history.push_back(loss);

  for (int iter = 0; iter < n_iter; ++iter) {
    const double wsum = [&] {
      double w = 0.0;
      for (const auto& s : memory.entries()) w += s.weight;
      return w;
    }();
    const ad::Tensor grad = fit_gradient(result.model, memory, mask_threshold, wsum);
    double g2 = 0.0;
    for (double x : grad.v) g2 += x * x;
    if (g2 <= 1e-300) {
      // Stationary point; the remaining iterates repeat the current filter.
      result.iterates.push_back(result.model.filter);
      result.loss_history.push_back(loss);
      continue;
    }
    const double curv =
        curvature_along(result.model, memory, grad, mask_threshold, wsum);
    double alpha = curv > 0.0 ? g2 / curv : 1.0;

    TargetModel candidate = result.model;
    double new_loss = loss;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      for (size_t i = 0; i < candidate.filter.v.size(); ++i) {
        candidate.filter.v[i] = result.model.filter.v[i] - alpha * grad.v[i];
      }
      new_loss = model_loss(candidate, memory, mask_threshold);
      if (std::isfinite(new_loss) && new_loss <= loss) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!std::isfinite(new_loss) || new_loss > loss + 1e-9) {
        throw OptimizationError("optimize_target_model: loss increased beyond tolerance");
      }
      candidate = result.model;
      new_loss = loss;
    }
    result.model = candidate;
    loss = new_loss;
    result.iterates.push_back(result.model.filter);
    result.loss_history.push_back(loss);
  }
  return result;
}

double classification_loss(std::span<const ad::Tensor> filter_iterates,
                           std::span<const TrainSample> test_set,
                           double mask_threshold) {
  if (test_set.empty()) throw std::invalid_argument("classification_loss: empty test set");
  if (filter_iterates.size() < 2) {
    throw std::invalid_argument(
        "classification_loss: need at least two iterates (the normalizer is the "
        "optimization iteration count)");
  }
  const double n_iter = static_cast<double>(filter_iterates.size() - 1);
  double acc = 0.0;
  for (const auto& filter : filter_iterates) {
    for (const auto& sample : test_set) {
      const ScoreMap s = score_map(sample.features, filter);
      const ad::Tensor r = residual_hinge(s, sample.label, mask_threshold);
      for (double x : r.v) acc += x * x;
    }
  }
  return acc / n_iter;
}

ad::Var classification_loss_ad(std::span<const ad::Tensor> filter_iterates,
                               std::span<const ad::Var> test_features,
                               std::span<const LabelMap> test_labels,
                               double mask_threshold) {
  if (test_features.empty() || test_features.size() != test_labels.size()) {
    throw std::invalid_argument("classification_loss_ad: bad test set");
  }
  if (filter_iterates.size() < 2) {
    throw std::invalid_argument("classification_loss_ad: need at least two iterates");
  }
  ad::Var total = ad::scalar_constant(0.0);
  for (const auto& filter : filter_iterates) {
    const int k = filter.dim(1);
    const ad::Var f4 = ad::constant(as4(filter));
    for (size_t i = 0; i < test_features.size(); ++i) {
      ad::Var s = ad::conv(test_features[i], f4, nullptr, 1, k / 2);
      s = ad::reshape(s, {s->value.dim(1), s->value.dim(2)});
      const ad::Var r = ad::hinge_residual(s, test_labels[i].values, mask_threshold);
      total = ad::add(total, ad::square_sum(r));
    }
  }
  return ad::scale(total, 1.0 / static_cast<double>(filter_iterates.size() - 1));
}

}  // namespace tinytrack::track
