#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tinytrack/tensor.hpp"

namespace tinytrack::ad {

class Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Nodes are created through the op
/// functions below; `backward` walks the recorded tape in reverse creation
/// order and accumulates gradients into every node that requires them.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated on first contribution
  bool requires_grad = false;
  long long seq = 0;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  bool has_grad() const { return !grad.v.empty(); }
  void add_grad(const Tensor& g);
  void add_grad_at(size_t index, double g);
  void zero_grad() { grad = Tensor(); }
};

/// Leaf that participates in differentiation (network parameters, probe
/// inputs for gradient checks).
Var leaf(Tensor value);
/// Leaf treated as a constant.
Var constant(Tensor value);
Var scalar_constant(double value);

/// While alive, newly created ops record no tape (teacher/network inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Seeds d(root)/d(root) = 1 and back-propagates. `root` must be scalar.
void backward(const Var& root);

// ---- elementwise and reductions ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var square_sum(const Var& a);           // sum of squares
Var abs_sum(const Var& a);              // elementwise L1 mass
Var dot(const Var& a, const Tensor& w); // weighted sum with constant weights
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
/// x / max(||x||_2, eps).
Var l2_normalize(const Var& a, double eps = 1e-8);
Var sigmoid(const Var& a);
Var log_(const Var& a);
Var exp_(const Var& a);
Var logsumexp(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var stack_scalars(std::span<const Var> parts);
/// [Ca,H,W] ++ [Cb,H,W] -> [Ca+Cb,H,W].
Var concat_channels(const Var& a, const Var& b);

// ---- network layers ----
Var linear(const Var& x, const Var& weight, const Var& bias);
Var conv(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

/// Precise ROI pooling: `box` is a rank-1 Var (x1, y1, x2, y2) in continuous
/// feature coordinates (cell (i, j) center sits at (i + 0.5, j + 0.5)). Each
/// of bins x bins cells averages a dense samples x samples grid of bilinear
/// taps, so the result is differentiable in the features and in the box.
Var prpool(const Var& feat, const Var& box, int bins, int samples = 4);

/// Hinge-like residual against a constant label map: inside the target
/// region (label > mask_threshold) the residual is score - label, elsewhere
/// max(0, score).
Var hinge_residual(const Var& score, const Tensor& label, double mask_threshold);

/// Named trainable parameter.
struct Param {
  std::string name;
  Var var;
};

void zero_grads(std::span<Param> params);

/// Standard Adam with bias correction; one instance per parameter group.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  /// Applies one update from the accumulated gradients, then clears them.
  /// `lr_scale` implements schedules without mutating the base rate.
  void step(std::span<Param> params, double lr_scale = 1.0);

  double base_lr() const { return lr_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace tinytrack::ad
