#pragma once

#include <functional>
#include <vector>

#include "tinytrack/autodiff.hpp"
#include "tinytrack/rng.hpp"

namespace tinytrack::testing {

inline ad::Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  ad::Tensor t(std::move(shape));
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}

/// Central-difference gradient of a scalar-returning graph builder with
/// respect to one leaf coordinate. The builder must construct a fresh graph
/// from the leaf's current value each call.
inline double numeric_grad(const std::function<double()>& eval, const ad::Var& leafvar,
                           size_t index, double h = 1e-6) {
  const double orig = leafvar->value.v[index];
  leafvar->value.v[index] = orig + h;
  const double fp = eval();
  leafvar->value.v[index] = orig - h;
  const double fm = eval();
  leafvar->value.v[index] = orig;
  return (fp - fm) / (2.0 * h);
}

struct GradCheckResult {
  double max_err = 0.0;     // worst mixed abs/rel deviation
  size_t worst_index = 0;
  bool ok(double tol) const { return max_err <= tol; }
};

/// Compares the recorded gradient of `leafvar` (after the caller ran
/// backward) against central differences of `eval`. The deviation for each
/// coordinate is |ad - fd| / max(1, |ad|, |fd|).
inline GradCheckResult check_gradient(const std::function<double()>& eval,
                                      const ad::Var& leafvar, double h = 1e-6) {
  GradCheckResult result;
  for (size_t i = 0; i < leafvar->value.v.size(); ++i) {
    const double adg = leafvar->has_grad() ? leafvar->grad.v[i] : 0.0;
    const double fdg = numeric_grad(eval, leafvar, i, h);
    const double err = std::abs(adg - fdg) / std::max({1.0, std::abs(adg), std::abs(fdg)});
    if (err > result.max_err) {
      result.max_err = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace tinytrack::testing
