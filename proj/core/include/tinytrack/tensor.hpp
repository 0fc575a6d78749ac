#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "tinytrack/image.hpp"
#include "tinytrack/rng.hpp"

namespace tinytrack::ad {

/// Dense row-major tensor of doubles. Ranks used in practice: 1 (vectors),
/// 2 (maps), 3 (C,H,W feature maps), 4 (Cout,Cin,kh,kw filters).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(count(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    assert(static_cast<long long>(v.size()) == count(shape));
  }

  static long long count(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double value) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = value;
    return t;
  }
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  long long size() const { return static_cast<long long>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }

  // (c, y, x) accessor for rank-3 tensors.
  double& at3(int c, int y, int x) {
    return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  double sum() const;
};

/// He-style random init used by every network module.
Tensor random_init(std::vector<int> shape, double fan_in, Rng& rng);

/// Cross-correlation of x[Cin,H,W] with filters w[Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad);
/// Gradient of conv2d w.r.t. its input (`gout` has the output shape).
Tensor conv2d_grad_input(const Tensor& gout, const Tensor& w, int stride, int pad,
                         int in_h, int in_w);
/// Gradient of conv2d w.r.t. the filter bank.
Tensor conv2d_grad_weight(const Tensor& x, const Tensor& gout,
                          const std::vector<int>& w_shape, int stride, int pad);

/// Grayscale image as a [1,H,W] tensor and back.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, int channel = 0);

/// FNV-1a over the raw bytes; used for frozen-parameter checks.
std::uint64_t tensor_hash(const Tensor& t, std::uint64_t h = 1469598103934665603ULL);

}  // namespace tinytrack::ad
