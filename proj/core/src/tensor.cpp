#include "tinytrack/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace tinytrack::ad {

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Tensor::sum() const {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

Tensor random_init(std::vector<int> shape, double fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double scale = std::sqrt(2.0 / std::max(1.0, fan_in));
  for (auto& x : t.v) x = scale * rng.normal();
  return t;
}

static void check_conv_shapes(const Tensor& x, const Tensor& w) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw std::invalid_argument("conv2d: expected x[C,H,W], w[Cout,Cin,kh,kw]");
  }
  if (x.dim(0) != w.dim(1)) {
    throw std::invalid_argument("conv2d: channel mismatch");
  }
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad) {
  check_conv_shapes(x, w);
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  Tensor out({cout, oh, ow});
  for (int co = 0; co < cout; ++co) {
    const double b = bias ? bias->v[static_cast<size_t>(co)] : 0.0;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const size_t xrow = (static_cast<size_t>(ci) * h + iy) * wd;
            const size_t wrow =
                ((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= wd) continue;
              acc += x.v[xrow + ix] * w.v[wrow + kx];
            }
          }
        }
        out.at3(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor conv2d_grad_input(const Tensor& gout, const Tensor& w, int stride, int pad,
                         int in_h, int in_w) {
  const int cin = w.dim(1), cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  Tensor gin({cin, in_h, in_w});
  const int oh = gout.dim(1), ow = gout.dim(2);
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = gout.at3(co, oy, ox);
        if (g == 0.0) continue;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in_h) continue;
            const size_t grow = (static_cast<size_t>(ci) * in_h + iy) * in_w;
            const size_t wrow =
                ((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in_w) continue;
              gin.v[grow + ix] += g * w.v[wrow + kx];
            }
          }
        }
      }
    }
  }
  return gin;
}

Tensor conv2d_grad_weight(const Tensor& x, const Tensor& gout,
                          const std::vector<int>& w_shape, int stride, int pad) {
  Tensor gw(w_shape);
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = gout.dim(0), oh = gout.dim(1), ow = gout.dim(2);
  const int kh = w_shape[2], kw = w_shape[3];
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = gout.at3(co, oy, ox);
        if (g == 0.0) continue;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const size_t xrow = (static_cast<size_t>(ci) * h + iy) * wd;
            const size_t wrow =
                ((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= wd) continue;
              gw.v[wrow + kx] += g * x.v[xrow + ix];
            }
          }
        }
      }
    }
  }
  return gw;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, img.height, img.width});
  std::memcpy(t.v.data(), img.px.data(), img.px.size() * sizeof(double));
  return t;
}

Image tensor_to_image(const Tensor& t, int channel) {
  if (t.rank() != 3) throw std::invalid_argument("tensor_to_image: rank-3 expected");
  Image img(t.dim(2), t.dim(1));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y) = t.at3(channel, y, x);
    }
  }
  return img;
}

std::uint64_t tensor_hash(const Tensor& t, std::uint64_t h) {
  auto mix = [&h](const void* data, size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (int d : t.shape) mix(&d, sizeof(d));
  mix(t.v.data(), t.v.size() * sizeof(double));
  return h;
}

}  // namespace tinytrack::ad
