#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tinytrack {

/// Grayscale image, row-major doubles with nominal range [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }

  /// Clamped pixel fetch; out-of-range coordinates replicate the border.
  double at_clamped(int x, int y) const;

  /// Bilinear sample at a continuous position; pixel centers sit at
  /// (i + 0.5, j + 0.5). Borders replicate.
  double sample_bilinear(double x, double y) const;

  bool empty() const { return width <= 0 || height <= 0; }
};

enum class ResampleKind { nearest, bilinear, bicubic };

/// Resize with the given kernel. Sampling uses the half-pixel center
/// convention (src = (dst + 0.5) * scale - 0.5); all three kernels map a
/// constant image to the same constant.
Image resize(const Image& src, int out_w, int out_h, ResampleKind kind);

/// Box blur of `radius` taps on each side of the center, sampled along the
/// (vx, vy) direction. radius == 0 returns the input unchanged.
Image directional_blur(const Image& src, double vx, double vy, int radius);

/// Square window of side `side` centered at (cx, cy), bilinearly resampled
/// to out x out. Pixels outside the source replicate the border.
Image crop_window(const Image& src, double cx, double cy, double side, int out);

/// Mean absolute 4-neighbour Laplacian; a cheap high-frequency energy proxy.
double mean_abs_laplacian(const Image& img);

double mean_pixel(const Image& img);

/// 8-bit PGM (P5) I/O. Values are clamped to [0, 1] and quantized on write.
void write_pgm(const Image& img, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

}  // namespace tinytrack
