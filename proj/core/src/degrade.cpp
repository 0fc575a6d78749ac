#include "tinytrack/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tinytrack::degrade {

double batch_scale_factor(std::span<const BoundingBox> gt_boxes,
                          const DegradeSpec& spec) {
  if (gt_boxes.empty()) {
    throw std::invalid_argument("batch_scale_factor: empty box batch");
  }
  if (!(spec.scale_divisor > 0.0)) {
    throw std::invalid_argument("batch_scale_factor: scale_divisor must be positive");
  }
  double acc = 0.0;
  for (const auto& b : gt_boxes) {
    if (!b.valid()) throw std::invalid_argument("batch_scale_factor: invalid box");
    acc += std::sqrt(b.w * b.h);
  }
  const double avg_side = acc / static_cast<double>(gt_boxes.size());
  return std::max(1.0, avg_side / spec.scale_divisor);
}

Image degrade_image(const Image& image, double d, const DegradeSpec& spec,
                    Upsampler up) {
  if (image.empty()) throw std::invalid_argument("degrade_image: empty image");
  if (!(d >= 1.0)) throw std::invalid_argument("degrade_image: factor must be >= 1");
  if (spec.network_input_size <= 0) {
    throw std::invalid_argument("degrade_image: network_input_size must be positive");
  }
  const int small_w = std::max(1, static_cast<int>(std::lround(image.width / d)));
  const int small_h = std::max(1, static_cast<int>(std::lround(image.height / d)));
  const Image small = resize(image, small_w, small_h, ResampleKind::bicubic);
  const ResampleKind kind =
      up == Upsampler::nearest ? ResampleKind::nearest : ResampleKind::bilinear;
  return resize(small, spec.network_input_size, spec.network_input_size, kind);
}

}  // namespace tinytrack::degrade
