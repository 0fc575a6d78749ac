#pragma once

#include <cstdint>
#include <span>

#include "tinytrack/box.hpp"
#include "tinytrack/image.hpp"
#include "tinytrack/rng.hpp"

namespace tinytrack::degrade {

struct DegradeSpec {
  double scale_divisor = 16.0;    // drives targets toward ~16 px after degradation
  int network_input_size = 352;   // fixed network input side
  std::uint64_t seed = 0;
};

/// Downsampling factor for one batch: the mean geometric-mean side of the
/// ground-truth boxes divided by the scale divisor, clamped to >= 1 so boxes
/// already at or below the divisor are never upsampled.
double batch_scale_factor(std::span<const BoundingBox> gt_boxes,
                          const DegradeSpec& spec);

enum class Upsampler { nearest, bilinear };

/// Degrade one image: bicubic downsample by 1/d, then upsample back to the
/// fixed network input size with the given kernel. d == 1 still resizes to
/// the network input size.
Image degrade_image(const Image& image, double d, const DegradeSpec& spec,
                    Upsampler up);

/// Stateful wrapper owning the seeded stream that picks nearest or bilinear
/// upsampling per call with probability 1/2 each.
class Degrader {
 public:
  explicit Degrader(const DegradeSpec& spec) : spec_(spec), rng_(spec.seed) {}

  Image operator()(const Image& image, double d) {
    const Upsampler up = rng_.bernoulli(0.5) ? Upsampler::nearest : Upsampler::bilinear;
    return degrade_image(image, d, spec_, up);
  }

  const DegradeSpec& spec() const { return spec_; }

 private:
  DegradeSpec spec_;
  Rng rng_;
};

}  // namespace tinytrack::degrade
