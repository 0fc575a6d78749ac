#include "tinytrack/backbone.hpp"

#include <stdexcept>

#include "tinytrack/rng.hpp"

namespace tinytrack::track {

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  const int channels[5] = {1, cfg.base_channels, 2 * cfg.base_channels,
                           2 * cfg.base_channels, cfg.out_channels};
  for (int b = 0; b < 4; ++b) {
    const double fan_in = static_cast<double>(channels[b]) * 3 * 3;
    params_.push_back({"backbone.w" + std::to_string(b),
                       ad::leaf(ad::random_init({channels[b + 1], channels[b], 3, 3},
                                                fan_in, rng))});
    params_.push_back({"backbone.b" + std::to_string(b),
                       ad::leaf(ad::Tensor({channels[b + 1]}))});
  }
}

ad::Var Backbone::forward(const ad::Var& image) const {
  if (image->value.rank() != 3 || image->value.dim(0) != 1) {
    throw std::invalid_argument("backbone: expected a [1,H,W] input");
  }
  if (image->value.dim(1) % kStride != 0 || image->value.dim(2) % kStride != 0) {
    throw std::invalid_argument("backbone: input sides must be multiples of 16");
  }
  ad::Var x = image;
  for (int b = 0; b < 4; ++b) {
    x = ad::conv(x, params_[2 * b].var, params_[2 * b + 1].var, /*stride=*/2,
                 /*pad=*/1);
    if (b < 3) x = ad::leaky_relu(x, cfg_.leaky_slope);
  }
  return x;
}

void Backbone::copy_params_from(const Backbone& other) {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("backbone: incompatible architectures");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    params_[i].var->value = other.params_[i].var->value;
  }
}

ad::Tensor extract_features(const Backbone& backbone, const Image& image,
                            int expected_input) {
  if (image.width != expected_input || image.height != expected_input) {
    throw std::invalid_argument("extract_features: image must be " +
                                std::to_string(expected_input) + "x" +
                                std::to_string(expected_input));
  }
  ad::NoGradGuard inference;
  return backbone.forward(ad::constant(ad::image_to_tensor(image)))->value;
}

}  // namespace tinytrack::track
