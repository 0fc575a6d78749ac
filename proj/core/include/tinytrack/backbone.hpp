#pragma once

#include <cstdint>
#include <vector>

#include "tinytrack/autodiff.hpp"
#include "tinytrack/image.hpp"

namespace tinytrack::track {

/// Small convolutional stack standing in for a deep backbone: four 3x3
/// stride-2 blocks for an overall stride of 16.
struct BackboneConfig {
  int base_channels = 8;
  int out_channels = 16;
  double leaky_slope = 0.1;
  std::uint64_t init_seed = 7;
};

class Backbone {
 public:
  static constexpr int kStride = 16;

  explicit Backbone(const BackboneConfig& cfg);

  /// [1, H, W] -> [out_channels, H/16, W/16]. H and W must be multiples of 16.
  ad::Var forward(const ad::Var& image) const;

  std::vector<ad::Param>& params() { return params_; }
  const std::vector<ad::Param>& params() const { return params_; }
  const BackboneConfig& config() const { return cfg_; }

  void copy_params_from(const Backbone& other);

 private:
  BackboneConfig cfg_;
  std::vector<ad::Param> params_;  // w0,b0 .. w3,b3
};

/// Feature extraction entry point used by the online tracker: checks the
/// input size contract and runs the backbone without recording a tape.
ad::Tensor extract_features(const Backbone& backbone, const Image& image,
                            int expected_input);

}  // namespace tinytrack::track
