#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tinytrack/dataset.hpp"
#include "tinytrack/image.hpp"

namespace tinytrack::synth {

enum class MotionKind { linear, abrupt, fast };
enum class SpriteShape { square, disk };

struct OccluderSpec {
  int period = 30;    // frames between occlusion onsets
  int duration = 5;   // occluded frames per onset
};

struct SynthConfig {
  int image_width = 640;
  int image_height = 480;
  double object_size = 16.0;       // sprite side in pixels
  SpriteShape shape = SpriteShape::square;
  MotionKind motion = MotionKind::linear;
  double speed = 2.0;              // pixels per frame
  int blur_radius = 0;             // motion blur half-width, 0 disables
  std::optional<OccluderSpec> occluder;
  int distractor_count = 0;
  double illumination_drop = 1.0;  // multiplier in (0, 1]; < 1 dims mid-sequence
  double noise_sigma = 0.01;       // per-frame sensor noise
  int frames = 60;
  std::uint64_t seed = 1;
  std::string name = "synthetic";
  std::string class_label = "sprite";
};

struct SynthSequence {
  std::vector<Image> frames;
  data::SequenceRecord record;
  Image background;  // the sprite-free plate the frames were composited on
};

/// Render a sequence of one textured sprite over seeded value-noise
/// background. Ground-truth boxes track the sprite rect exactly (clipped to
/// the image when it overhangs an edge) and the attribute flags follow the
/// configuration. Identical configs produce identical pixels.
SynthSequence generate_sequence(const SynthConfig& config);

/// Generate every config and write a dataset directory in the on-disk layout
/// data::load_manifest reads (groundtruth/attributes/meta plus img/*.pgm).
void write_dataset(const std::filesystem::path& root,
                   const std::vector<SynthConfig>& configs);

/// Canned config lists for a reproducible mini benchmark: `train` sequences
/// carry a larger sprite (degradation input), `test` sequences are tiny.
std::vector<SynthConfig> mini_benchmark_train_configs(int count, std::uint64_t seed);
std::vector<SynthConfig> mini_benchmark_test_configs(int count, std::uint64_t seed);

}  // namespace tinytrack::synth
