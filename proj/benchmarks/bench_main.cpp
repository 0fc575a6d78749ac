#include <benchmark/benchmark.h>

#include "tinytrack/autodiff.hpp"
#include "tinytrack/backbone.hpp"
#include "tinytrack/box.hpp"
#include "tinytrack/degrade.hpp"
#include "tinytrack/metrics.hpp"
#include "tinytrack/rng.hpp"
#include "tinytrack/target_model.hpp"

using namespace tinytrack;

namespace {

ad::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  Rng rng(seed);
  ad::Tensor t(std::move(shape));
  for (auto& v : t.v) v = rng.normal();
  return t;
}

void BM_Iou(benchmark::State& state) {
  Rng rng(1);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 1024; ++i) {
    boxes.push_back({rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(1, 30),
                     rng.uniform(1, 30)});
  }
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(iou(boxes[i % 1024], boxes[(i + 7) % 1024]));
    ++i;
  }
}
BENCHMARK(BM_Iou);

void BM_PrecisionCurve(benchmark::State& state) {
  Rng rng(2);
  data::SequenceRecord gt;
  metrics::TrackResult result{"seq", {}};
  for (int f = 0; f < 500; ++f) {
    const BoundingBox g{rng.uniform(0, 200), rng.uniform(0, 150), 10, 10};
    gt.annotations.push_back({f, g, 320, 240});
    result.boxes.push_back({g.x + rng.normal(0, 4), g.y + rng.normal(0, 4), 10, 10});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::precision_score(result, gt));
  }
}
BENCHMARK(BM_PrecisionCurve);

void BM_BackboneForward(benchmark::State& state) {
  track::BackboneConfig cfg;
  cfg.base_channels = 8;
  cfg.out_channels = 16;
  const track::Backbone backbone(cfg);
  const Image img(128, 128, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(track::extract_features(backbone, img, 128));
  }
}
BENCHMARK(BM_BackboneForward);

void BM_PrPool(benchmark::State& state) {
  const auto feat = ad::constant(random_tensor({16, 8, 8}, 3));
  const auto box = ad::constant(ad::Tensor({4}, {1.3, 1.7, 6.2, 6.8}));
  ad::NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ad::prpool(feat, box, 3));
  }
}
BENCHMARK(BM_PrPool);

void BM_DegradeImage(benchmark::State& state) {
  Rng rng(4);
  Image img(352, 352);
  for (auto& v : img.px) v = rng.uniform();
  const degrade::DegradeSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        degrade::degrade_image(img, 4.0, spec, degrade::Upsampler::bilinear));
  }
}
BENCHMARK(BM_DegradeImage);

void BM_OptimizeTargetModel(benchmark::State& state) {
  Rng rng(5);
  track::SampleMemory mem(8);
  for (int s = 0; s < 5; ++s) {
    track::TrainSample sample;
    sample.features = random_tensor({16, 8, 8}, 100 + s);
    sample.label = track::gaussian_label(8, 8, 4.0, 4.0, 1.0);
    mem.add(std::move(sample));
  }
  const track::TargetModel init{ad::Tensor({16, 5, 5}), 0.05};
  for (auto _ : state) {
    benchmark::DoNotOptimize(track::optimize_target_model(init, mem, 5));
  }
}
BENCHMARK(BM_OptimizeTargetModel);

}  // namespace

BENCHMARK_MAIN();
