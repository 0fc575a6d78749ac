#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "tinytrack/target_model.hpp"

using namespace tinytrack;
using tinytrack::testing::check_gradient;
using tinytrack::testing::random_tensor;

namespace {

track::LabelMap uniform_label(int h, int w, double value) {
  track::LabelMap label;
  label.values = ad::Tensor::full({h, w}, value);
  label.cx = w / 2.0;
  label.cy = h / 2.0;
  return label;
}

track::SampleMemory single_sample_memory(const ad::Tensor& feat,
                                         const track::LabelMap& label,
                                         int capacity = 4) {
  track::SampleMemory mem(capacity);
  track::TrainSample s;
  s.features = feat;
  s.label = label;
  mem.add(std::move(s));
  return mem;
}

}  // namespace

TEST_CASE("gaussian label peaks at the center cell") {
  const auto label = track::gaussian_label(9, 9, 4.5, 4.5, 1.0);
  size_t argmax = 0;
  for (size_t i = 0; i < label.values.v.size(); ++i) {
    if (label.values.v[i] > label.values.v[argmax]) argmax = i;
  }
  CHECK(argmax == 4 * 9 + 4);
  CHECK(label.values.v[argmax] == doctest::Approx(1.0));
}

TEST_CASE("residual_hinge spot values") {
  SUBCASE("score equals label in an all-target mask") {
    const auto label = uniform_label(3, 3, 0.8);
    const ad::Tensor r = track::residual_hinge(label.values, label);
    for (double v : r.v) CHECK(v == 0.0);
  }
  SUBCASE("background clamps negatives and passes positives") {
    const auto label = uniform_label(1, 2, 0.0);
    ad::Tensor score({1, 2}, {-3.0, 2.0});
    const ad::Tensor r = track::residual_hinge(score, label);
    CHECK(r.v[0] == 0.0);
    CHECK(r.v[1] == 2.0);
  }
  SUBCASE("shape mismatch throws") {
    const auto label = uniform_label(2, 2, 0.5);
    CHECK_THROWS_AS(track::residual_hinge(ad::Tensor({1, 2}), label),
                    std::invalid_argument);
  }
}

TEST_CASE("model_loss values") {
  Rng rng(3);
  const ad::Tensor feat = random_tensor({2, 6, 6}, rng);

  SUBCASE("zero filter with all-background labels gives zero") {
    track::TargetModel model{ad::Tensor({2, 1, 1}), 0.3};
    const auto mem = single_sample_memory(feat, uniform_label(6, 6, 0.0));
    CHECK(track::model_loss(model, mem) == 0.0);
  }
  SUBCASE("zero filter with target labels gives the label mass") {
    track::TargetModel model{ad::Tensor({2, 3, 3}), 0.0};
    const auto label = track::gaussian_label(6, 6, 3.0, 3.0, 1.2);
    const auto mem = single_sample_memory(feat, label);
    // Direct evaluation oracle: score is zero everywhere, so target cells
    // contribute label^2 and background cells max(0,0)^2 = 0.
    double expected = 0.0;
    for (double z : label.values.v) {
      if (z > track::kHingeMaskThreshold) expected += z * z;
    }
    CHECK(track::model_loss(model, mem) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("doubling lambda quadruples the regularizer") {
    Rng rng2(5);
    track::TargetModel m1{random_tensor({2, 3, 3}, rng2), 0.2};
    track::TargetModel m2 = m1;
    m2.lambda = 0.4;
    const auto label = track::gaussian_label(6, 6, 3.0, 3.0, 1.0);
    const auto mem = single_sample_memory(feat, label);
    const double data1 = track::model_loss(track::TargetModel{m1.filter, 0.0}, mem);
    const double reg1 = track::model_loss(m1, mem) - data1;
    const double reg2 = track::model_loss(m2, mem) - data1;
    CHECK(reg2 == doctest::Approx(4.0 * reg1).epsilon(1e-9));
  }
}

TEST_CASE("model_loss_ad matches the plain evaluation and its gradient checks") {
  Rng rng(7);
  const ad::Tensor feat = random_tensor({2, 5, 5}, rng);
  const auto label = track::gaussian_label(5, 5, 2.5, 2.5, 1.0);
  const auto mem = single_sample_memory(feat, label);
  const auto filter = ad::leaf(random_tensor({2, 3, 3}, rng, 0.3));
  const double lambda = 0.15;

  auto build = [&] { return track::model_loss_ad(filter, mem, lambda); };
  const auto root = build();
  const track::TargetModel model{filter->value, lambda};
  CHECK(root->value.v[0] == doctest::Approx(track::model_loss(model, mem)).epsilon(1e-12));

  ad::backward(root);
  const auto result = check_gradient([&] { return build()->value.v[0]; }, filter, 1e-6);
  CHECK(result.max_err < 1e-4);
}

TEST_CASE("optimize_target_model") {
  SUBCASE("zero iterations returns the initial filter") {
    Rng rng(11);
    const ad::Tensor feat = random_tensor({2, 5, 5}, rng);
    const auto mem = single_sample_memory(feat, track::gaussian_label(5, 5, 2.5, 2.5, 1.0));
    track::TargetModel init{random_tensor({2, 3, 3}, rng), 0.1};
    const auto result = track::optimize_target_model(init, mem, 0);
    CHECK(result.model.filter.v == init.filter.v);
    CHECK(result.loss_history.size() == 1);
    CHECK(result.iterates.size() == 1);
  }

  SUBCASE("loss history is monotone non-increasing on random instances") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      track::SampleMemory mem(4);
      for (int s = 0; s < 2; ++s) {
        track::TrainSample sample;
        sample.features = random_tensor({3, 7, 7}, rng);
        sample.label = track::gaussian_label(7, 7, rng.uniform(2, 5), rng.uniform(2, 5), 1.0);
        mem.add(std::move(sample));
      }
      track::TargetModel init{random_tensor({3, 3, 3}, rng, 0.2), 0.05};
      const auto result = track::optimize_target_model(init, mem, 20);
      REQUIRE(result.loss_history.size() == 21);
      for (size_t i = 1; i < result.loss_history.size(); ++i) {
        CHECK(result.loss_history[i] <= result.loss_history[i - 1] + 1e-9);
      }
    }
  }

  SUBCASE("separable instance reaches the closed-form ridge optimum") {
    // Two channels with disjoint supports and equal energy: the quadratic is
    // isotropic, so the exact-step descent converges immediately; five
    // iterations must land within 1e-6 of the closed-form ridge loss.
    const int n = 4;
    ad::Tensor feat({2, n, n});
    track::LabelMap label = uniform_label(n, n, 0.0);
    Rng rng(19);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const int ch = x < n / 2 ? 0 : 1;
        feat.at3(ch, y, x) = rng.uniform(0.5, 1.5) * (ch == 0 ? 1.0 : -1.0);
        label.values.v[static_cast<size_t>(y) * n + x] = rng.uniform(0.2, 1.0);
      }
    }
    // Equalize channel energies so the normal matrix is a multiple of I.
    double e0 = 0.0, e1 = 0.0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (x < n / 2) e0 += feat.at3(0, y, x) * feat.at3(0, y, x);
        else e1 += feat.at3(1, y, x) * feat.at3(1, y, x);
      }
    }
    const double k = std::sqrt(e0 / e1);
    for (int y = 0; y < n; ++y) {
      for (int x = n / 2; x < n; ++x) feat.at3(1, y, x) *= k;
    }

    const double lambda = 0.1;
    const auto mem = single_sample_memory(feat, label);
    track::TargetModel init{ad::Tensor({2, 1, 1}), lambda};
    const auto result = track::optimize_target_model(init, mem, 5);

    // Closed form: f* = (X^T X + lambda^2 I)^-1 X^T z, channels independent.
    double xtx0 = 0.0, xtz0 = 0.0, xtx1 = 0.0, xtz1 = 0.0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double z = label.values.v[static_cast<size_t>(y) * n + x];
        xtx0 += feat.at3(0, y, x) * feat.at3(0, y, x);
        xtz0 += feat.at3(0, y, x) * z;
        xtx1 += feat.at3(1, y, x) * feat.at3(1, y, x);
        xtz1 += feat.at3(1, y, x) * z;
      }
    }
    track::TargetModel closed{ad::Tensor({2, 1, 1}), lambda};
    closed.filter.v[0] = xtz0 / (xtx0 + lambda * lambda);
    closed.filter.v[1] = xtz1 / (xtx1 + lambda * lambda);
    const double best = track::model_loss(closed, mem);
    CHECK(result.loss_history.back() == doctest::Approx(best).epsilon(1e-6));
    CHECK(result.loss_history.back() <= best + 1e-6);
  }
}

TEST_CASE("classification_loss") {
  const int n = 4;
  track::LabelMap block = uniform_label(n, n, 0.0);
  for (int y = 1; y <= 2; ++y)
    for (int x = 1; x <= 2; ++x) block.values.v[static_cast<size_t>(y) * n + x] = 1.0;

  SUBCASE("perfect scores at all iterates give zero") {
    // Single-channel k=1 identity: features equal to the label reproduce it.
    ad::Tensor feat({1, n, n}, block.values.v);
    track::TrainSample sample;
    sample.features = feat;
    sample.label = block;
    std::vector<track::TrainSample> test{sample};
    std::vector<ad::Tensor> iterates{ad::Tensor({1, 1, 1}, {1.0}),
                                     ad::Tensor({1, 1, 1}, {1.0})};
    CHECK(track::classification_loss(iterates, test) == 0.0);
  }

  SUBCASE("iterate sum is normalized by the iteration count") {
    Rng rng(23);
    ad::Tensor feat = random_tensor({1, n, n}, rng);
    track::TrainSample sample;
    sample.features = feat;
    sample.label = block;
    std::vector<track::TrainSample> test{sample};
    const ad::Tensor f0({1, 1, 1}, {0.4});
    const ad::Tensor f1({1, 1, 1}, {0.9});
    auto term = [&](const ad::Tensor& f) {
      const auto s = track::score_map(feat, f);
      const auto r = track::residual_hinge(s, block);
      double acc = 0.0;
      for (double v : r.v) acc += v * v;
      return acc;
    };
    // Two iterates, N_iter = 1: (a + b) / 1.
    const double expected = term(f0) + term(f1);
    std::vector<ad::Tensor> iterates{f0, f1};
    CHECK(track::classification_loss(iterates, test) ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("degenerate inputs throw") {
    std::vector<ad::Tensor> one{ad::Tensor({1, 1, 1}, {1.0})};
    track::TrainSample sample;
    sample.features = ad::Tensor({1, n, n});
    sample.label = block;
    std::vector<track::TrainSample> test{sample};
    CHECK_THROWS_AS(track::classification_loss(one, test), std::invalid_argument);
    std::vector<ad::Tensor> two{ad::Tensor({1, 1, 1}), ad::Tensor({1, 1, 1})};
    CHECK_THROWS_AS(track::classification_loss(two, {}), std::invalid_argument);
  }
}

TEST_CASE("sample memory keeps capacity and protects initial entries") {
  track::SampleMemory mem(3, 1);
  Rng rng(31);
  auto make = [&](double weight) {
    track::TrainSample s;
    s.features = random_tensor({1, 2, 2}, rng);
    s.label = uniform_label(2, 2, 1.0);
    s.weight = weight;
    return s;
  };
  mem.add(make(1.0));   // protected
  mem.add(make(0.5));
  mem.add(make(0.5));
  mem.add(make(0.5));   // evicts the oldest unprotected
  CHECK(mem.size() == 3);
  CHECK(mem.entries()[0].weight == 1.0);
  CHECK_THROWS_AS(mem.add(track::TrainSample{{}, uniform_label(1, 1, 0), 0.0}),
                  std::invalid_argument);
}
