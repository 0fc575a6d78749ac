#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "tinytrack/iou_head.hpp"

using namespace tinytrack;
using tinytrack::testing::check_gradient;
using tinytrack::testing::random_tensor;

namespace {

track::BoxGrid small_grid() {
  return track::make_box_grid({10, 8, 4, 4}, 3, 0.4, 0.3);
}

}  // namespace

TEST_CASE("box param round trip") {
  const BoundingBox b{3.5, 2.25, 5.0, 7.5};
  const auto p = track::to_param(b);
  const auto back = track::to_box(p);
  CHECK(back.x == doctest::Approx(b.x).epsilon(1e-12));
  CHECK(back.y == doctest::Approx(b.y).epsilon(1e-12));
  CHECK(back.w == doctest::Approx(b.w).epsilon(1e-12));
  CHECK(back.h == doctest::Approx(b.h).epsilon(1e-12));
}

TEST_CASE("predictive density normalizes and is shift invariant") {
  Rng rng(3);
  const auto grid = small_grid();
  std::vector<double> scores(grid.boxes.size());
  for (auto& s : scores) s = rng.normal(0, 2.0);

  const auto density = track::predictive_density(scores, grid.cell_volume);
  double mass = 0.0;
  for (double p : density) mass += p * grid.cell_volume;
  CHECK(std::abs(mass - 1.0) < 1e-9);

  SUBCASE("adding a constant changes nothing") {
    std::vector<double> shifted = scores;
    for (auto& s : shifted) s += 3.7;
    const auto density2 = track::predictive_density(shifted, grid.cell_volume);
    for (size_t i = 0; i < density.size(); ++i) {
      CHECK(std::abs(density[i] - density2[i]) < 1e-10);
    }
  }
  SUBCASE("constant scores give the uniform density") {
    std::vector<double> flat(scores.size(), 1.3);
    const auto density2 = track::predictive_density(flat, grid.cell_volume);
    for (double p : density2) {
      CHECK(p == doctest::Approx(density2[0]).epsilon(1e-12));
    }
  }
  SUBCASE("score difference ln 3 gives a 1:3 density ratio") {
    std::vector<double> two{0.0, std::log(3.0)};
    const auto density2 = track::predictive_density(two, 0.25);
    CHECK(density2[1] / density2[0] == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("large scores survive via max-subtraction") {
    std::vector<double> big(scores.size(), 900.0);
    big[0] = 905.0;
    const auto density2 = track::predictive_density(big, grid.cell_volume);
    for (double p : density2) CHECK(std::isfinite(p));
  }
  SUBCASE("non-finite scores throw") {
    std::vector<double> bad{1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(track::predictive_density(bad, 0.1), std::invalid_argument);
  }
}

TEST_CASE("kl regression loss") {
  const auto grid = small_grid();
  const auto label = track::gaussian_box_label_density(grid, 0.15);

  SUBCASE("label density is itself grid-normalized") {
    double mass = 0.0;
    for (double p : label) mass += p * grid.cell_volume;
    CHECK(std::abs(mass - 1.0) < 1e-9);
  }

  SUBCASE("constant scores reduce to the log support volume") {
    std::vector<double> flat(grid.boxes.size(), 2.2);
    const double loss = track::kl_regression_loss(flat, label, grid.cell_volume);
    const double volume = static_cast<double>(grid.boxes.size()) * grid.cell_volume;
    CHECK(loss == doctest::Approx(std::log(volume)).epsilon(1e-9));
  }

  SUBCASE("full divergence is non-negative (Gibbs)") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> scores(grid.boxes.size());
      for (auto& s : scores) s = rng.normal(0, 3.0);
      const double loss = track::kl_regression_loss(scores, label, grid.cell_volume);
      const double full = loss + track::label_entropy_term(label, grid.cell_volume);
      CHECK(full >= -1e-12);
    }
  }

  SUBCASE("matching scores minimize the loss over perturbations") {
    // s = log p + const is the optimum of the reduced objective.
    std::vector<double> matched(label.size());
    for (size_t i = 0; i < label.size(); ++i) matched[i] = std::log(label[i]) + 1.7;
    const double base = track::kl_regression_loss(matched, label, grid.cell_volume);
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> perturbed = matched;
      for (auto& s : perturbed) s += rng.normal(0, 0.3);
      CHECK(track::kl_regression_loss(perturbed, label, grid.cell_volume) >=
            base - 1e-10);
    }
  }

  SUBCASE("tape version matches and gradient-checks") {
    Rng rng(17);
    ad::Tensor scores({static_cast<int>(grid.boxes.size())});
    for (auto& s : scores.v) s = rng.normal(0, 1.5);
    const auto leafvar = ad::leaf(scores);
    auto build = [&] {
      return track::kl_regression_loss_ad(leafvar, label, grid.cell_volume);
    };
    const auto root = build();
    std::vector<double> plain(leafvar->value.v.begin(), leafvar->value.v.end());
    CHECK(root->value.v[0] ==
          doctest::Approx(track::kl_regression_loss(plain, label, grid.cell_volume))
              .epsilon(1e-12));
    ad::backward(root);
    CHECK(check_gradient([&] { return build()->value.v[0]; }, leafvar).max_err < 1e-4);
  }

  SUBCASE("degenerate label sigma throws") {
    CHECK_THROWS_AS(track::gaussian_box_label_density(grid, 0.0), std::invalid_argument);
  }
}

TEST_CASE("iou head scoring") {
  track::IoUHeadConfig cfg;
  cfg.feat_channels = 4;
  cfg.hidden = 16;
  cfg.init_seed = 5;
  track::IoUHead head(cfg);
  Rng rng(21);
  const ad::Tensor feat = random_tensor({4, 8, 8}, rng);
  const BoundingBox ref_box{2, 2, 4, 4};

  const auto mod = head.reference(ad::constant(feat), ref_box);

  SUBCASE("scores are finite and deterministic") {
    const double s1 = head.score_value(feat, mod->value, {2.5, 2.5, 3.0, 3.0});
    const double s2 = head.score_value(feat, mod->value, {2.5, 2.5, 3.0, 3.0});
    CHECK(std::isfinite(s1));
    CHECK(s1 == s2);
  }

  SUBCASE("score gradient w.r.t. box coordinates passes the FD check") {
    const auto box = ad::leaf(ad::Tensor({4}, {2.31, 2.17, 5.43, 5.91}));
    const auto feat_var = ad::constant(feat);
    auto build = [&] { return head.score(feat_var, mod, box); };
    const auto root = build();
    ad::backward(root);
    CHECK(check_gradient([&] { return build()->value.v[0]; }, box, 1e-5).max_err < 1e-4);
  }

  SUBCASE("refinement never decreases the predicted score") {
    const BoundingBox start{3.1, 3.4, 2.2, 2.6};
    const double initial = head.score_value(feat, mod->value, start);
    double final_score = 0.0;
    const BoundingBox refined =
        track::refine_box(head, feat, mod->value, start, 10, 1.0, &final_score);
    CHECK(final_score >= initial - 1e-12);
    CHECK(refined.valid());
    CHECK(head.score_value(feat, mod->value, refined) ==
          doctest::Approx(final_score).epsilon(1e-12));
  }
}

TEST_CASE("make_box_grid covers the parameter ranges uniformly") {
  const BoundingBox center{10, 8, 4, 4};
  const auto grid = track::make_box_grid(center, 5, 0.5, 0.35);
  CHECK(grid.boxes.size() == 625);
  CHECK(grid.offsets.size() == 625);
  const double pos_step = 2.0 * 0.5 / 4;
  const double log_step = 2.0 * 0.35 / 4;
  CHECK(grid.cell_volume ==
        doctest::Approx(pos_step * pos_step * log_step * log_step).epsilon(1e-12));
  // The zero offset reproduces the center box.
  bool found_center = false;
  for (size_t i = 0; i < grid.offsets.size(); ++i) {
    const auto& o = grid.offsets[i];
    if (std::abs(o[0]) < 1e-12 && std::abs(o[1]) < 1e-12 && std::abs(o[2]) < 1e-12 &&
        std::abs(o[3]) < 1e-12) {
      found_center = true;
      CHECK(grid.boxes[i].cx() == doctest::Approx(center.cx()).epsilon(1e-9));
      CHECK(grid.boxes[i].w == doctest::Approx(center.w).epsilon(1e-9));
    }
  }
  CHECK(found_center);
}
