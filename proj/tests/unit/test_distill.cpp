#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "tinytrack/distill.hpp"

using namespace tinytrack;
using tinytrack::testing::check_gradient;
using tinytrack::testing::random_tensor;

namespace {

distill::Discriminator::Config disc_config(int input_dim, std::uint64_t seed = 77) {
  distill::Discriminator::Config cfg;
  cfg.input_dim = input_dim;
  cfg.hidden1 = 32;
  cfg.hidden2 = 16;
  cfg.init_seed = seed;
  return cfg;
}

distill::Discriminator half_discriminator(int input_dim) {
  // Zeroed parameters: logits 0 everywhere, so D == 0.5 on any input.
  distill::Discriminator d(disc_config(input_dim));
  for (auto& p : d.params()) {
    for (auto& v : p.var->value.v) v = 0.0;
  }
  return d;
}

track::TrackerNetConfig tiny_net_config(std::uint64_t seed) {
  track::TrackerNetConfig cfg;
  cfg.net_input = 48;
  cfg.backbone.base_channels = 4;
  cfg.backbone.out_channels = 8;
  cfg.iou.hidden = 16;
  cfg.filter_size = 3;
  cfg.seed = seed;
  return cfg;
}

distill::TrainStepConfig tiny_step_config() {
  distill::TrainStepConfig cfg;
  cfg.degrade_spec.network_input_size = 48;
  cfg.frames_train = 2;
  cfg.frames_test = 1;
  cfg.filter_iters = 2;
  cfg.kl_grid_res = 3;
  return cfg;
}

synth::SynthSequence tiny_video(std::uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.image_width = 160;
  cfg.image_height = 120;
  cfg.object_size = 48;  // large enough that the degradation factor d > 1
  cfg.frames = 8;
  cfg.speed = 1.0;
  cfg.seed = seed;
  return synth::generate_sequence(cfg);
}

}  // namespace

TEST_CASE("rdm") {
  CHECK(distill::rdm(0.7, 0.5) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(distill::rdm(0.5, 0.7) == 0.0);
  CHECK(distill::rdm(0.42, 0.42) == 0.0);
  CHECK_THROWS_AS(distill::rdm(std::nan(""), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(distill::rdm(1.0, std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
}

TEST_CASE("gen_loss values") {
  const int dim = 12;
  const auto d = half_discriminator(dim);
  Rng rng(5);
  std::vector<ad::Var> rois;
  for (int i = 0; i < 4; ++i) rois.push_back(ad::constant(random_tensor({dim}, rng)));
  const auto loss = distill::gen_loss(d, rois);
  CHECK(loss->value.v[0] == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-9));

  SUBCASE("doubling the batch doubles the unnormalized sum") {
    std::vector<ad::Var> doubled = rois;
    doubled.insert(doubled.end(), rois.begin(), rois.end());
    const auto loss2 = distill::gen_loss(d, doubled);
    CHECK(loss2->value.v[0] == doctest::Approx(2.0 * loss->value.v[0]).epsilon(1e-9));
  }
  SUBCASE("empty batch throws") {
    CHECK_THROWS_AS(distill::gen_loss(d, {}), std::invalid_argument);
  }
}

TEST_CASE("dis_loss values") {
  const int dim = 12;
  const auto d = half_discriminator(dim);
  Rng rng(6);
  std::vector<ad::Var> teacher, student;
  for (int i = 0; i < 2; ++i) {
    teacher.push_back(ad::constant(random_tensor({dim}, rng)));
    student.push_back(ad::constant(random_tensor({dim}, rng)));
  }
  const auto loss = distill::dis_loss(d, teacher, student);
  CHECK(loss->value.v[0] == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-9));

  SUBCASE("batch mismatch throws") {
    std::vector<ad::Var> short_student{student[0]};
    CHECK_THROWS_AS(distill::dis_loss(d, teacher, short_student), std::invalid_argument);
  }
}

TEST_CASE("L1 distillation losses") {
  Rng rng(7);
  SUBCASE("identical inputs give zero; constant offsets give the element count") {
    const int m = 18;
    const auto t = ad::constant(random_tensor({m}, rng));
    ad::Tensor shifted = t->value;
    for (auto& v : shifted.v) v += 1.0;
    const auto s = ad::constant(shifted);
    std::vector<ad::Var> ss{s}, ts{t};
    CHECK(distill::consistency_loss(ts, ts)->value.v[0] == 0.0);
    CHECK(distill::consistency_loss(ss, ts)->value.v[0] ==
          doctest::Approx(static_cast<double>(m)).epsilon(1e-12));
    // Swap symmetry.
    CHECK(distill::consistency_loss(ss, ts)->value.v[0] ==
          doctest::Approx(distill::consistency_loss(ts, ss)->value.v[0]).epsilon(1e-12));
  }
  SUBCASE("score maps differing by 0.5 over M cells") {
    const int h = 6, w = 6;
    const auto t = ad::constant(random_tensor({h, w}, rng));
    ad::Tensor shifted = t->value;
    for (auto& v : shifted.v) v += 0.5;
    const auto s = ad::constant(shifted);
    std::vector<ad::Var> ss{s}, ts{t};
    CHECK(distill::score_distill_loss(ss, ts)->value.v[0] ==
          doctest::Approx(0.5 * h * w).epsilon(1e-12));
  }
  SUBCASE("iou score lists") {
    auto sc = [](double v) { return ad::scalar_constant(v); };
    std::vector<ad::Var> s{sc(0.9), sc(0.5)};
    std::vector<ad::Var> t{sc(0.7), sc(0.9)};
    CHECK(distill::iou_distill_loss(s, t)->value.v[0] ==
          doctest::Approx(0.3).epsilon(1e-12));
    std::vector<ad::Var> bad{ad::constant(ad::Tensor({2}, {1.0, 2.0}))};
    std::vector<ad::Var> t1{sc(0.7)};
    CHECK_THROWS_AS(distill::iou_distill_loss(bad, t1), std::invalid_argument);
  }
}

TEST_CASE("gradient checks for the five distillation losses on 4x4x2 toys") {
  Rng rng(11);
  const std::vector<int> roi_shape{2, 4, 4};
  const int dim = 32;
  distill::Discriminator d(disc_config(dim, 99));

  const auto s1 = ad::leaf(random_tensor(roi_shape, rng));
  const auto s2 = ad::leaf(random_tensor(roi_shape, rng));
  const auto t1 = ad::constant(random_tensor(roi_shape, rng));
  const auto t2 = ad::constant(random_tensor(roi_shape, rng));
  std::vector<ad::Var> ss{s1, s2}, ts{t1, t2};

  SUBCASE("gen_loss w.r.t. student features and discriminator weights") {
    auto build = [&] { return distill::gen_loss(d, ss); };
    const auto root = build();
    ad::backward(root);
    auto eval = [&] { return build()->value.v[0]; };
    CHECK(check_gradient(eval, s1, 1e-6).max_err < 1e-4);
    CHECK(check_gradient(eval, d.params()[0].var, 1e-6).max_err < 1e-4);
  }
  SUBCASE("dis_loss w.r.t. discriminator weights") {
    auto build = [&] { return distill::dis_loss(d, ts, ss); };
    const auto root = build();
    ad::backward(root);
    auto eval = [&] { return build()->value.v[0]; };
    CHECK(check_gradient(eval, d.params()[2].var, 1e-6).max_err < 1e-4);
    CHECK(check_gradient(eval, d.params()[4].var, 1e-6).max_err < 1e-4);
  }
  SUBCASE("consistency_loss w.r.t. student features") {
    auto build = [&] { return distill::consistency_loss(ss, ts); };
    const auto root = build();
    ad::backward(root);
    CHECK(check_gradient([&] { return build()->value.v[0]; }, s1, 1e-6).max_err < 1e-4);
  }
  SUBCASE("score_distill_loss w.r.t. student maps") {
    auto build = [&] { return distill::score_distill_loss(ss, ts); };
    const auto root = build();
    ad::backward(root);
    CHECK(check_gradient([&] { return build()->value.v[0]; }, s2, 1e-6).max_err < 1e-4);
  }
  SUBCASE("iou_distill_loss w.r.t. student scores") {
    const auto a = ad::leaf(ad::Tensor({1}, {0.83}));
    const auto b = ad::leaf(ad::Tensor({1}, {0.31}));
    std::vector<ad::Var> si{a, b};
    std::vector<ad::Var> ti{ad::scalar_constant(0.5), ad::scalar_constant(0.9)};
    auto build = [&] { return distill::iou_distill_loss(si, ti); };
    const auto root = build();
    ad::backward(root);
    auto eval = [&] { return build()->value.v[0]; };
    CHECK(check_gradient(eval, a, 1e-6).max_err < 1e-4);
    CHECK(check_gradient(eval, b, 1e-6).max_err < 1e-4);
  }
}

TEST_CASE("total_loss arithmetic") {
  distill::LossWeights w;
  SUBCASE("unit components with unit gates hit the documented sum") {
    distill::LossBundle parts{1, 1, 1, 0, 1, 1, 1, 0};
    const double total = distill::total_loss(parts, {1.0, 1.0}, w);
    CHECK(std::abs(total - 108.11) < 1e-9);
  }
  SUBCASE("zero gates reduce to the baseline terms") {
    distill::LossBundle parts{0.3, 0.7, 5.0, 0, 2.0, 3.0, 4.0, 0};
    const double total = distill::total_loss(parts, {0.0, 0.0}, w);
    CHECK(total == doctest::Approx(100.0 * 0.3 + 0.01 * 0.7).epsilon(1e-12));
  }
  SUBCASE("doubling the cls gate doubles only the delta term") {
    distill::LossBundle parts{0.1, 0.2, 0.3, 0, 0.4, 0.5, 0.6, 0};
    const double base = distill::total_loss(parts, {0.25, 0.5}, w);
    const double doubled = distill::total_loss(parts, {0.25, 1.0}, w);
    CHECK(doubled - base == doctest::Approx(w.delta * 0.5 * parts.score_d).epsilon(1e-12));
  }
  SUBCASE("non-finite components throw") {
    distill::LossBundle parts{std::nan(""), 0, 0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(distill::total_loss(parts, {0, 0}, w), std::invalid_argument);
  }
}

TEST_CASE("discriminator training strictly decreases its loss on a frozen batch") {
  Rng rng(123);
  const int dim = 24;
  distill::Discriminator d(disc_config(dim, 5));
  // Separable frozen batch: teacher features carry a +1.5 offset.
  std::vector<ad::Var> teacher, student;
  for (int i = 0; i < 6; ++i) {
    auto t = random_tensor({dim}, rng);
    for (auto& v : t.v) v += 1.5;
    teacher.push_back(ad::constant(t));
    student.push_back(ad::constant(random_tensor({dim}, rng)));
  }
  ad::Adam adam(1e-3);
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 10; ++step) {
    ad::zero_grads(d.params());
    const auto loss = distill::dis_loss(d, teacher, student);
    CHECK(loss->value.v[0] < prev);
    prev = loss->value.v[0];
    ad::backward(loss);
    adam.step(d.params());
  }
}

TEST_CASE("train_step: gates, frozen teacher and baseline equivalence") {
  const auto video = tiny_video(404);
  const auto step_cfg = tiny_step_config();

  track::TrackerNet teacher(tiny_net_config(1));
  track::TrackerNet student_a(tiny_net_config(1));
  track::TrackerNet student_b(tiny_net_config(1));
  student_a.copy_params_from(teacher);
  student_b.copy_params_from(teacher);

  const int roi_dim = 8 * 3 * 3;
  distill::Discriminator disc_a(disc_config(roi_dim, 7));
  distill::Discriminator disc_b(disc_config(roi_dim, 7));

  SUBCASE("a teacher that is no better closes the gates and reproduces the baseline step") {
    // Identical parameters and undegraded student inputs: both networks
    // compute identical losses, so rdm hits its (x, x) -> 0 boundary and
    // every gated term is multiplied by exactly zero.
    auto clean_cfg = step_cfg;
    clean_cfg.degrade_inputs = false;
    distill::OptimizerConfig opt;
    distill::DistillTrainer with_teacher(&teacher, student_a, disc_a, clean_cfg, opt, 5);
    distill::DistillTrainer baseline(nullptr, student_b, disc_b, clean_cfg, opt, 5);

    Rng sample_rng(17);
    const auto batch = distill::sample_video(video, clean_cfg, 48, sample_rng);
    const auto stats = with_teacher.step(batch);
    const auto base_stats = baseline.step(batch);

    REQUIRE(stats.applied);
    CHECK(stats.gate.rdm_cls == 0.0);
    CHECK(stats.gate.rdm_iou == 0.0);
    CHECK(stats.bundle.total == base_stats.bundle.total);

    // With both gates at zero the student gradient equals the baseline
    // gradient exactly, so the updated parameters match bit for bit.
    const auto pa = student_a.all_params();
    const auto pb = student_b.all_params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].var->value.v == pb[i].var->value.v);
    }
  }

  SUBCASE("the degradation opens the gates and every distillation term engages") {
    // Identical parameters, degraded student inputs: per batch the student
    // loss fluctuates around the teacher's, so the reliable-distillation
    // gates open on some steps and stay closed on others.
    distill::OptimizerConfig opt;
    distill::DistillTrainer trainer(&teacher, student_a, disc_a, step_cfg, opt, 5);
    Rng sample_rng(17);
    bool saw_cls_gate = false, saw_iou_gate = false;
    for (int i = 0; i < 12; ++i) {
      const auto batch = distill::sample_video(video, step_cfg, 48, sample_rng);
      const auto stats = trainer.step(batch);
      REQUIRE(stats.applied);
      CHECK(stats.gate.rdm_cls >= 0.0);
      CHECK(stats.gate.rdm_iou >= 0.0);
      saw_cls_gate = saw_cls_gate || stats.gate.rdm_cls > 0.0;
      saw_iou_gate = saw_iou_gate || stats.gate.rdm_iou > 0.0;
      // The distillation terms themselves are live: degraded features differ
      // from the teacher's, and the discriminator objective is evaluated.
      CHECK(stats.bundle.gen > 0.0);
      CHECK(stats.bundle.cons > 0.0);
      CHECK(stats.bundle.dis > 0.0);
    }
    CHECK(saw_cls_gate);
    CHECK(saw_iou_gate);
  }

  SUBCASE("teacher parameters never change across steps") {
    const std::uint64_t before = teacher.param_hash();
    distill::OptimizerConfig opt;
    distill::DistillTrainer trainer(&teacher, student_a, disc_a, step_cfg, opt, 5);
    Rng sample_rng(19);
    for (int i = 0; i < 5; ++i) {
      const auto batch = distill::sample_video(video, step_cfg, 48, sample_rng);
      trainer.step(batch);
    }
    CHECK(teacher.param_hash() == before);
  }
}

TEST_CASE("train is deterministic per seed") {
  const std::vector<synth::SynthSequence> videos{tiny_video(1), tiny_video(2)};
  distill::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.videos_per_epoch = 3;
  cfg.step = tiny_step_config();
  cfg.seed = 55;

  auto run = [&](std::uint64_t seed) {
    track::TrackerNet teacher(tiny_net_config(9));
    track::TrackerNet student(tiny_net_config(9));
    student.copy_params_from(teacher);
    distill::Discriminator disc(disc_config(8 * 3 * 3, 3));
    distill::TrainConfig c = cfg;
    c.seed = seed;
    distill::train(&teacher, student, disc, videos, c);
    return student.param_hash();
  };
  CHECK(run(55) == run(55));
  CHECK(run(55) != run(56));
}
