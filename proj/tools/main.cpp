// tinytrack command line: dataset tooling, synthetic data generation,
// degradation preview, offline training, online tracking and evaluation
// reports. Every subcommand takes --seed/--config/--out and echoes its
// effective configuration into the output directory.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "tinytrack/checkpoint.hpp"
#include "tinytrack/dataset.hpp"
#include "tinytrack/degrade.hpp"
#include "tinytrack/distill.hpp"
#include "tinytrack/metrics.hpp"
#include "tinytrack/plot.hpp"
#include "tinytrack/run_config.hpp"
#include "tinytrack/synth.hpp"
#include "tinytrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace tinytrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value configuration file");
  cmd->add_option("--out", args.out_dir, "output directory for this run");
  cmd->add_option("--seed", args.seed, "global random seed");
}

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
  cfg.set("seed", std::to_string(args.seed));
  return cfg;
}

data::DatasetManifest load_or_die(const fs::path& root, bool report_errors = true) {
  auto report = data::load_manifest(root);
  if (report_errors) {
    for (const auto& err : report.errors) {
      std::cerr << "warning: sequence '" << err.sequence << "': " << err.message << "\n";
    }
  }
  if (report.manifest.sequences.empty()) {
    throw std::runtime_error("no loadable sequences under " + root.string());
  }
  return std::move(report.manifest);
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string token;
  std::stringstream ss(s);
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

track::TrackerNetConfig net_config_from(const RunConfig& cfg, std::uint64_t seed) {
  track::TrackerNetConfig net;
  net.net_input = cfg.integer("net_input", 128);
  net.backbone.base_channels = cfg.integer("base_channels", 8);
  net.backbone.out_channels = cfg.integer("out_channels", 16);
  net.iou.hidden = cfg.integer("iou_hidden", 64);
  net.filter_size = cfg.integer("filter_size", 5);
  net.filter_lambda = cfg.num("filter_lambda", 0.05);
  net.label_sigma = cfg.num("label_sigma", 1.0);
  net.seed = cfg.seed("net_seed", seed);
  return net;
}

const std::set<std::string> kTrainKeys = {
    "seed",          "epochs",         "videos_per_epoch", "mode",
    "net_input",     "base_channels",  "out_channels",     "iou_hidden",
    "filter_size",   "filter_lambda",  "label_sigma",      "net_seed",
    "frames_train",  "frames_test",    "filter_iters",     "kl_grid_res",
    "kl_center_range", "kl_log_range", "kl_label_sigma",   "crop_context",
    "lr_classifier", "lr_regressor",   "lr_backbone",      "lr_discriminator",
    "lr_decay",      "lr_decay_every", "scale_divisor",    "alpha",
    "beta",          "gamma",          "delta",            "eta",
    "degrade_inputs",
};

distill::TrainConfig train_config_from(const RunConfig& cfg, int net_input,
                                       std::uint64_t seed) {
  distill::TrainConfig t;
  t.epochs = cfg.integer("epochs", 2);
  t.videos_per_epoch = cfg.integer("videos_per_epoch", 40);
  t.seed = seed;
  t.step.frames_train = cfg.integer("frames_train", 2);
  t.step.frames_test = cfg.integer("frames_test", 1);
  t.step.filter_iters = cfg.integer("filter_iters", 3);
  t.step.kl_grid_res = cfg.integer("kl_grid_res", 5);
  t.step.kl_center_range = cfg.num("kl_center_range", 0.4);
  t.step.kl_log_range = cfg.num("kl_log_range", 0.3);
  t.step.kl_label_sigma = cfg.num("kl_label_sigma", 0.15);
  t.step.crop_context = cfg.num("crop_context", 4.0);
  t.step.degrade_inputs = cfg.flag("degrade_inputs", true);
  t.step.degrade_spec.scale_divisor = cfg.num("scale_divisor", 16.0);
  t.step.degrade_spec.network_input_size = net_input;
  t.step.degrade_spec.seed = seed ^ 0xdead;
  t.step.weights.alpha = cfg.num("alpha", 100.0);
  t.step.weights.beta = cfg.num("beta", 0.01);
  t.step.weights.gamma = cfg.num("gamma", 5.0);
  t.step.weights.delta = cfg.num("delta", 2.0);
  t.step.weights.eta = cfg.num("eta", 0.1);
  t.optimizer.lr_classifier = cfg.num("lr_classifier", 5e-5);
  t.optimizer.lr_regressor = cfg.num("lr_regressor", 5e-4);
  t.optimizer.lr_backbone = cfg.num("lr_backbone", 5e-5);
  t.optimizer.lr_discriminator = cfg.num("lr_discriminator", 1e-4);
  t.optimizer.lr_decay = cfg.num("lr_decay", 0.2);
  t.optimizer.lr_decay_every = cfg.integer("lr_decay_every", 15);
  return t;
}

distill::DistillFlags flags_for_mode(const std::string& mode) {
  if (mode == "baseline" || mode == "none") return distill::DistillFlags::none();
  if (mode == "full") return {true, true, true};
  if (mode == "feature") return {true, false, false};
  if (mode == "score") return {false, true, false};
  if (mode == "iou") return {false, false, true};
  throw std::invalid_argument("unknown training mode '" + mode +
                              "' (baseline|full|feature|score|iou)");
}

std::vector<synth::SynthSequence> load_videos(const data::DatasetManifest& manifest,
                                              const std::set<std::string>* filter) {
  std::vector<synth::SynthSequence> videos;
  for (const auto& seq : manifest.sequences) {
    if (filter && !filter->count(seq.name)) continue;
    synth::SynthSequence video;
    video.record = seq;
    video.frames = data::load_frames(seq);
    videos.push_back(std::move(video));
  }
  if (videos.empty()) throw std::runtime_error("no sequences matched the selection");
  return videos;
}

std::map<std::string, data::SplitTag> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file " + path.string());
  std::map<std::string, data::SplitTag> tags;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line == "sequence,split") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string name = line.substr(0, comma);
    const std::string tag = line.substr(comma + 1);
    tags[name] = tag == "test" ? data::SplitTag::test : data::SplitTag::train;
  }
  return tags;
}

// ---- subcommand bodies ----

int run_validate(const std::string& data_dir, const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed"});
  cfg.set("data", data_dir);
  const auto report = data::load_manifest(data_dir);
  for (const auto& err : report.errors) {
    std::cout << "INVALID " << err.sequence << ": " << err.message << "\n";
  }
  std::cout << report.manifest.sequences.size() << " valid sequence(s), "
            << report.errors.size() << " invalid\n";
  if (!common.out_dir.empty()) {
    cfg.write_echo(common.out_dir);
    std::ofstream out(fs::path(common.out_dir) / "validation.txt");
    for (const auto& err : report.errors) {
      out << err.sequence << "," << err.message << "\n";
    }
  }
  return report.errors.empty() ? kExitOk : kExitValidation;
}

int run_stats(const std::string& data_dir, const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed"});
  cfg.set("data", data_dir);
  const auto manifest = load_or_die(data_dir);
  const auto stats = data::dataset_stats(manifest);

  int tiny = 0;
  for (const auto& seq : manifest.sequences) {
    if (data::is_tiny(seq)) ++tiny;
  }

  std::printf("sequences     %d\n", stats.sequence_count);
  std::printf("tiny          %d\n", tiny);
  std::printf("min frames    %d\n", stats.min_frames);
  std::printf("max frames    %d\n", stats.max_frames);
  std::printf("avg frames    %lld (exact %.2f)\n",
              static_cast<long long>(std::llround(stats.avg_frames)), stats.avg_frames);
  std::printf("total frames  %lld\n", stats.total_frames);
  std::printf("classes       %zu\n", stats.class_counts.size());
  std::printf("attributes   ");
  for (int a = 0; a < data::kAttributeCount; ++a) {
    std::printf(" %s=%d", data::kAttributeNames[a], stats.attribute_counts[a]);
  }
  std::printf("\n");

  if (!common.out_dir.empty()) {
    cfg.write_echo(common.out_dir);
    std::ofstream out(fs::path(common.out_dir) / "stats.csv");
    out << "metric,value\n";
    out << "sequences," << stats.sequence_count << "\n";
    out << "tiny," << tiny << "\n";
    out << "min_frames," << stats.min_frames << "\n";
    out << "max_frames," << stats.max_frames << "\n";
    out << "avg_frames," << stats.avg_frames << "\n";
    out << "total_frames," << stats.total_frames << "\n";
    for (const auto& [cls, count] : stats.class_counts) {
      out << "class_" << cls << "," << count << "\n";
    }
    for (int a = 0; a < data::kAttributeCount; ++a) {
      out << "attr_" << data::kAttributeNames[a] << "," << stats.attribute_counts[a]
          << "\n";
    }
  }
  return kExitOk;
}

int run_split(const std::string& data_dir, const std::string& pool_file, int test_count,
              const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed"});
  cfg.set("data", data_dir);
  cfg.set("test_count", std::to_string(test_count));
  const auto manifest = load_or_die(data_dir);

  std::vector<std::string> pool;
  if (!pool_file.empty()) {
    std::ifstream in(pool_file);
    if (!in) throw std::runtime_error("cannot open pool file " + pool_file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) pool.push_back(line);
    }
    cfg.set("test_pool", pool_file);
  } else {
    for (const auto& seq : manifest.sequences) pool.push_back(seq.name);
  }

  const auto tagged = data::split_manifest(manifest, pool, test_count, common.seed);
  int test = 0;
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!common.out_dir.empty()) {
    cfg.write_echo(common.out_dir);
    file.open(fs::path(common.out_dir) / "split.csv");
    out = &file;
  }
  (*out) << "sequence,split\n";
  for (size_t i = 0; i < tagged.sequences.size(); ++i) {
    const bool is_test = tagged.tag(i) == data::SplitTag::test;
    if (is_test) ++test;
    (*out) << tagged.sequences[i].name << "," << (is_test ? "test" : "train") << "\n";
  }
  std::cout << test << " test / " << (tagged.sequences.size() - test) << " train\n";
  return kExitOk;
}

int run_synth(const std::string& preset, int count, const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed"});
  if (common.out_dir.empty()) {
    throw std::invalid_argument("synth requires --out");
  }
  cfg.set("preset", preset);
  cfg.set("count", std::to_string(count));

  std::vector<synth::SynthConfig> configs;
  if (preset == "train") {
    configs = synth::mini_benchmark_train_configs(count, common.seed);
  } else if (preset == "test") {
    configs = synth::mini_benchmark_test_configs(count, common.seed);
  } else if (preset == "challenges") {
    // One sequence per headline challenge attribute, tiny sprites.
    Rng rng(common.seed);
    for (int i = 0; i < count; ++i) {
      synth::SynthConfig c;
      c.image_width = 320;
      c.image_height = 240;
      c.object_size = rng.uniform(12, 20);
      c.frames = 30;
      c.seed = rng.next_u64();
      switch (i % 5) {
        case 0: c.speed = c.object_size * 1.5; c.motion = synth::MotionKind::fast; break;
        case 1: c.blur_radius = 2; break;
        case 2: c.occluder = synth::OccluderSpec{10, 3}; break;
        case 3: c.distractor_count = 3; break;
        case 4: c.illumination_drop = 0.45; break;
      }
      char name[32];
      std::snprintf(name, sizeof(name), "challenge_%03d", i);
      c.name = name;
      configs.push_back(c);
    }
  } else {
    throw std::invalid_argument("unknown preset '" + preset + "' (train|test|challenges)");
  }
  synth::write_dataset(common.out_dir, configs);
  cfg.write_echo(common.out_dir);
  std::cout << "wrote " << configs.size() << " sequence(s) to " << common.out_dir << "\n";
  return kExitOk;
}

int run_degrade(const std::string& image_path, const std::string& boxes_path,
                const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed", "scale_divisor", "network_input_size"});
  if (common.out_dir.empty()) throw std::invalid_argument("degrade requires --out");
  cfg.set("image", image_path);
  cfg.set("boxes", boxes_path);

  const Image image = read_pgm(image_path);
  std::vector<BoundingBox> boxes;
  std::ifstream in(boxes_path);
  if (!in) throw std::runtime_error("cannot open boxes file " + boxes_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto box = data::parse_box_line(line);
    if (!box) throw std::runtime_error("malformed box line: " + line);
    boxes.push_back(*box);
  }

  degrade::DegradeSpec spec;
  spec.scale_divisor = cfg.num("scale_divisor", 16.0);
  spec.network_input_size = cfg.integer("network_input_size", 352);
  spec.seed = common.seed;
  const double d = degrade::batch_scale_factor(boxes, spec);
  degrade::Degrader degrader(spec);
  const Image out = degrader(image, d);

  fs::create_directories(common.out_dir);
  write_pgm(out, fs::path(common.out_dir) / "degraded.pgm");
  cfg.set("factor", std::to_string(d));
  cfg.write_echo(common.out_dir);
  std::cout << "scale factor " << d << ", wrote degraded.pgm\n";
  return kExitOk;
}

int run_train(const std::string& data_dir, const std::string& mode,
              const std::string& teacher_path, const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known(kTrainKeys);
  if (common.out_dir.empty()) throw std::invalid_argument("train requires --out");
  cfg.set("data", data_dir);
  cfg.set("mode", mode);

  const auto manifest = load_or_die(data_dir);
  const auto videos = load_videos(manifest, nullptr);

  const auto flags = flags_for_mode(mode);
  std::optional<track::TrackerNet> teacher;
  track::TrackerNetConfig net_cfg = net_config_from(cfg, common.seed);
  if (!teacher_path.empty()) {
    auto loaded = load_checkpoint(teacher_path);
    net_cfg = loaded.net.config();
    teacher.emplace(net_cfg);
    teacher->copy_params_from(loaded.net);
    cfg.set("teacher", teacher_path);
  } else if (flags.any()) {
    throw std::invalid_argument("mode '" + mode + "' needs --teacher <checkpoint>");
  }

  track::TrackerNet student(net_cfg);
  if (teacher) student.copy_params_from(*teacher);

  distill::Discriminator::Config dcfg;
  dcfg.input_dim = net_cfg.backbone.out_channels * net_cfg.iou.roi_bins * net_cfg.iou.roi_bins;
  dcfg.init_seed = common.seed ^ 0xd15c;
  distill::Discriminator disc(dcfg);

  auto train_cfg = train_config_from(cfg, net_cfg.net_input, common.seed);
  train_cfg.step.flags = flags;

  const auto outcome = distill::train(teacher ? &*teacher : nullptr, student, disc,
                                      videos, train_cfg);

  fs::create_directories(common.out_dir);
  save_checkpoint(fs::path(common.out_dir) / "student", student,
                  {{"mode", mode},
                   {"steps", std::to_string(outcome.steps)},
                   {"seed", std::to_string(common.seed)}});
  {
    std::ofstream hist(fs::path(common.out_dir) / "history.csv");
    hist << "step,cls,iou,gen,dis,cons,score_d,iou_d,total\n";
    for (size_t i = 0; i < outcome.history.size(); ++i) {
      const auto& b = outcome.history[i];
      hist << i << "," << b.cls << "," << b.iou << "," << b.gen << "," << b.dis << ","
           << b.cons << "," << b.score_d << "," << b.iou_d << "," << b.total << "\n";
    }
  }
  cfg.write_echo(common.out_dir);
  std::cout << "trained " << outcome.steps << " step(s), " << outcome.aborted_steps
            << " aborted; checkpoint in " << common.out_dir << "\n";
  return kExitOk;
}

int run_track(const std::string& data_dir, const std::string& checkpoint_path,
              const std::string& tracker_name, const std::string& split_file,
              const std::string& subset, const std::string& sequences_arg,
              const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed", "search_scale", "update_interval", "refine_steps",
                     "memory_capacity"});
  if (common.out_dir.empty()) throw std::invalid_argument("track requires --out");
  cfg.set("data", data_dir);
  cfg.set("checkpoint", checkpoint_path);

  const auto manifest = load_or_die(data_dir);
  std::set<std::string> picked;
  if (!sequences_arg.empty()) {
    for (const auto& name : split_csv_list(sequences_arg)) picked.insert(name);
  } else if (!split_file.empty()) {
    const auto tags = read_split_file(split_file);
    const auto want = subset == "train" ? data::SplitTag::train : data::SplitTag::test;
    for (const auto& [name, tag] : tags) {
      if (tag == want) picked.insert(name);
    }
  } else {
    for (const auto& seq : manifest.sequences) picked.insert(seq.name);
  }

  auto loaded = load_checkpoint(checkpoint_path);
  track::TrackerConfig tracker_cfg;
  tracker_cfg.search_scale = cfg.num("search_scale", 5.0);
  tracker_cfg.update_interval = cfg.integer("update_interval", 20);
  tracker_cfg.refine_steps = cfg.integer("refine_steps", 10);
  tracker_cfg.memory_capacity = cfg.integer("memory_capacity", 40);

  metrics::TrackerRun run;
  run.tracker = tracker_name;
  for (const auto& seq : manifest.sequences) {
    if (!picked.count(seq.name)) continue;
    const auto frames = data::load_frames(seq);
    track::Tracker tracker(loaded.net, tracker_cfg);
    run.results.push_back(
        tracker.track_sequence(frames, seq.annotations[0].box, seq.name));
    std::cout << "tracked " << seq.name << " (" << frames.size() << " frames)\n";
  }

  fs::create_directories(common.out_dir);
  metrics::write_results_json(fs::path(common.out_dir) / "results.json", run);
  cfg.write_echo(common.out_dir);
  return kExitOk;
}

void write_curves_csv(const fs::path& path,
                      const std::vector<std::pair<std::string, metrics::TrackerScores>>& all) {
  std::ofstream out(path);
  out << "tracker,metric,threshold,value\n";
  for (const auto& [name, scores] : all) {
    auto dump = [&](const char* metric, const metrics::MetricCurve& curve) {
      for (size_t i = 0; i < curve.thresholds.size(); ++i) {
        out << name << "," << metric << "," << curve.thresholds[i] << ","
            << curve.values[i] << "\n";
      }
    };
    dump("precision", scores.pr_curve);
    dump("normalized_precision", scores.npr_curve);
    dump("success", scores.sr_curve);
  }
}

int run_eval(const std::string& results_arg, const std::string& data_dir,
             const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed"});
  if (common.out_dir.empty()) throw std::invalid_argument("eval requires --out");
  cfg.set("data", data_dir);
  cfg.set("results", results_arg);

  const auto manifest = load_or_die(data_dir);
  std::vector<std::pair<std::string, metrics::TrackerScores>> all;
  for (const auto& path : split_csv_list(results_arg)) {
    const auto run = metrics::read_results_json(path);
    all.emplace_back(run.tracker, metrics::evaluate_tracker(run.results, manifest));
  }

  fs::create_directories(common.out_dir);
  {
    std::ofstream out(fs::path(common.out_dir) / "scores.csv");
    out << "tracker,sequences,pr,npr,sr\n";
    for (const auto& [name, scores] : all) {
      char line[256];
      std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f,%.6f\n", name.c_str(),
                    scores.sequence_count, scores.pr, scores.npr, scores.sr);
      out << line;
    }
  }
  write_curves_csv(fs::path(common.out_dir) / "curves.csv", all);

  auto plot_metric = [&](const char* file, const char* title, const char* xlabel,
                         auto curve_member, auto score_member, double x_max) {
    auto ranked = all;
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      return a.second.*score_member > b.second.*score_member;
    });
    std::vector<plot::Series> series;
    for (const auto& [name, scores] : ranked) {
      plot::Series s;
      char label[128];
      std::snprintf(label, sizeof(label), "%s [%.3f]", name.c_str(),
                    scores.*score_member);
      s.label = label;
      const metrics::MetricCurve& curve = scores.*curve_member;
      s.xs = curve.thresholds;
      s.ys = curve.values;
      series.push_back(std::move(s));
    }
    plot::render_curves(fs::path(common.out_dir) / file, title, xlabel, "RATE", series,
                        0.0, x_max);
  };
  plot_metric("precision_plot.png", "PRECISION PLOT", "CENTER ERROR PX",
              &metrics::TrackerScores::pr_curve, &metrics::TrackerScores::pr, 50.0);
  plot_metric("normalized_precision_plot.png", "NORMALIZED PRECISION PLOT",
              "NORMALIZED ERROR", &metrics::TrackerScores::npr_curve,
              &metrics::TrackerScores::npr, 0.5);
  plot_metric("success_plot.png", "SUCCESS PLOT", "OVERLAP THRESHOLD",
              &metrics::TrackerScores::sr_curve, &metrics::TrackerScores::sr, 1.0);

  cfg.write_echo(common.out_dir);
  for (const auto& [name, scores] : all) {
    std::printf("%-24s PR %.3f  NPR %.3f  SR %.3f  (%d sequences)\n", name.c_str(),
                scores.pr, scores.npr, scores.sr, scores.sequence_count);
  }
  return kExitOk;
}

int run_report(const std::string& results_arg, const std::string& data_dir,
               const CommonArgs& common) {
  auto cfg = load_config(common);
  cfg.require_known({"seed"});
  if (common.out_dir.empty()) throw std::invalid_argument("report requires --out");
  cfg.set("data", data_dir);
  cfg.set("results", results_arg);

  const auto manifest = load_or_die(data_dir);
  fs::create_directories(common.out_dir);
  std::ofstream out(fs::path(common.out_dir) / "attribute_report.csv");
  out << "tracker,metric";
  for (int a = 0; a < data::kAttributeCount; ++a) out << "," << data::kAttributeNames[a];
  out << "\n";

  for (const auto& path : split_csv_list(results_arg)) {
    const auto run = metrics::read_results_json(path);
    const auto report = metrics::attribute_report(run.results, manifest);
    auto dump = [&](const char* metric, auto member) {
      out << run.tracker << "," << metric;
      for (int a = 0; a < data::kAttributeCount; ++a) {
        if (report.per_attribute[a]) {
          char value[32];
          std::snprintf(value, sizeof(value), "%.6f", (*report.per_attribute[a]).*member);
          out << "," << value;
        } else {
          out << ",absent";
        }
      }
      out << "\n";
    };
    dump("pr", &metrics::TrackerScores::pr);
    dump("npr", &metrics::TrackerScores::npr);
    dump("sr", &metrics::TrackerScores::sr);
  }
  cfg.write_echo(common.out_dir);
  std::cout << "wrote attribute_report.csv\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiny object tracking laboratory"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data_dir, pool_file, preset = "train", image_path, boxes_path;
  std::string mode = "baseline", teacher_path, checkpoint_path, tracker_name = "tinytrack";
  std::string split_file, subset = "test", sequences_arg, results_arg;
  int test_count = 0, count = 10;

  auto* validate = app.add_subcommand("validate", "check a dataset directory");
  validate->add_option("data", data_dir, "dataset root")->required();
  add_common(validate, common);

  auto* stats = app.add_subcommand("stats", "dataset summary statistics");
  stats->add_option("data", data_dir, "dataset root")->required();
  add_common(stats, common);

  auto* split = app.add_subcommand("split", "train/test split with a seeded draw");
  split->add_option("data", data_dir, "dataset root")->required();
  split->add_option("--test-pool", pool_file, "file with candidate test sequence names");
  split->add_option("--test-count", test_count, "number of test sequences")->required();
  add_common(split, common);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--preset", preset, "train|test|challenges");
  synth_cmd->add_option("--count", count, "number of sequences");
  add_common(synth_cmd, common);

  auto* degrade_cmd = app.add_subcommand("degrade", "degrade one image for inspection");
  degrade_cmd->add_option("--image", image_path, "input PGM image")->required();
  degrade_cmd->add_option("--boxes", boxes_path, "x,y,w,h lines driving the factor")
      ->required();
  add_common(degrade_cmd, common);

  auto* train_cmd = app.add_subcommand("train", "offline training");
  train_cmd->add_option("--data", data_dir, "training dataset root")->required();
  train_cmd->add_option("--mode", mode, "baseline|full|feature|score|iou");
  train_cmd->add_option("--teacher", teacher_path, "teacher checkpoint base path");
  add_common(train_cmd, common);

  auto* track_cmd = app.add_subcommand("track", "run the tracker over sequences");
  track_cmd->add_option("--data", data_dir, "dataset root")->required();
  track_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint base path")
      ->required();
  track_cmd->add_option("--tracker-name", tracker_name, "name recorded in the results");
  track_cmd->add_option("--split-file", split_file, "split.csv from the split command");
  track_cmd->add_option("--subset", subset, "test|train (with --split-file)");
  track_cmd->add_option("--sequences", sequences_arg, "comma-separated sequence names");
  add_common(track_cmd, common);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate result files");
  eval_cmd->add_option("--results", results_arg, "comma-separated results JSON files")
      ->required();
  eval_cmd->add_option("--data", data_dir, "dataset root")->required();
  add_common(eval_cmd, common);

  auto* report_cmd = app.add_subcommand("report", "attribute-conditioned report");
  report_cmd->add_option("--results", results_arg, "comma-separated results JSON files")
      ->required();
  report_cmd->add_option("--data", data_dir, "dataset root")->required();
  add_common(report_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate->parsed()) return run_validate(data_dir, common);
    if (stats->parsed()) return run_stats(data_dir, common);
    if (split->parsed()) return run_split(data_dir, pool_file, test_count, common);
    if (synth_cmd->parsed()) return run_synth(preset, count, common);
    if (degrade_cmd->parsed()) return run_degrade(image_path, boxes_path, common);
    if (train_cmd->parsed()) return run_train(data_dir, mode, teacher_path, common);
    if (track_cmd->parsed()) {
      return run_track(data_dir, checkpoint_path, tracker_name, split_file, subset,
                       sequences_arg, common);
    }
    if (eval_cmd->parsed()) return run_eval(results_arg, data_dir, common);
    if (report_cmd->parsed()) return run_report(results_arg, data_dir, common);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
