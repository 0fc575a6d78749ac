#include "tinytrack/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace tinytrack::metrics {

namespace {

std::vector<double> uniform_grid(double lo, double hi, int samples) {
  std::vector<double> grid(samples);
  for (int i = 0; i < samples; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / (samples - 1);
  }
  return grid;
}

void check_alignment(const TrackResult& result, const data::SequenceRecord& gt) {
  if (result.boxes.size() != gt.annotations.size()) {
    throw std::invalid_argument("metrics: result for '" + result.sequence_name +
                                "' has " + std::to_string(result.boxes.size()) +
                                " boxes but the sequence has " +
                                std::to_string(gt.annotations.size()) + " frames");
  }
}

MetricCurve success_fraction_curve(const std::vector<double>& grid,
                                   const std::vector<double>& per_frame,
                                   bool greater_than) {
  MetricCurve curve;
  curve.thresholds = grid;
  curve.values.resize(grid.size());
  const double n = static_cast<double>(per_frame.size());
  for (size_t t = 0; t < grid.size(); ++t) {
    int hits = 0;
    for (double v : per_frame) {
      const bool ok = greater_than ? (v > grid[t]) : (v <= grid[t]);
      if (ok) ++hits;
    }
    curve.values[t] = n > 0 ? hits / n : 0.0;
  }
  return curve;
}

double curve_mean(const MetricCurve& curve) {
  double acc = 0.0;
  for (double v : curve.values) acc += v;
  return curve.values.empty() ? 0.0 : acc / static_cast<double>(curve.values.size());
}

}  // namespace

double precision_score(const TrackResult& result, const data::SequenceRecord& gt,
                       MetricCurve* curve_out) {
  check_alignment(result, gt);
  std::vector<double> errors(result.boxes.size());
  for (size_t i = 0; i < result.boxes.size(); ++i) {
    errors[i] = center_error(result.boxes[i], gt.annotations[i].box);
  }
  const auto grid = uniform_grid(0.0, kPrecisionMaxPx, kCurveSamples);
  MetricCurve curve = success_fraction_curve(grid, errors, /*greater_than=*/false);
  // PR is the curve value at the 5 px ranking threshold.
  int rank_idx = 0;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] <= kPrecisionRankPx) rank_idx = static_cast<int>(i);
  }
  const double pr = curve.values[rank_idx];
  if (curve_out) *curve_out = std::move(curve);
  return pr;
}

double normalized_precision_score(const TrackResult& result,
                                  const data::SequenceRecord& gt,
                                  MetricCurve* curve_out) {
  check_alignment(result, gt);
  std::vector<double> errors(result.boxes.size());
  for (size_t i = 0; i < result.boxes.size(); ++i) {
    errors[i] = normalized_center_error(result.boxes[i], gt.annotations[i].box);
  }
  const auto grid = uniform_grid(0.0, kNprMaxThreshold, kCurveSamples);
  MetricCurve curve = success_fraction_curve(grid, errors, /*greater_than=*/false);
  const double npr = curve_mean(curve);
  if (curve_out) *curve_out = std::move(curve);
  return npr;
}

double success_score(const TrackResult& result, const data::SequenceRecord& gt,
                     MetricCurve* curve_out) {
  check_alignment(result, gt);
  std::vector<double> overlaps(result.boxes.size());
  for (size_t i = 0; i < result.boxes.size(); ++i) {
    overlaps[i] = iou(result.boxes[i], gt.annotations[i].box);
  }
  const auto grid = uniform_grid(0.0, 1.0, kCurveSamples);
  MetricCurve curve = success_fraction_curve(grid, overlaps, /*greater_than=*/true);
  const double sr = curve_mean(curve);
  if (curve_out) *curve_out = std::move(curve);
  return sr;
}

SequenceScores evaluate_sequence(const TrackResult& result,
                                 const data::SequenceRecord& gt) {
  SequenceScores s;
  s.pr = precision_score(result, gt, &s.pr_curve);
  s.npr = normalized_precision_score(result, gt, &s.npr_curve);
  s.sr = success_score(result, gt, &s.sr_curve);
  return s;
}

TrackerScores aggregate(std::span<const SequenceScores> scores) {
  TrackerScores out;
  out.sequence_count = static_cast<int>(scores.size());
  if (scores.empty()) return out;
  auto mean_curves = [&scores](auto curve_member) {
    MetricCurve mean = scores.front().*curve_member;
    std::fill(mean.values.begin(), mean.values.end(), 0.0);
    for (const auto& s : scores) {
      const MetricCurve& c = s.*curve_member;
      for (size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += c.values[i];
    }
    for (auto& v : mean.values) v /= static_cast<double>(scores.size());
    return mean;
  };
  out.pr_curve = mean_curves(&SequenceScores::pr_curve);
  out.npr_curve = mean_curves(&SequenceScores::npr_curve);
  out.sr_curve = mean_curves(&SequenceScores::sr_curve);
  for (const auto& s : scores) {
    out.pr += s.pr;
    out.npr += s.npr;
    out.sr += s.sr;
  }
  out.pr /= scores.size();
  out.npr /= scores.size();
  out.sr /= scores.size();
  return out;
}

namespace {

std::vector<SequenceScores> evaluate_all(const std::vector<TrackResult>& results,
                                         const data::DatasetManifest& manifest) {
  std::map<std::string, const data::SequenceRecord*> by_name;
  for (const auto& seq : manifest.sequences) by_name[seq.name] = &seq;
  for (const auto& r : results) {
    if (!by_name.count(r.sequence_name)) {
      throw std::invalid_argument("metrics: result sequence '" + r.sequence_name +
                                  "' is not in the manifest");
    }
  }
  std::vector<SequenceScores> scores(results.size());
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(results.size()));
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= results.size()) break;
      scores[i] = evaluate_sequence(results[i], *by_name.at(results[i].sequence_name));
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return scores;
}

}  // namespace

TrackerScores evaluate_tracker(const std::vector<TrackResult>& results,
                               const data::DatasetManifest& manifest) {
  const auto scores = evaluate_all(results, manifest);
  return aggregate(scores);
}

AttributeReport attribute_report(const std::vector<TrackResult>& results,
                                 const data::DatasetManifest& manifest) {
  std::map<std::string, const data::SequenceRecord*> by_name;
  for (const auto& seq : manifest.sequences) by_name[seq.name] = &seq;
  const auto scores = evaluate_all(results, manifest);

  AttributeReport report;
  for (int a = 0; a < data::kAttributeCount; ++a) {
    std::vector<SequenceScores> subset;
    for (size_t i = 0; i < results.size(); ++i) {
      const auto* seq = by_name.at(results[i].sequence_name);
      if (seq->attributes.flags[a]) subset.push_back(scores[i]);
    }
    if (!subset.empty()) {
      report.per_attribute[a] = aggregate(subset);
    }
  }
  return report;
}

TrackerRun read_results_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results file " + path.string());
  nlohmann::json j;
  in >> j;
  TrackerRun run;
  run.tracker = j.at("tracker").get<std::string>();
  for (const auto& item : j.at("results")) {
    TrackResult r;
    r.sequence_name = item.at("sequence").get<std::string>();
    for (const auto& b : item.at("boxes")) {
      if (b.size() != 4) throw std::runtime_error("box entries must be [x,y,w,h]");
      r.boxes.push_back(BoundingBox{b[0].get<double>(), b[1].get<double>(),
                                    b[2].get<double>(), b[3].get<double>()});
    }
    run.results.push_back(std::move(r));
  }
  return run;
}

void write_results_json(const std::filesystem::path& path, const TrackerRun& run) {
  nlohmann::json j;
  j["tracker"] = run.tracker;
  j["results"] = nlohmann::json::array();
  for (const auto& r : run.results) {
    nlohmann::json item;
    item["sequence"] = r.sequence_name;
    auto& boxes = item["boxes"] = nlohmann::json::array();
    for (const auto& b : r.boxes) {
      boxes.push_back({b.x, b.y, b.w, b.h});
    }
    j["results"].push_back(std::move(item));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results file " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace tinytrack::metrics
