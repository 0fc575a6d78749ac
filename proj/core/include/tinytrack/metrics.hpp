#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinytrack/box.hpp"
#include "tinytrack/dataset.hpp"

namespace tinytrack::metrics {

/// One tracker's output on one sequence; one box per frame, the first box is
/// the ground truth by the one-pass evaluation protocol.
struct TrackResult {
  std::string sequence_name;
  std::vector<BoundingBox> boxes;
};

struct MetricCurve {
  std::vector<double> thresholds;
  std::vector<double> values;  // fraction of successful frames per threshold
};

constexpr int kCurveSamples = 51;
constexpr double kPrecisionMaxPx = 50.0;   // precision curve spans 0..50 px
constexpr double kPrecisionRankPx = 5.0;   // PR reads the curve at 5 px
constexpr double kNprMaxThreshold = 0.5;   // normalized precision spans 0..0.5

/// Per-sequence scores. Frame success conventions: precision-style metrics
/// count err <= threshold, the success/IoU metric counts iou > threshold.
/// NPR and SR are curve means, which normalizes both AUCs onto [0, 1].
struct SequenceScores {
  double pr = 0.0;
  double npr = 0.0;
  double sr = 0.0;
  MetricCurve pr_curve;
  MetricCurve npr_curve;
  MetricCurve sr_curve;
};

SequenceScores evaluate_sequence(const TrackResult& result,
                                 const data::SequenceRecord& gt);

/// Individual metric entry points (each validates the length contract).
double precision_score(const TrackResult& result, const data::SequenceRecord& gt,
                       MetricCurve* curve = nullptr);
double normalized_precision_score(const TrackResult& result,
                                  const data::SequenceRecord& gt,
                                  MetricCurve* curve = nullptr);
double success_score(const TrackResult& result, const data::SequenceRecord& gt,
                     MetricCurve* curve = nullptr);

/// Average of per-sequence scores and curves (the one-pass protocol ranks
/// trackers by these means).
struct TrackerScores {
  int sequence_count = 0;
  double pr = 0.0;
  double npr = 0.0;
  double sr = 0.0;
  MetricCurve pr_curve;
  MetricCurve npr_curve;
  MetricCurve sr_curve;
};

TrackerScores aggregate(std::span<const SequenceScores> scores);

/// Evaluate one tracker across sequences; every result must name a manifest
/// sequence with matching length. Sequences are processed in parallel.
TrackerScores evaluate_tracker(const std::vector<TrackResult>& results,
                               const data::DatasetManifest& manifest);

/// Attribute-conditioned scores; entries for attributes with no flagged
/// sequence in the evaluated set are absent rather than zero.
struct AttributeReport {
  std::array<std::optional<TrackerScores>, data::kAttributeCount> per_attribute;
};

AttributeReport attribute_report(const std::vector<TrackResult>& results,
                                 const data::DatasetManifest& manifest);

/// Result JSON files: {"tracker": name, "results": [{"sequence": ...,
/// "boxes": [[x,y,w,h], ...]}, ...]}.
struct TrackerRun {
  std::string tracker;
  std::vector<TrackResult> results;
};

TrackerRun read_results_json(const std::filesystem::path& path);
void write_results_json(const std::filesystem::path& path, const TrackerRun& run);

}  // namespace tinytrack::metrics
