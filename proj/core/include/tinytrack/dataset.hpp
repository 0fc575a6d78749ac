#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinytrack/box.hpp"
#include "tinytrack/image.hpp"

namespace tinytrack::data {

/// Challenge attributes, in the fixed published order.
enum class Attr { SV, FM, OV, IV, CM, MB, BC, SO, PO, FO, AM, LI };

constexpr int kAttributeCount = 12;
constexpr std::array<const char*, kAttributeCount> kAttributeNames = {
    "SV", "FM", "OV", "IV", "CM", "MB", "BC", "SO", "PO", "FO", "AM", "LI"};

struct AttributeVector {
  std::array<bool, kAttributeCount> flags{};

  bool& operator[](Attr a) { return flags[static_cast<int>(a)]; }
  bool operator[](Attr a) const { return flags[static_cast<int>(a)]; }
  bool any() const {
    for (bool f : flags)
      if (f) return true;
    return false;
  }
};

struct FrameAnnotation {
  int frame_index = 0;
  BoundingBox box;
  int image_width = 0;
  int image_height = 0;
};

struct SequenceRecord {
  std::string name;
  std::string class_label;
  std::vector<FrameAnnotation> annotations;
  AttributeVector attributes;
  /// Directory holding per-frame image files, empty for in-memory sequences.
  std::filesystem::path frames_dir;

  int image_width() const { return annotations.empty() ? 0 : annotations.front().image_width; }
  int image_height() const { return annotations.empty() ? 0 : annotations.front().image_height; }
  int frame_count() const { return static_cast<int>(annotations.size()); }
};

enum class SplitTag { unassigned, train, test };

struct DatasetManifest {
  std::vector<SequenceRecord> sequences;
  std::vector<SplitTag> split;  // parallel to sequences; empty means all unassigned

  SplitTag tag(size_t i) const {
    return i < split.size() ? split[i] : SplitTag::unassigned;
  }
};

struct LoadError {
  std::string sequence;
  std::string message;
};

struct LoadReport {
  DatasetManifest manifest;
  std::vector<LoadError> errors;
};

/// Parse one `x,y,w,h` annotation line. Returns nullopt on malformed input.
std::optional<BoundingBox> parse_box_line(std::string_view line);

/// Serialize a box the way annotation files store it: fixed two decimal
/// places, comma separated. parse -> format round-trips two-decimal files
/// byte for byte.
std::string format_box_line(const BoundingBox& box);

/// Load a dataset directory: one subdirectory per sequence containing
/// groundtruth.txt, attributes.txt and meta.txt (plus an optional img/ dir
/// with one file per frame). Malformed sequences land in the error list and
/// are excluded from the manifest; well-formed ones always load.
LoadReport load_manifest(const std::filesystem::path& root);

/// Write a sequence in the on-disk layout load_manifest expects. Frames, if
/// any, are the caller's responsibility (see synth::write_dataset).
void write_sequence_metadata(const std::filesystem::path& sequence_dir,
                             const SequenceRecord& record);

/// Read the per-frame image files of a sequence (sorted by filename).
/// Requires frames_dir to be set and hold exactly one file per annotation.
std::vector<Image> load_frames(const SequenceRecord& record);

/// Mean over frames of box area w*h, in px^2.
double average_absolute_size(const SequenceRecord& seq);

/// Mean over frames of box area divided by image area.
double average_relative_size(const SequenceRecord& seq);

/// A sequence is tiny iff its averaging absolute size is strictly below
/// 22*22 px^2 and its averaging relative size strictly below 1%. Note the
/// absolute threshold is applied to the mean of per-frame areas; see README
/// for why this reading of the 22x22 resolution threshold was chosen.
bool is_tiny(const SequenceRecord& seq);

constexpr double kTinyAbsoluteAreaThreshold = 22.0 * 22.0;
constexpr double kTinyRelativeAreaThreshold = 0.01;

struct DatasetStats {
  int sequence_count = 0;
  int min_frames = 0;
  int max_frames = 0;
  double avg_frames = 0.0;  // exact value; display rounding is up to callers
  long long total_frames = 0;
  std::map<std::string, int> class_counts;
  std::array<int, kAttributeCount> attribute_counts{};
};

DatasetStats dataset_stats(const DatasetManifest& manifest);

/// Tag `test_count` sequences (drawn uniformly from `test_pool` with the
/// given seed) as test and everything else as train. Deterministic for a
/// fixed seed. Throws std::invalid_argument if the pool is unknown or too
/// small.
DatasetManifest split_manifest(const DatasetManifest& manifest,
                               const std::vector<std::string>& test_pool,
                               int test_count, std::uint64_t seed);

}  // namespace tinytrack::data
