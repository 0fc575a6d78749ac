#include "tinytrack/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tinytrack/rng.hpp"

namespace tinytrack::data {

namespace fs = std::filesystem;

std::optional<BoundingBox> parse_box_line(std::string_view line) {
  double vals[4];
  const char* p = line.data();
  const char* end = line.data() + line.size();
  for (int i = 0; i < 4; ++i) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    auto [next, ec] = std::from_chars(p, end, vals[i]);
    if (ec != std::errc{}) return std::nullopt;
    p = next;
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (i < 3) {
      if (p >= end || *p != ',') return std::nullopt;
      ++p;
    }
  }
  while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  if (p != end) return std::nullopt;
  return BoundingBox{vals[0], vals[1], vals[2], vals[3]};
}

std::string format_box_line(const BoundingBox& box) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f", box.x, box.y, box.w, box.h);
  return buf;
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // A trailing blank line is not an annotation.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::map<std::string, std::string> read_kv_file(const fs::path& path) {
  std::map<std::string, std::string> kv;
  for (const std::string& line : read_lines(path)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(val);
    kv[key] = val;
  }
  return kv;
}

int count_frame_files(const fs::path& img_dir) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(img_dir)) {
    if (entry.is_regular_file()) ++n;
  }
  return n;
}

// Loads one sequence directory; returns the error message on failure.
std::optional<std::string> load_sequence(const fs::path& dir, SequenceRecord& out) {
  const fs::path gt_path = dir / "groundtruth.txt";
  const fs::path attr_path = dir / "attributes.txt";
  const fs::path meta_path = dir / "meta.txt";
  if (!fs::exists(gt_path)) return "missing groundtruth.txt";
  if (!fs::exists(attr_path)) return "missing attributes.txt";
  if (!fs::exists(meta_path)) return "missing meta.txt";

  const auto meta = read_kv_file(meta_path);
  const auto cls = meta.find("class");
  const auto w_it = meta.find("image_width");
  const auto h_it = meta.find("image_height");
  if (cls == meta.end() || w_it == meta.end() || h_it == meta.end()) {
    return "meta.txt must define class, image_width and image_height";
  }
  int img_w = 0, img_h = 0;
  try {
    img_w = std::stoi(w_it->second);
    img_h = std::stoi(h_it->second);
  } catch (const std::exception&) {
    return "meta.txt has non-numeric image size";
  }
  if (img_w <= 0 || img_h <= 0) return "meta.txt image size must be positive";

  out.name = dir.filename().string();
  out.class_label = cls->second;

  const auto gt_lines = read_lines(gt_path);
  if (gt_lines.empty()) return "groundtruth.txt has no annotations";
  out.annotations.clear();
  out.annotations.reserve(gt_lines.size());
  for (size_t i = 0; i < gt_lines.size(); ++i) {
    const auto box = parse_box_line(gt_lines[i]);
    if (!box) {
      return "groundtruth.txt line " + std::to_string(i + 1) + " is malformed: '" +
             gt_lines[i] + "'";
    }
    if (!box->valid()) {
      return "groundtruth.txt line " + std::to_string(i + 1) +
             " violates box invariants (w > 0, h > 0, finite)";
    }
    if (box->x < 0 || box->y < 0 || box->x2() > img_w || box->y2() > img_h) {
      return "groundtruth.txt line " + std::to_string(i + 1) + " exceeds the image bounds";
    }
    out.annotations.push_back(
        FrameAnnotation{static_cast<int>(i), *box, img_w, img_h});
  }

  const auto attr_lines = read_lines(attr_path);
  if (attr_lines.empty()) return "attributes.txt is empty";
  {
    std::stringstream ss(attr_lines.front());
    std::string tok;
    int n = 0;
    while (std::getline(ss, tok, ',')) {
      const auto b = tok.find_first_not_of(" \t");
      if (b == std::string::npos) return "attributes.txt has an empty value";
      tok = tok.substr(b);
      if (n < kAttributeCount) {
        if (tok[0] == '1') {
          out.attributes.flags[n] = true;
        } else if (tok[0] == '0') {
          out.attributes.flags[n] = false;
        } else {
          return "attributes.txt value " + std::to_string(n + 1) + " is not 0/1";
        }
      }
      ++n;
    }
    if (n != kAttributeCount) {
      return "attributes.txt has " + std::to_string(n) + " values, expected " +
             std::to_string(kAttributeCount);
    }
  }

  const fs::path img_dir = dir / "img";
  if (fs::exists(img_dir) && fs::is_directory(img_dir)) {
    out.frames_dir = img_dir;
    const int frame_files = count_frame_files(img_dir);
    if (frame_files != static_cast<int>(out.annotations.size())) {
      return "annotation count (" + std::to_string(out.annotations.size()) +
             ") does not match frame count (" + std::to_string(frame_files) + ")";
    }
  }
  return std::nullopt;
}

}  // namespace

LoadReport load_manifest(const fs::path& root) {
  LoadReport report;
  if (!fs::exists(root) || !fs::is_directory(root)) {
    report.errors.push_back({root.string(), "dataset root is not a directory"});
    return report;
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    SequenceRecord rec;
    if (auto err = load_sequence(dir, rec)) {
      report.errors.push_back({dir.filename().string(), *err});
    } else {
      report.manifest.sequences.push_back(std::move(rec));
    }
  }
  report.manifest.split.assign(report.manifest.sequences.size(), SplitTag::unassigned);
  return report;
}

void write_sequence_metadata(const fs::path& dir, const SequenceRecord& record) {
  fs::create_directories(dir);
  {
    std::ofstream gt(dir / "groundtruth.txt");
    for (const auto& ann : record.annotations) {
      gt << format_box_line(ann.box) << "\n";
    }
  }
  {
    std::ofstream at(dir / "attributes.txt");
    for (int i = 0; i < kAttributeCount; ++i) {
      at << (record.attributes.flags[i] ? '1' : '0');
      if (i + 1 < kAttributeCount) at << ',';
    }
    at << "\n";
  }
  {
    std::ofstream meta(dir / "meta.txt");
    meta << "class=" << record.class_label << "\n";
    meta << "image_width=" << record.image_width() << "\n";
    meta << "image_height=" << record.image_height() << "\n";
  }
}

std::vector<Image> load_frames(const SequenceRecord& record) {
  if (record.frames_dir.empty()) {
    throw std::invalid_argument("load_frames: sequence '" + record.name +
                                "' has no frame directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(record.frames_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() != record.annotations.size()) {
    throw std::runtime_error("load_frames: frame count mismatch for '" + record.name + "'");
  }
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_pgm(f));
  return frames;
}

double average_absolute_size(const SequenceRecord& seq) {
  if (seq.annotations.empty()) {
    throw std::invalid_argument("average_absolute_size: empty sequence");
  }
  double acc = 0.0;
  for (const auto& ann : seq.annotations) acc += ann.box.area();
  return acc / static_cast<double>(seq.annotations.size());
}

double average_relative_size(const SequenceRecord& seq) {
  if (seq.annotations.empty()) {
    throw std::invalid_argument("average_relative_size: empty sequence");
  }
  double acc = 0.0;
  for (const auto& ann : seq.annotations) {
    const double image_area = static_cast<double>(ann.image_width) * ann.image_height;
    if (image_area <= 0.0) {
      throw std::invalid_argument("average_relative_size: image area must be positive");
    }
    acc += ann.box.area() / image_area;
  }
  return acc / static_cast<double>(seq.annotations.size());
}

bool is_tiny(const SequenceRecord& seq) {
  return average_absolute_size(seq) < kTinyAbsoluteAreaThreshold &&
         average_relative_size(seq) < kTinyRelativeAreaThreshold;
}

DatasetStats dataset_stats(const DatasetManifest& manifest) {
  if (manifest.sequences.empty()) {
    throw std::invalid_argument("dataset_stats: empty manifest");
  }
  DatasetStats stats;
  stats.sequence_count = static_cast<int>(manifest.sequences.size());
  stats.min_frames = manifest.sequences.front().frame_count();
  stats.max_frames = stats.min_frames;
  for (const auto& seq : manifest.sequences) {
    const int n = seq.frame_count();
    stats.min_frames = std::min(stats.min_frames, n);
    stats.max_frames = std::max(stats.max_frames, n);
    stats.total_frames += n;
    stats.class_counts[seq.class_label] += 1;
    for (int i = 0; i < kAttributeCount; ++i) {
      if (seq.attributes.flags[i]) stats.attribute_counts[i] += 1;
    }
  }
  stats.avg_frames =
      static_cast<double>(stats.total_frames) / static_cast<double>(stats.sequence_count);
  return stats;
}

DatasetManifest split_manifest(const DatasetManifest& manifest,
                               const std::vector<std::string>& test_pool,
                               int test_count, std::uint64_t seed) {
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < manifest.sequences.size(); ++i) {
    index[manifest.sequences[i].name] = i;
  }
  std::set<std::string> seen;
  std::vector<size_t> pool_indices;
  pool_indices.reserve(test_pool.size());
  for (const auto& name : test_pool) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw std::invalid_argument("split_manifest: pool sequence '" + name +
                                  "' is not in the manifest");
    }
    if (!seen.insert(name).second) {
      throw std::invalid_argument("split_manifest: pool lists '" + name + "' twice");
    }
    pool_indices.push_back(it->second);
  }
  if (test_count < 0 || test_count > static_cast<int>(pool_indices.size())) {
    throw std::invalid_argument("split_manifest: test_count exceeds the pool size");
  }

  // Partial Fisher-Yates: the first test_count slots are the uniform draw.
  Rng rng(seed);
  for (int i = 0; i < test_count; ++i) {
    const int j = i + rng.uniform_int(static_cast<int>(pool_indices.size()) - i);
    std::swap(pool_indices[i], pool_indices[j]);
  }

  DatasetManifest out = manifest;
  out.split.assign(out.sequences.size(), SplitTag::train);
  for (int i = 0; i < test_count; ++i) {
    out.split[pool_indices[i]] = SplitTag::test;
  }
  return out;
}

}  // namespace tinytrack::data
