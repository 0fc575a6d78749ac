#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tinytrack/tracker.hpp"

namespace tinytrack {

/// Checkpoints are a pair of files: `<base>.ckpt` (versioned binary tensor
/// blob) and `<base>.json` (architecture config plus free-form metadata).
void save_checkpoint(const std::filesystem::path& base, const track::TrackerNet& net,
                     const std::map<std::string, std::string>& metadata);

struct LoadedCheckpoint {
  track::TrackerNet net;
  std::map<std::string, std::string> metadata;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& base);

}  // namespace tinytrack
