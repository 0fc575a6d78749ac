#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tinytrack {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// RGB pixel canvas for report plots.
struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<Rgb> px;

  Canvas(int w, int h, Rgb fill = {255, 255, 255})
      : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    px[static_cast<size_t>(y) * width + x] = c;
  }
};

/// Writes an 8-bit RGB PNG (stored-deflate, no external compression deps).
void write_png(const Canvas& canvas, const std::filesystem::path& path);

}  // namespace tinytrack
