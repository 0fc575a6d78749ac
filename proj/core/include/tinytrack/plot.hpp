#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tinytrack/png_io.hpp"

namespace tinytrack::plot {

struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Renders an OTB-style metric plot (one curve per tracker, legend ordered by
/// the ranking score in the label) to a PNG file.
void render_curves(const std::filesystem::path& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   std::span<const Series> series, double x_min, double x_max,
                   double y_min = 0.0, double y_max = 1.0);

}  // namespace tinytrack::plot
