#include "tinytrack/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace tinytrack::plot {

namespace {

// 5x7 bitmap glyphs; each byte is one row, bit 4 leftmost.
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

constexpr Glyph kGlyphs[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
    {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
    {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
    {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
    {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
    {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
    {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
    {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
    {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
    {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
    {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}},
    {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'.', {0, 0, 0, 0, 0, 0x0c, 0x0c}},
    {',', {0, 0, 0, 0, 0x0c, 0x04, 0x08}},
    {'-', {0, 0, 0, 0x1f, 0, 0, 0}},
    {'_', {0, 0, 0, 0, 0, 0, 0x1f}},
    {':', {0, 0x0c, 0x0c, 0, 0x0c, 0x0c, 0}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'[', {0x0e, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0e}},
    {']', {0x0e, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0e}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {'%', {0x19, 0x1a, 0x02, 0x04, 0x08, 0x0b, 0x13}},
    {'=', {0, 0, 0x1f, 0, 0x1f, 0, 0}},
};

const Glyph* find_glyph(char c) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kGlyphs) {
    if (g.ch == upper) return &g;
  }
  return nullptr;
}

void draw_text(Canvas& canvas, int x, int y, const std::string& text, Rgb color) {
  int cx = x;
  for (char c : text) {
    if (const Glyph* g = find_glyph(c)) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (g->rows[row] & (0x10 >> col)) canvas.set(cx + col, y + row, color);
        }
      }
    }
    cx += 6;
  }
}

void draw_line(Canvas& canvas, double x0, double y0, double x1, double y1, Rgb color) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(2, static_cast<int>(2.0 * std::max(std::abs(dx), std::abs(dy))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int px = static_cast<int>(std::lround(x0 + t * dx));
    const int py = static_cast<int>(std::lround(y0 + t * dy));
    canvas.set(px, py, color);
    canvas.set(px, py + 1, color);
  }
}

constexpr Rgb kPalette[] = {
    {214, 39, 40},  {31, 119, 180}, {44, 160, 44},  {255, 127, 14},
    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
    {188, 189, 34}, {23, 190, 207},
};

std::string format_tick(double v) {
  char buf[32];
  if (std::abs(v - std::round(v)) < 1e-9 && std::abs(v) < 1000) {
    std::snprintf(buf, sizeof(buf), "%d", static_cast<int>(std::lround(v)));
  } else {
    std::snprintf(buf, sizeof(buf), "%.2f", v);
  }
  return buf;
}

}  // namespace

void render_curves(const std::filesystem::path& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   std::span<const Series> series, double x_min, double x_max,
                   double y_min, double y_max) {
  const int width = 720, height = 480;
  const int left = 70, right = width - 230, top = 40, bottom = height - 60;
  Canvas canvas(width, height);

  const Rgb black{0, 0, 0};
  const Rgb gray{210, 210, 210};

  auto to_px = [&](double x) {
    return left + (x - x_min) / (x_max - x_min) * (right - left);
  };
  auto to_py = [&](double y) {
    return bottom - (y - y_min) / (y_max - y_min) * (bottom - top);
  };

  // Grid and ticks.
  const int divisions = 5;
  for (int i = 0; i <= divisions; ++i) {
    const double fx = x_min + (x_max - x_min) * i / divisions;
    const double fy = y_min + (y_max - y_min) * i / divisions;
    draw_line(canvas, to_px(fx), top, to_px(fx), bottom, gray);
    draw_line(canvas, left, to_py(fy), right, to_py(fy), gray);
    draw_text(canvas, static_cast<int>(to_px(fx)) - 8, bottom + 8, format_tick(fx), black);
    draw_text(canvas, left - 42, static_cast<int>(to_py(fy)) - 3, format_tick(fy), black);
  }
  draw_line(canvas, left, bottom, right, bottom, black);
  draw_line(canvas, left, top, left, bottom, black);

  draw_text(canvas, (left + right) / 2 - 3 * static_cast<int>(title.size()), 14, title,
            black);
  draw_text(canvas, (left + right) / 2 - 3 * static_cast<int>(x_label.size()),
            height - 28, x_label, black);
  draw_text(canvas, 8, top - 24, y_label, black);

  // Curves plus the legend, in the given (pre-ranked) order.
  for (size_t s = 0; s < series.size(); ++s) {
    const Rgb color = kPalette[s % std::size(kPalette)];
    const auto& sr = series[s];
    for (size_t i = 1; i < sr.xs.size(); ++i) {
      draw_line(canvas, to_px(sr.xs[i - 1]), to_py(sr.ys[i - 1]), to_px(sr.xs[i]),
                to_py(sr.ys[i]), color);
    }
    const int ly = top + 14 * static_cast<int>(s);
    draw_line(canvas, right + 10, ly + 3, right + 34, ly + 3, color);
    draw_text(canvas, right + 40, ly, sr.label.substr(0, 30), black);
  }

  write_png(canvas, path);
}

}  // namespace tinytrack::plot
