#include "tinytrack/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace tinytrack {

double Image::at_clamped(int x, int y) const {
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  return at(x, y);
}

double Image::sample_bilinear(double x, double y) const {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double tx = fx - x0;
  const double ty = fy - y0;
  const double v00 = at_clamped(x0, y0);
  const double v10 = at_clamped(x0 + 1, y0);
  const double v01 = at_clamped(x0, y0 + 1);
  const double v11 = at_clamped(x0 + 1, y0 + 1);
  return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

namespace {

// Catmull-Rom cubic kernel weights for fractional offset t in [0,1).
// Weights sum to exactly 1, so constants survive resampling.
void cubic_weights(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
}

double sample_bicubic(const Image& img, double x, double y) {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const int x1 = static_cast<int>(std::floor(fx));
  const int y1 = static_cast<int>(std::floor(fy));
  double wx[4], wy[4];
  cubic_weights(fx - x1, wx);
  cubic_weights(fy - y1, wy);
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    double row = 0.0;
    for (int i = 0; i < 4; ++i) {
      row += wx[i] * img.at_clamped(x1 - 1 + i, y1 - 1 + j);
    }
    acc += wy[j] * row;
  }
  return acc;
}

}  // namespace

Image resize(const Image& src, int out_w, int out_h, ResampleKind kind) {
  if (src.empty() || out_w <= 0 || out_h <= 0) {
    throw std::invalid_argument("resize: non-positive image dimensions");
  }
  Image dst(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double srcy = (y + 0.5) * sy;
    for (int x = 0; x < out_w; ++x) {
      const double srcx = (x + 0.5) * sx;
      double v = 0.0;
      switch (kind) {
        case ResampleKind::nearest:
          v = src.at_clamped(static_cast<int>(std::floor(srcx)),
                             static_cast<int>(std::floor(srcy)));
          break;
        case ResampleKind::bilinear:
          v = src.sample_bilinear(srcx, srcy);
          break;
        case ResampleKind::bicubic:
          v = sample_bicubic(src, srcx, srcy);
          break;
      }
      dst.at(x, y) = v;
    }
  }
  return dst;
}

Image directional_blur(const Image& src, double vx, double vy, int radius) {
  if (radius <= 0) return src;
  const double norm = std::sqrt(vx * vx + vy * vy);
  double ux = 1.0, uy = 0.0;
  if (norm > 1e-12) {
    ux = vx / norm;
    uy = vy / norm;
  }
  Image dst(src.width, src.height);
  const int taps = 2 * radius + 1;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += src.sample_bilinear(x + 0.5 + k * ux, y + 0.5 + k * uy);
      }
      dst.at(x, y) = acc / taps;
    }
  }
  return dst;
}

Image crop_window(const Image& src, double cx, double cy, double side, int out) {
  if (side <= 0.0 || out <= 0) throw std::invalid_argument("crop_window: bad geometry");
  Image dst(out, out);
  const double origin_x = cx - 0.5 * side;
  const double origin_y = cy - 0.5 * side;
  const double step = side / out;
  for (int y = 0; y < out; ++y) {
    const double sy = origin_y + (y + 0.5) * step;
    for (int x = 0; x < out; ++x) {
      dst.at(x, y) = src.sample_bilinear(origin_x + (x + 0.5) * step, sy);
    }
  }
  return dst;
}

double mean_abs_laplacian(const Image& img) {
  if (img.width < 3 || img.height < 3) return 0.0;
  double acc = 0.0;
  long count = 0;
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      const double lap = img.at(x - 1, y) + img.at(x + 1, y) + img.at(x, y - 1) +
                         img.at(x, y + 1) - 4.0 * img.at(x, y);
      acc += std::abs(lap);
      ++count;
    }
  }
  return count > 0 ? acc / count : 0.0;
}

double mean_pixel(const Image& img) {
  if (img.px.empty()) return 0.0;
  double acc = 0.0;
  for (double v : img.px) acc += v;
  return acc / static_cast<double>(img.px.size());
}

void write_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.at(x, y), 0.0, 1.0);
      row[static_cast<size_t>(x)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: not a binary PGM: " + path.string());
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    for (;;) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw std::runtime_error("read_pgm: bad header in " + path.string());
    return v;
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (maxval <= 0 || maxval > 255) {
    throw std::runtime_error("read_pgm: unsupported maxval in " + path.string());
  }
  in.get();  // single whitespace after maxval
  Image img(static_cast<int>(w), static_cast<int>(h));
  std::vector<std::uint8_t> row(static_cast<size_t>(w));
  for (long y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw std::runtime_error("read_pgm: truncated data in " + path.string());
    for (long x = 0; x < w; ++x) {
      img.at(static_cast<int>(x), static_cast<int>(y)) =
          static_cast<double>(row[static_cast<size_t>(x)]) / maxval;
    }
  }
  return img;
}

}  // namespace tinytrack
