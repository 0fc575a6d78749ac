#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tinytrack {

/// Axis-aligned box with sub-pixel float coordinates, top-left origin.
/// (x, y) is the top-left corner, w/h the extents. The same type is used for
/// annotations, tracker predictions and metric computation.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double x2() const { return x + w; }
  double y2() const { return y + h; }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }

  static BoundingBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }

  /// Clip to the image rectangle [0,width)x[0,height). The result may be
  /// empty (w or h == 0) if the box lies fully outside.
  BoundingBox clipped(double width, double height) const {
    const double nx1 = std::clamp(x, 0.0, width);
    const double ny1 = std::clamp(y, 0.0, height);
    const double nx2 = std::clamp(x + w, 0.0, width);
    const double ny2 = std::clamp(y + h, 0.0, height);
    return {nx1, ny1, std::max(0.0, nx2 - nx1), std::max(0.0, ny2 - ny1)};
  }
};

/// Intersection over union of two boxes, in [0, 1]. The clamp guards the
/// coincident-box case, where (x + w) - x can round a hair above w.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Euclidean distance between box centers, in pixels.
inline double center_error(const BoundingBox& pred, const BoundingBox& gt) {
  const double dx = pred.cx() - gt.cx();
  const double dy = pred.cy() - gt.cy();
  return std::sqrt(dx * dx + dy * dy);
}

/// Center error with each axis normalized by the ground-truth box extent,
/// so the value is comparable across target sizes.
inline double normalized_center_error(const BoundingBox& pred,
                                      const BoundingBox& gt) {
  if (!(gt.w > 0.0) || !(gt.h > 0.0)) {
    throw std::invalid_argument("normalized_center_error: degenerate ground-truth box");
  }
  const double dx = (pred.cx() - gt.cx()) / gt.w;
  const double dy = (pred.cy() - gt.cy()) / gt.h;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace tinytrack
