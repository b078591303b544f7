#include "rha/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rha {

namespace {

void require_valid(const BoundingBox& b, const char* who) {
  if (!b.valid())
    throw std::invalid_argument(std::string(who) + ": degenerate box (" + std::to_string(b.x1) +
                                "," + std::to_string(b.y1) + "," + std::to_string(b.x2) + "," +
                                std::to_string(b.y2) + ")");
}

bool strictly_inside(const BoundingBox& a, const BoundingBox& b) {
  return a.x1 > b.x1 && a.y1 > b.y1 && a.x2 < b.x2 && a.y2 < b.y2;
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
  require_valid(a, "iou");
  require_valid(b, "iou");
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::optional<int> classify_spatial_relation(const BoundingBox& i, const BoundingBox& j,
                                             double frame_diag, double distance_gate) {
  require_valid(i, "classify_spatial_relation");
  require_valid(j, "classify_spatial_relation");
  if (frame_diag <= 0.0)
    throw std::invalid_argument("classify_spatial_relation: frame_diag must be positive");

  if (i == j) return 3;
  if (strictly_inside(i, j)) return 1;
  if (strictly_inside(j, i)) return 2;
  if (iou(i, j) >= 0.5) return 3;

  const double dx = j.cx() - i.cx();
  const double dy = j.cy() - i.cy();
  if (std::hypot(dx, dy) / frame_diag > distance_gate) return std::nullopt;

  double theta = std::atan2(dy, dx);  // (-pi, pi]
  if (theta < 0.0) theta += 2.0 * std::numbers::pi;
  int sector = static_cast<int>(std::floor(theta / (std::numbers::pi / 4.0)));
  if (sector > 7) sector = 7;  // theta == 2*pi after rounding
  return 4 + sector;
}

double temporal_iou(const TimeSpan& a, const TimeSpan& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("temporal_iou: invalid span");
  const int inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0) return 0.0;
  const int uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

TimeSpan snap_span_to_frames(double start_sec, double end_sec, double fps, int num_frames) {
  if (fps <= 0.0) throw std::invalid_argument("snap_span_to_frames: fps must be positive");
  int s = static_cast<int>(std::floor(start_sec * fps));
  int e = static_cast<int>(std::ceil(end_sec * fps));
  if (s < 0 || e > num_frames)
    throw std::invalid_argument("snap_span_to_frames: span [" + std::to_string(start_sec) + "s," +
                                std::to_string(end_sec) + "s) leaves the video of " +
                                std::to_string(num_frames) + " frames");
  if (s >= e)
    throw std::invalid_argument("snap_span_to_frames: span is empty after snapping");
  return {s, e};
}

}  // namespace rha
