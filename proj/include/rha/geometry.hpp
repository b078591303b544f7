#pragma once

#include <optional>

namespace rha {

// Axis-aligned pixel box, top-left (x1,y1) to bottom-right (x2,y2).
// Valid boxes have strictly positive area.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const { return x1 < x2 && y1 < y2; }
  double area() const { return (x2 - x1) * (y2 - y1); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool operator==(const BoundingBox&) const = default;
};

// intersection area / union area, in [0,1]; throws on degenerate boxes
double iou(const BoundingBox& a, const BoundingBox& b);

// Spatial relation classes between an ordered box pair (i, j):
//   1  i strictly inside j
//   2  i strictly contains j
//   3  same region (equal boxes or IoU >= 0.5)
//   4..11  directional: 4 + floor(theta/45deg), theta the angle of the
//          center(i)->center(j) vector, counter-clockwise from +x in
//          [0,360); applies only when center distance <= gate*frame_diag
// nullopt means the pair is unrelated (too far apart).
//
// Precedence: equal, inside, contains, overlap, directional.
std::optional<int> classify_spatial_relation(const BoundingBox& i, const BoundingBox& j,
                                             double frame_diag, double distance_gate = 0.5);

// Frame index interval, inclusive start, exclusive end.
struct TimeSpan {
  int start = 0;
  int end = 0;

  bool valid() const { return 0 <= start && start < end; }
  int length() const { return end - start; }
  bool operator==(const TimeSpan&) const = default;
};

// |a n b| / |a u b| on half-open intervals
double temporal_iou(const TimeSpan& a, const TimeSpan& b);

// Snaps a span given in seconds onto frame indices: floor(start*fps),
// ceil(end*fps), clamped into [0, num_frames]. Throws if the result is
// empty or the span leaves the video.
TimeSpan snap_span_to_frames(double start_sec, double end_sec, double fps, int num_frames);

}  // namespace rha
