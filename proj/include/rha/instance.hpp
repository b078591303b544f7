#pragma once

#include <array>
#include <string>
#include <vector>

#include "rha/geometry.hpp"

namespace rha {

struct DetectedObject {
  std::vector<double> feature;          // d_o
  std::vector<double> label_embedding;  // d_l
  BoundingBox bbox;
  int label_id = 0;
};

// Detections plus subtitle token embeddings for one keyframe.
struct FrameObjects {
  std::vector<DetectedObject> objects;
  std::vector<std::vector<double>> subtitle;  // L_s x d_s
};

struct GtBox {
  int frame = 0;
  BoundingBox bbox;
};

struct GroundTruth {
  int answer_idx = 0;
  double span_start_sec = 0;
  double span_end_sec = 0;
  std::vector<GtBox> boxes;  // positive boxes, per frame
};

// One question: 5 qa-hypothesis embedding sequences, T frames of objects
// and subtitles, and the supervision targets.
struct QAInstance {
  std::string id;
  double fps = 1.0;
  double frame_w = 640.0;
  double frame_h = 360.0;
  std::vector<FrameObjects> frames;
  std::array<std::vector<std::vector<double>>, 5> hypotheses;  // each L_q x d_q
  GroundTruth gt;

  int num_frames() const { return static_cast<int>(frames.size()); }
  double frame_diag() const;
  TimeSpan gt_span() const;  // snapped to frame indices
};

}  // namespace rha
