#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rha/instance.hpp"

namespace rha {

struct DatasetDims {
  int d_o = 300;  // object feature width
  int d_l = 300;  // label embedding width
  int d_s = 768;  // subtitle token width
  int d_q = 768;  // hypothesis token width
  bool operator==(const DatasetDims&) const = default;
};

struct Manifest {
  DatasetDims dims;
  std::vector<std::string> instances;  // paths relative to the manifest file
};

// Loads and fully validates one instance file. Schema or dimension
// violations throw with the offending field and instance id in the
// message. expected_dims come from the dataset manifest.
QAInstance load_instance(const std::string& path, const DatasetDims& expected_dims);
void save_instance(const QAInstance& inst, const std::string& path);

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// Loads every instance named by a manifest (paths resolved relative to it).
std::vector<QAInstance> load_dataset(const std::string& manifest_path);

struct SynthConfig {
  int num_instances = 8;
  int num_frames = 6;        // T
  int objects_per_frame = 3; // N_o
  int hypothesis_len = 5;    // L_q
  int subtitle_len = 4;      // L_s
  DatasetDims dims;
  std::uint64_t seed = 0;
  // Dot-product correlation planted between the correct hypothesis and the
  // in-span object features; 0 means pure noise (chance-level data).
  double signal_strength = 0.0;
  double fps = 2.0;
  double frame_w = 640.0;
  double frame_h = 360.0;
  int label_vocab = 16;
};

// Deterministic synthetic dataset: a random answer and span per instance;
// one object per in-span frame carries the signal (plus start/end frame
// markers) and becomes the positive box; the matching hypothesis shares
// the signal direction, distractors are independent noise.
std::vector<QAInstance> generate_synthetic(const SynthConfig& cfg);

// Writes instances plus a manifest (manifest.json) into a directory.
void write_dataset(const std::vector<QAInstance>& data, const DatasetDims& dims,
                   const std::string& dir);

// Fraction of instances whose correct hypothesis wins a parameter-free
// linear probe: dot product of the mean in-span object feature against
// each hypothesis's mean token embedding (overlapping coordinates).
double probe_separation_accuracy(const std::vector<QAInstance>& data);

struct Prediction {
  int answer_idx = 0;
  TimeSpan span;
};

struct GtTarget {
  int answer_idx = 0;
  TimeSpan span;
};

struct Metrics {
  double accuracy = 0;
  double temp_miou = 0;
  double asa = 0;
};

// accuracy, mean temporal IoU, and answer-span joint accuracy
// (correct answer AND span IoU >= 0.5). Lists must be aligned.
Metrics evaluate(const std::vector<Prediction>& predictions, const std::vector<GtTarget>& gts);

}  // namespace rha
