#include "rha/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "rha/rng.hpp"

#include <json.hpp>

namespace rha {

namespace fs = std::filesystem;
using nlohmann::json;

double QAInstance::frame_diag() const { return std::hypot(frame_w, frame_h); }

TimeSpan QAInstance::gt_span() const {
  return snap_span_to_frames(gt.span_start_sec, gt.span_end_sec, fps, num_frames());
}

namespace {

[[noreturn]] void schema_error(const std::string& id, const std::string& msg) {
  throw std::runtime_error("instance '" + id + "': " + msg);
}

std::vector<double> read_vector(const json& j, const std::string& id, const std::string& field,
                                int expected_dim, const char* dim_name) {
  if (!j.is_array()) schema_error(id, field + " must be an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) schema_error(id, field + " must hold numbers");
    v.push_back(x.get<double>());
  }
  if (static_cast<int>(v.size()) != expected_dim)
    schema_error(id, field + " has width " + std::to_string(v.size()) + ", expected " +
                         dim_name + "=" + std::to_string(expected_dim));
  return v;
}

BoundingBox read_bbox(const json& j, const std::string& id, const std::string& field) {
  if (!j.is_array() || j.size() != 4) schema_error(id, field + " must be [x1,y1,x2,y2]");
  BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) schema_error(id, field + " is degenerate");
  return b;
}

json bbox_json(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

QAInstance load_instance(const std::string& path, const DatasetDims& dims) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("instance file " + path + " is not valid JSON: " + e.what());
  }

  QAInstance inst;
  inst.id = j.value("id", std::string());
  if (inst.id.empty()) schema_error(path, "missing id");
  const std::string& id = inst.id;

  if (!j.contains("fps") || !j["fps"].is_number() || j["fps"].get<double>() <= 0.0)
    schema_error(id, "fps must be a positive number");
  inst.fps = j["fps"].get<double>();
  inst.frame_w = j.value("frame_w", 640.0);
  inst.frame_h = j.value("frame_h", 360.0);

  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty())
    schema_error(id, "frames must be a nonempty array");
  for (const auto& jf : j["frames"]) {
    FrameObjects frame;
    if (!jf.contains("objects") || !jf["objects"].is_array() || jf["objects"].empty())
      schema_error(id, "frames[].objects must be a nonempty array");
    for (const auto& jo : jf["objects"]) {
      DetectedObject obj;
      obj.feature = read_vector(jo.at("feature"), id, "objects[].feature", dims.d_o, "d_o");
      obj.label_embedding =
          read_vector(jo.at("label_embedding"), id, "objects[].label_embedding", dims.d_l, "d_l");
      obj.bbox = read_bbox(jo.at("bbox"), id, "objects[].bbox");
      obj.label_id = jo.value("label_id", 0);
      frame.objects.push_back(std::move(obj));
    }
    if (!jf.contains("subtitle") || !jf["subtitle"].is_array() || jf["subtitle"].empty())
      schema_error(id, "frames[].subtitle must be a nonempty array");
    for (const auto& js : jf["subtitle"])
      frame.subtitle.push_back(read_vector(js, id, "frames[].subtitle[]", dims.d_s, "d_s"));
    inst.frames.push_back(std::move(frame));
  }

  if (!j.contains("hypotheses") || !j["hypotheses"].is_array() || j["hypotheses"].size() != 5)
    schema_error(id, "hypotheses must hold exactly 5 sequences, got " +
                         std::to_string(j.value("hypotheses", json::array()).size()));
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& jh = j["hypotheses"][k];
    if (!jh.is_array() || jh.empty()) schema_error(id, "hypotheses[] must be nonempty");
    for (const auto& jt : jh)
      inst.hypotheses[k].push_back(read_vector(jt, id, "hypotheses[][]", dims.d_q, "d_q"));
  }

  if (!j.contains("gt")) schema_error(id, "missing gt");
  const auto& jg = j["gt"];
  inst.gt.answer_idx = jg.value("answer_idx", -1);
  if (inst.gt.answer_idx < 0 || inst.gt.answer_idx >= 5)
    schema_error(id, "gt.answer_idx must be in [0,5)");
  inst.gt.span_start_sec = jg.value("span_start_sec", -1.0);
  inst.gt.span_end_sec = jg.value("span_end_sec", -1.0);
  try {
    (void)snap_span_to_frames(inst.gt.span_start_sec, inst.gt.span_end_sec, inst.fps,
                              inst.num_frames());
  } catch (const std::exception& e) {
    schema_error(id, std::string("gt span: ") + e.what());
  }
  if (jg.contains("boxes")) {
    for (const auto& jb : jg["boxes"]) {
      GtBox gb;
      gb.frame = jb.value("frame", -1);
      if (gb.frame < 0 || gb.frame >= inst.num_frames())
        schema_error(id, "gt.boxes[].frame " + std::to_string(gb.frame) +
                             " matches no frame index");
      gb.bbox = read_bbox(jb.at("bbox"), id, "gt.boxes[].bbox");
      inst.gt.boxes.push_back(gb);
    }
  }
  return inst;
}

void save_instance(const QAInstance& inst, const std::string& path) {
  json j;
  j["id"] = inst.id;
  j["fps"] = inst.fps;
  j["frame_w"] = inst.frame_w;
  j["frame_h"] = inst.frame_h;
  j["frames"] = json::array();
  for (const auto& frame : inst.frames) {
    json jf;
    jf["objects"] = json::array();
    for (const auto& obj : frame.objects) {
      json jo;
      jo["feature"] = obj.feature;
      jo["label_embedding"] = obj.label_embedding;
      jo["bbox"] = bbox_json(obj.bbox);
      jo["label_id"] = obj.label_id;
      jf["objects"].push_back(std::move(jo));
    }
    jf["subtitle"] = frame.subtitle;
    j["frames"].push_back(std::move(jf));
  }
  j["hypotheses"] = json::array();
  for (const auto& h : inst.hypotheses) j["hypotheses"].push_back(h);
  json jg;
  jg["answer_idx"] = inst.gt.answer_idx;
  jg["span_start_sec"] = inst.gt.span_start_sec;
  jg["span_end_sec"] = inst.gt.span_end_sec;
  jg["boxes"] = json::array();
  for (const auto& gb : inst.gt.boxes)
    jg["boxes"].push_back(json{{"frame", gb.frame}, {"bbox", bbox_json(gb.bbox)}});
  j["gt"] = std::move(jg);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file: " + path);
  out << j.dump(1) << "\n";
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j;
  in >> j;
  Manifest m;
  const auto& jd = j.at("dims");
  m.dims = {jd.at("d_o").get<int>(), jd.at("d_l").get<int>(), jd.at("d_s").get<int>(),
            jd.at("d_q").get<int>()};
  for (const auto& p : j.at("instances")) m.instances.push_back(p.get<std::string>());
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  json j;
  j["dims"] = {{"d_o", m.dims.d_o}, {"d_l", m.dims.d_l}, {"d_s", m.dims.d_s},
               {"d_q", m.dims.d_q}};
  j["instances"] = m.instances;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(1) << "\n";
}

std::vector<QAInstance> load_dataset(const std::string& manifest_path) {
  Manifest m = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<QAInstance> data;
  data.reserve(m.instances.size());
  for (const auto& rel : m.instances) data.push_back(load_instance((base / rel).string(), m.dims));
  return data;
}

std::vector<QAInstance> generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_frames < 2 || cfg.objects_per_frame < 2)
    throw std::invalid_argument("generate_synthetic: need at least 2 frames and 2 objects");
  if (cfg.hypothesis_len < 3)
    throw std::invalid_argument("generate_synthetic: hypothesis_len must be at least 3");

  // dataset-level structure: label vocabulary and the global span markers
  Rng vocab_rng(derive_seed(cfg.seed, 0xA11CE));
  std::vector<std::vector<double>> vocab(static_cast<std::size_t>(cfg.label_vocab));
  for (auto& row : vocab) {
    row.resize(static_cast<std::size_t>(cfg.dims.d_l));
    for (double& v : row) v = vocab_rng.normal();
  }
  // start/end boundary markers for the positive object's feature
  std::vector<double> start_marker(static_cast<std::size_t>(cfg.dims.d_o));
  std::vector<double> end_marker(static_cast<std::size_t>(cfg.dims.d_o));
  for (double& v : start_marker) v = vocab_rng.normal();
  for (double& v : end_marker) v = vocab_rng.normal();
  // subtitle-borne copies of the boundary markers: every token of a
  // boundary frame carries one, so any attention mix over tokens keeps
  // the direction intact (span boundaries in the source task correlate
  // with subtitle content the same way)
  std::vector<double> sub_start_marker(static_cast<std::size_t>(cfg.dims.d_s));
  std::vector<double> sub_end_marker(static_cast<std::size_t>(cfg.dims.d_s));
  for (double& v : sub_start_marker) v = vocab_rng.normal();
  for (double& v : sub_end_marker) v = vocab_rng.normal();

  std::vector<QAInstance> data;
  for (int idx = 0; idx < cfg.num_instances; ++idx) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(idx) + 1));
    QAInstance inst;
    char name[32];
    std::snprintf(name, sizeof(name), "inst_%04d", idx);
    inst.id = name;
    inst.fps = cfg.fps;
    inst.frame_w = cfg.frame_w;
    inst.frame_h = cfg.frame_h;
    inst.gt.answer_idx = rng.uniform_int(5);

    const int max_len = std::max(1, cfg.num_frames / 2);
    const int span_len = 1 + rng.uniform_int(max_len);
    const int span_start = rng.uniform_int(cfg.num_frames - span_len + 1);
    inst.gt.span_start_sec = span_start / cfg.fps;
    inst.gt.span_end_sec = (span_start + span_len) / cfg.fps;

    // shared signal direction; prefix coordinates overlap between the
    // object and hypothesis spaces
    const int dz = std::max(cfg.dims.d_o, cfg.dims.d_q);
    std::vector<double> z(static_cast<std::size_t>(dz));
    for (double& v : z) v = rng.normal();

    for (int t = 0; t < cfg.num_frames; ++t) {
      FrameObjects frame;
      const bool in_span = t >= span_start && t < span_start + span_len;
      const int positive = in_span ? rng.uniform_int(cfg.objects_per_frame) : -1;
      for (int o = 0; o < cfg.objects_per_frame; ++o) {
        DetectedObject obj;
        const double w = rng.uniform(30.0, 120.0);
        const double h = rng.uniform(30.0, 120.0);
        const double x1 = rng.uniform(0.0, cfg.frame_w - w);
        const double y1 = rng.uniform(0.0, cfg.frame_h - h);
        obj.bbox = {x1, y1, x1 + w, y1 + h};
        obj.label_id = rng.uniform_int(cfg.label_vocab);
        obj.label_embedding = vocab[static_cast<std::size_t>(obj.label_id)];
        obj.feature.resize(static_cast<std::size_t>(cfg.dims.d_o));
        for (double& v : obj.feature) v = rng.normal();
        if (o == positive) {
          for (int i = 0; i < cfg.dims.d_o; ++i) {
            obj.feature[static_cast<std::size_t>(i)] +=
                cfg.signal_strength * z[static_cast<std::size_t>(i)];
            if (t == span_start)
              obj.feature[static_cast<std::size_t>(i)] +=
                  cfg.signal_strength * start_marker[static_cast<std::size_t>(i)];
            if (t == span_start + span_len - 1)
              obj.feature[static_cast<std::size_t>(i)] +=
                  cfg.signal_strength * end_marker[static_cast<std::size_t>(i)];
          }
          inst.gt.boxes.push_back({t, obj.bbox});
        }
        frame.objects.push_back(std::move(obj));
      }
      frame.subtitle.resize(static_cast<std::size_t>(cfg.subtitle_len));
      for (auto& tok : frame.subtitle) {
        tok.resize(static_cast<std::size_t>(cfg.dims.d_s));
        for (std::size_t i = 0; i < tok.size(); ++i) {
          tok[i] = rng.normal();
          if (t == span_start) tok[i] += cfg.signal_strength * sub_start_marker[i];
          if (t == span_start + span_len - 1)
            tok[i] += cfg.signal_strength * sub_end_marker[i];
        }
      }
      inst.frames.push_back(std::move(frame));
    }

    for (int k = 0; k < 5; ++k) {
      auto& hyp = inst.hypotheses[static_cast<std::size_t>(k)];
      hyp.resize(static_cast<std::size_t>(cfg.hypothesis_len));
      for (auto& tok : hyp) {
        tok.resize(static_cast<std::size_t>(cfg.dims.d_q));
        for (std::size_t i = 0; i < tok.size(); ++i) {
          tok[i] = rng.normal();
          if (k == inst.gt.answer_idx) tok[i] += cfg.signal_strength * z[i];
        }
      }
    }
    data.push_back(std::move(inst));
  }
  return data;
}

void write_dataset(const std::vector<QAInstance>& data, const DatasetDims& dims,
                   const std::string& dir) {
  fs::create_directories(dir);
  Manifest m;
  m.dims = dims;
  for (const auto& inst : data) {
    const std::string name = inst.id + ".json";
    save_instance(inst, (fs::path(dir) / name).string());
    m.instances.push_back(name);
  }
  save_manifest(m, (fs::path(dir) / "manifest.json").string());
}

double probe_separation_accuracy(const std::vector<QAInstance>& data) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const auto& inst : data) {
    const TimeSpan span = inst.gt_span();
    const int d_o = static_cast<int>(inst.frames[0].objects[0].feature.size());
    std::vector<double> mean_obj(static_cast<std::size_t>(d_o), 0.0);
    int count = 0;
    for (int t = span.start; t < span.end; ++t)
      for (const auto& obj : inst.frames[static_cast<std::size_t>(t)].objects) {
        for (int i = 0; i < d_o; ++i)
          mean_obj[static_cast<std::size_t>(i)] += obj.feature[static_cast<std::size_t>(i)];
        ++count;
      }
    for (double& v : mean_obj) v /= count;

    int best_k = 0;
    double best_score = 0.0;
    for (int k = 0; k < 5; ++k) {
      const auto& hyp = inst.hypotheses[static_cast<std::size_t>(k)];
      const int d_q = static_cast<int>(hyp[0].size());
      const int overlap = std::min(d_o, d_q);
      std::vector<double> mean_hyp(static_cast<std::size_t>(overlap), 0.0);
      for (const auto& tok : hyp)
        for (int i = 0; i < overlap; ++i) mean_hyp[static_cast<std::size_t>(i)] += tok[static_cast<std::size_t>(i)];
      double score = 0.0;
      for (int i = 0; i < overlap; ++i)
        score += mean_obj[static_cast<std::size_t>(i)] * mean_hyp[static_cast<std::size_t>(i)] /
                 static_cast<double>(hyp.size());
      if (k == 0 || score > best_score) {
        best_score = score;
        best_k = k;
      }
    }
    if (best_k == inst.gt.answer_idx) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Metrics evaluate(const std::vector<Prediction>& predictions, const std::vector<GtTarget>& gts) {
  if (predictions.size() != gts.size())
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(gts.size()) + " targets");
  if (predictions.empty()) throw std::invalid_argument("evaluate: empty prediction list");
  Metrics m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool correct = predictions[i].answer_idx == gts[i].answer_idx;
    const double tiou = temporal_iou(predictions[i].span, gts[i].span);
    m.accuracy += correct ? 1.0 : 0.0;
    m.temp_miou += tiou;
    m.asa += (correct && tiou >= 0.5) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(predictions.size());
  m.accuracy /= n;
  m.temp_miou /= n;
  m.asa /= n;
  return m;
}

}  // namespace rha
