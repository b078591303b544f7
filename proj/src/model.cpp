#include "rha/model.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "rha/rng.hpp"

#include <json.hpp>

namespace rha {

using nlohmann::json;

DimsProfile DimsProfile::paper() {
  return {"paper", {300, 300, 768, 768}, 128, 32, 15};
}

DimsProfile DimsProfile::reduced() {
  return {"reduced", {24, 24, 32, 32}, 16, 8, 4};
}

DimsProfile DimsProfile::named(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "reduced") return reduced();
  throw std::invalid_argument("unknown dims profile: " + name);
}

void DimsProfile::validate() const {
  if (heads < 1 || data.d_o % heads != 0 || data.d_l % heads != 0)
    throw std::invalid_argument("dims: heads must divide d_o and d_l");
  if (d_h < 2 || d_hat < 1) throw std::invalid_argument("dims: d_h/d_hat too small");
}

namespace {

constexpr int kNumLabels = 12;
constexpr double kHeadInitScale = 0.01;  // near-uniform initial distributions

struct Spec {
  const char* key;
  Shape shape;
  enum Kind { kXavier, kZero, kOne, kSmall } kind;
};

std::vector<Spec> param_specs(const DimsProfile& d) {
  const int d_o = d.data.d_o, d_l = d.data.d_l, d_s = d.data.d_s, d_q = d.data.d_q;
  const int d_h = d.d_h;
  return {
      {"W_spa", {d_l, d_l}, Spec::kXavier},
      {"U_spa", {d_l, d_l}, Spec::kXavier},
      {"V_spa_dir1", {d_l, d_l}, Spec::kXavier},
      {"V_spa_dir2", {d_l, d_l}, Spec::kXavier},
      {"b_spa_lab", {kNumLabels, d_l}, Spec::kZero},
      {"W_sem", {d_o, d_o}, Spec::kXavier},
      {"U_sem", {d_o, d_o}, Spec::kXavier},
      {"V_sem", {d_o, d_o}, Spec::kXavier},
      {"W_s", {2 * d_o, 1}, Spec::kXavier},
      {"W_p_obj", {d_o, d_h}, Spec::kXavier},
      {"W_d_obj", {d_h, d_h}, Spec::kXavier},
      {"ln_g_obj", {d_h}, Spec::kOne},
      {"ln_b_obj", {d_h}, Spec::kZero},
      {"W_p_cpt", {d_l, d_h}, Spec::kXavier},
      {"W_d_cpt", {d_h, d_h}, Spec::kXavier},
      {"ln_g_cpt", {d_h}, Spec::kOne},
      {"ln_b_cpt", {d_h}, Spec::kZero},
      {"W_p_sub", {d_s, d_h}, Spec::kXavier},
      {"W_d_sub", {d_h, d_h}, Spec::kXavier},
      {"ln_g_sub", {d_h}, Spec::kOne},
      {"ln_b_sub", {d_h}, Spec::kZero},
      {"W_p_hyp", {d_q, d_h}, Spec::kXavier},
      {"W_d_hyp", {d_h, d_h}, Spec::kXavier},
      {"ln_g_hyp", {d_h}, Spec::kOne},
      {"ln_b_hyp", {d_h}, Spec::kZero},
      {"W_F", {d_h, d.d_hat}, Spec::kXavier},
      {"W_conv", {3 * d_h, d_h}, Spec::kXavier},
      {"b_conv", {d_h}, Spec::kZero},
      {"w_start", {d_h, 1}, Spec::kSmall},
      {"b_start", {1}, Spec::kZero},
      {"w_end", {d_h, 1}, Spec::kSmall},
      {"b_end", {1}, Spec::kZero},
      {"W_ans", {d_h, d_h}, Spec::kXavier},
      {"b_ans", {d_h}, Spec::kZero},
      {"w_score", {2 * d_h, 1}, Spec::kSmall},
      {"b_score", {1}, Spec::kZero},
  };
}

}  // namespace

ModelParams ModelParams::init(const DimsProfile& dims, std::uint64_t seed) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  Rng rng(derive_seed(seed, 0x1417));
  for (const auto& spec : param_specs(dims)) {
    auto t = make_tensor(spec.shape, /*requires_grad=*/true);
    switch (spec.kind) {
      case Spec::kXavier:
        xavier_init(*t, spec.shape.front(), spec.shape.back(), rng);
        break;
      case Spec::kZero:
        break;
      case Spec::kOne:
        std::fill(t->data.begin(), t->data.end(), 1.0);
        break;
      case Spec::kSmall:
        for (double& v : t->data) v = rng.uniform(-kHeadInitScale, kHeadInitScale);
        break;
    }
    p.entries.emplace_back(spec.key, std::move(t));
  }
  return p;
}

TensorPtr ModelParams::at(const std::string& key) const {
  for (const auto& [name, t] : entries)
    if (name == key) return t;
  throw std::out_of_range("model parameter not found: " + key);
}

void ModelParams::set_requires_grad(bool value) {
  for (auto& [name, t] : entries) t->requires_grad = value;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : entries) t->zero_grad();
}

std::size_t ModelParams::total_coordinates() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries) n += t->numel();
  return n;
}

GatParams ModelParams::spatial_gat() const {
  return {at("W_spa"), at("U_spa"), {at("V_spa_dir1"), at("V_spa_dir2")}, at("b_spa_lab"),
          dims.heads};
}

GatParams ModelParams::semantic_gat() const {
  return {at("W_sem"), at("U_sem"), {at("V_sem")}, nullptr, dims.heads};
}

DownsizeParams ModelParams::downsize(const std::string& modality) const {
  return {at("W_p_" + modality), at("W_d_" + modality), at("ln_g_" + modality),
          at("ln_b_" + modality)};
}

ConvPoolParams ModelParams::conv_pool() const { return {at("W_conv"), at("b_conv")}; }

SpanHeadParams ModelParams::span_head() const {
  return {at("w_start"), at("b_start"), at("w_end"), at("b_end")};
}

AnswerParams ModelParams::answer() const {
  return {at("W_ans"), at("b_ans"), at("w_score"), at("b_score")};
}

void ModelParams::save_checkpoint(const std::string& path, const std::string& config_json) const {
  json j;
  j["format"] = "rha-checkpoint-v1";
  if (!config_json.empty()) j["config"] = json::parse(config_json);
  j["dims"] = {{"profile", dims.name}, {"d_o", dims.data.d_o}, {"d_l", dims.data.d_l},
               {"d_s", dims.data.d_s}, {"d_q", dims.data.d_q}, {"d_h", dims.d_h},
               {"d_hat", dims.d_hat}, {"heads", dims.heads}};
  json params = json::object();
  for (const auto& [name, t] : entries)
    params[name] = {{"shape", t->shape}, {"data", t->data}};
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(1) << "\n";
}

ModelParams ModelParams::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "rha-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format in " + path);
  const auto& jd = j.at("dims");
  DimsProfile dims;
  dims.name = jd.at("profile").get<std::string>();
  dims.data = {jd.at("d_o").get<int>(), jd.at("d_l").get<int>(), jd.at("d_s").get<int>(),
               jd.at("d_q").get<int>()};
  dims.d_h = jd.at("d_h").get<int>();
  dims.d_hat = jd.at("d_hat").get<int>();
  dims.heads = jd.at("heads").get<int>();
  dims.validate();

  ModelParams p;
  p.dims = dims;
  for (const auto& spec : param_specs(dims)) {
    const auto& jp = j.at("params").at(spec.key);
    auto t = make_tensor(jp.at("shape").get<Shape>(), jp.at("data").get<std::vector<double>>(),
                         /*requires_grad=*/true);
    if (t->shape != spec.shape)
      throw std::runtime_error("checkpoint parameter " + std::string(spec.key) +
                               " has shape " + shape_str(t->shape) + ", expected " +
                               shape_str(spec.shape));
    p.entries.emplace_back(spec.key, std::move(t));
  }
  return p;
}

namespace {

TensorPtr rows_tensor(const std::vector<std::vector<double>>& rows) {
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows[0].size());
  auto t = make_tensor({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(rows[static_cast<std::size_t>(i)].begin(), rows[static_cast<std::size_t>(i)].end(),
              t->data.begin() + static_cast<std::size_t>(i) * d);
  return t;
}

}  // namespace

ForwardResult model_forward(Graph& g, const ModelParams& params, const QAInstance& inst,
                            const ForwardOptions& opt) {
  const DimsProfile& dims = params.dims;
  const int T = inst.num_frames();
  if (T < 1) throw std::invalid_argument("model_forward: instance has no frames");
  for (const auto& frame : inst.frames) {
    for (const auto& obj : frame.objects) {
      if (static_cast<int>(obj.feature.size()) != dims.data.d_o)
        throw std::invalid_argument("model_forward: object feature width " +
                                    std::to_string(obj.feature.size()) + " != d_o");
      if (static_cast<int>(obj.label_embedding.size()) != dims.data.d_l)
        throw std::invalid_argument("model_forward: label embedding width != d_l");
    }
  }

  const TimeSpan gt_span = inst.gt_span();
  std::uint64_t site = 0;
  auto drop = [&](const TensorPtr& x) {
    return g.dropout(x, opt.dropout_rate, derive_seed(opt.dropout_seed, ++site), opt.training);
  };

  // relation encoder, shared parameters across frames
  auto encoded = encode_video(g, inst.frames, inst.frame_diag(), params.spatial_gat(),
                              params.semantic_gat(), params.at("W_s"), opt.distance_gate);

  // downsize every stream to d_h
  const auto obj_p = params.downsize("obj");
  const auto cpt_p = params.downsize("cpt");
  const auto sub_p = params.downsize("sub");
  const auto hyp_p = params.downsize("hyp");
  std::vector<TensorPtr> obj_t(static_cast<std::size_t>(T)), cpt_t(static_cast<std::size_t>(T)),
      sub_t(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    obj_t[static_cast<std::size_t>(t)] =
        drop(downsize_encode(g, encoded[static_cast<std::size_t>(t)].features, obj_p));
    cpt_t[static_cast<std::size_t>(t)] =
        drop(downsize_encode(g, encoded[static_cast<std::size_t>(t)].labels, cpt_p));
    sub_t[static_cast<std::size_t>(t)] = drop(downsize_encode(
        g, rows_tensor(inst.frames[static_cast<std::size_t>(t)].subtitle), sub_p));
  }

  ForwardResult res;
  const int max_len = opt.max_span_len > 0 ? std::min(opt.max_span_len, T) : T;
  std::vector<TensorPtr> encoded_seq;
  TensorPtr gt_spatial_loss;

  for (int k = 0; k < 5; ++k) {
    auto hyp = drop(downsize_encode(g, rows_tensor(inst.hypotheses[static_cast<std::size_t>(k)]),
                                    hyp_p));
    std::vector<TensorPtr> fused_frames;
    fused_frames.reserve(static_cast<std::size_t>(T));
    std::vector<TensorPtr> visual_logits;  // per frame, [L_q x N_o]
    for (int t = 0; t < T; ++t) {
      auto qa_obj = question_guided_attention(g, hyp, obj_t[static_cast<std::size_t>(t)]);
      auto qa_cpt = question_guided_attention(g, hyp, cpt_t[static_cast<std::size_t>(t)]);
      auto qa_sub = question_guided_attention(g, hyp, sub_t[static_cast<std::size_t>(t)]);
      visual_logits.push_back(qa_obj.logits);
      auto fused = multimodal_attention(
          g, {qa_obj.attended, qa_cpt.attended, qa_sub.attended}, params.at("W_F"));
      fused_frames.push_back(fused.fused);
    }
    auto a_k = temporal_encode(g, fused_frames, params.conv_pool());
    encoded_seq.push_back(a_k);
    auto dists = span_heads(g, a_k, params.span_head());
    if (opt.fixed_spans.empty()) {
      res.spans.push_back(dp_span_proposal(dists.p_start->data, dists.p_end->data, max_len));
    } else {
      if (opt.fixed_spans.size() != 5)
        throw std::invalid_argument("model_forward: fixed_spans must cover all 5 hypotheses");
      res.spans.push_back(opt.fixed_spans[static_cast<std::size_t>(k)]);
    }
    res.span_dists.push_back(dists);

    if (k == inst.gt.answer_idx) {
      // ranking loss over objects of the ground-truth span frames; the
      // per-object score is the token-max of the pre-softmax logits
      TensorPtr spa;
      for (int t = gt_span.start; t < gt_span.end; ++t) {
        const auto& frame = inst.frames[static_cast<std::size_t>(t)];
        std::vector<int> pos, neg;
        for (int o = 0; o < static_cast<int>(frame.objects.size()); ++o) {
          bool is_pos = false;
          for (const auto& gb : inst.gt.boxes)
            if (gb.frame == t &&
                iou(frame.objects[static_cast<std::size_t>(o)].bbox, gb.bbox) > 0.5)
              is_pos = true;
          (is_pos ? pos : neg).push_back(o);
        }
        if (pos.empty() || neg.empty()) continue;
        auto scores = g.reduce_max(visual_logits[static_cast<std::size_t>(t)], 0);  // [N_o]
        auto frame_loss = spatial_pair_loss(g, scores, pos, neg);
        spa = spa ? g.add(spa, frame_loss) : frame_loss;
      }
      gt_spatial_loss = spa ? spa : make_scalar(0.0);
    }
  }

  res.answer_probs = answer_scores(g, encoded_seq, res.spans, params.answer());
  res.predicted_answer = 0;
  for (int k = 1; k < 5; ++k)
    if (res.answer_probs->data[static_cast<std::size_t>(k)] >
        res.answer_probs->data[static_cast<std::size_t>(res.predicted_answer)])
      res.predicted_answer = k;
  res.predicted_span = res.spans[static_cast<std::size_t>(res.predicted_answer)];

  res.loss_answer = g.cross_entropy(res.answer_probs, inst.gt.answer_idx);
  res.loss_spatial = gt_spatial_loss;
  res.loss_temporal =
      temporal_loss(g, res.span_dists[static_cast<std::size_t>(inst.gt.answer_idx)], gt_span);
  res.loss_total =
      total_loss(g, res.loss_answer, res.loss_spatial, res.loss_temporal, opt.loss_weights);
  return res;
}

}  // namespace rha
