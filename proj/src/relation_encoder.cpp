#include "rha/relation_encoder.hpp"

#include <stdexcept>
#include <string>

namespace rha {

namespace {

constexpr int kNumLabels = 12;  // self-loop + 11 relation classes

TensorPtr embedding_matrix(const FrameObjects& frame, bool labels) {
  const auto& first = labels ? frame.objects[0].label_embedding : frame.objects[0].feature;
  const int n = static_cast<int>(frame.objects.size());
  const int d = static_cast<int>(first.size());
  auto t = make_tensor({n, d});
  for (int i = 0; i < n; ++i) {
    const auto& v = labels ? frame.objects[static_cast<std::size_t>(i)].label_embedding
                           : frame.objects[static_cast<std::size_t>(i)].feature;
    if (static_cast<int>(v.size()) != d)
      throw std::invalid_argument("inconsistent embedding widths within a frame");
    std::copy(v.begin(), v.end(), t->data.begin() + static_cast<std::size_t>(i) * d);
  }
  return t;
}

}  // namespace

void GatParams::validate(int node_dim) const {
  if (heads < 1 || node_dim % heads != 0)
    throw std::invalid_argument("gat: head count " + std::to_string(heads) +
                                " must divide node dim " + std::to_string(node_dim));
  if (message_w->shape != Shape{node_dim, node_dim} ||
      query_u->shape != Shape{node_dim, node_dim})
    throw std::invalid_argument("gat: W/U must be [" + std::to_string(node_dim) + "x" +
                                std::to_string(node_dim) + "]");
  for (const auto& v : dir_v)
    if (v->shape != Shape{node_dim, node_dim})
      throw std::invalid_argument("gat: V projections must match node dim");
  if (label_bias && label_bias->shape != Shape{kNumLabels, node_dim})
    throw std::invalid_argument("gat: label bias must be [12 x node_dim]");
}

SpatialGraph build_spatial_graph(const FrameObjects& frame, double frame_diag,
                                 double distance_gate) {
  if (frame.objects.empty())
    throw std::invalid_argument("build_spatial_graph: frame has no objects");
  SpatialGraph g;
  g.nodes = embedding_matrix(frame, /*labels=*/true);
  const int n = static_cast<int>(frame.objects.size());
  for (int i = 0; i < n; ++i) g.edges.push_back({i, i, 0, 1});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      auto cls = classify_spatial_relation(frame.objects[static_cast<std::size_t>(i)].bbox,
                                           frame.objects[static_cast<std::size_t>(j)].bbox,
                                           frame_diag, distance_gate);
      if (cls) g.edges.push_back({i, j, *cls, i < j ? 1 : 2});
    }
  return g;
}

SemanticGraph build_semantic_graph(const FrameObjects& frame) {
  if (frame.objects.empty())
    throw std::invalid_argument("build_semantic_graph: frame has no objects");
  return {embedding_matrix(frame, /*labels=*/false)};
}

TensorPtr semantic_edge_weights(Graph& g, const TensorPtr& nodes, const TensorPtr& w_s) {
  const int n = nodes->dim(0), d = nodes->dim(1);
  if (w_s->shape != Shape{2 * d, 1})
    throw std::invalid_argument("semantic_edge_weights: w_s must be [" + std::to_string(2 * d) +
                                "x1]");
  // w_s . [o_i; o_j] splits into a(i) + b(j)
  auto a = g.matmul(nodes, g.slice(w_s, 0, 0, d));      // [n,1]
  auto b = g.matmul(nodes, g.slice(w_s, 0, d, d));      // [n,1]
  auto ones_row = make_tensor({1, n}, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  auto ones_col = make_tensor({n, 1}, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  auto scores = g.add(g.matmul(a, ones_row), g.matmul(ones_col, g.transpose(b)));
  return g.softmax(scores, 1);
}

namespace {

// Shared per-head attention body. For spatial graphs the logits are
// gated by edge masks and shifted by the label bias; semantic graphs are
// fully connected with a single projection.
TensorPtr gat_update(Graph& g, const TensorPtr& nodes, const GatParams& p,
                     const std::vector<SpatialEdge>* edges,
                     std::vector<TensorPtr>* attention_out) {
  const int n = nodes->dim(0);
  const int d = nodes->dim(1);
  p.validate(d);
  const int c = p.head_dim(d);

  auto q = g.matmul(nodes, g.transpose(p.query_u));  // row i = U . l_i
  std::vector<TensorPtr> keys;
  for (const auto& v : p.dir_v) keys.push_back(g.matmul(nodes, g.transpose(v)));

  // Edge structure as constant masks; only spatial graphs have them.
  TensorPtr mask_all, mask_dir1, mask_dir2, bias_rows;
  if (edges) {
    mask_all = make_tensor({n, n});
    mask_dir1 = make_tensor({n, n});
    mask_dir2 = make_tensor({n, n});
    std::vector<int> label_of(static_cast<std::size_t>(n) * n, 0);
    for (const auto& e : *edges) {
      const std::size_t at = static_cast<std::size_t>(e.src) * n + e.dst;
      if (mask_all->data[at] != 0.0)
        throw std::invalid_argument("spatial_gat_layer: duplicate edge");
      mask_all->data[at] = 1.0;
      (e.dir == 1 ? mask_dir1 : mask_dir2)->data[at] = 1.0;
      label_of[at] = e.label;
    }
    for (int i = 0; i < n; ++i)
      if (mask_all->data[static_cast<std::size_t>(i) * n + i] == 0.0)
        throw std::logic_error("spatial_gat_layer: node " + std::to_string(i) +
                               " lacks its self-loop");
    // per-label, per-head bias: sum of each head's chunk of the bias row
    auto chunk_sums = g.reshape(
        g.reduce_sum(g.reshape(p.label_bias, {kNumLabels * p.heads, c}), 1),
        {kNumLabels, p.heads});
    bias_rows = g.gather_rows(chunk_sums, label_of);  // [n*n, heads]
  }

  std::vector<TensorPtr> head_outputs;
  for (int m = 0; m < p.heads; ++m) {
    auto qm = g.slice(q, 1, m * c, c);
    TensorPtr logits;
    if (edges) {
      auto s1 = g.matmul(qm, g.transpose(g.slice(keys[0], 1, m * c, c)));
      auto s2 = g.matmul(qm, g.transpose(g.slice(keys[1], 1, m * c, c)));
      auto gated = g.add(g.mul(s1, mask_dir1), g.mul(s2, mask_dir2));
      auto bias_m = g.reshape(g.slice(bias_rows, 1, m, 1), {n, n});
      logits = g.add(gated, bias_m);
    } else {
      logits = g.matmul(qm, g.transpose(g.slice(keys[0], 1, m * c, c)));
    }
    auto alpha = edges ? g.softmax_masked(logits, mask_all, 1) : g.softmax(logits, 1);
    if (attention_out) attention_out->push_back(alpha);
    auto messages = g.matmul(nodes, g.transpose(g.slice(p.message_w, 0, m * c, c)));
    head_outputs.push_back(g.relu(g.matmul(alpha, messages)));
  }
  return g.add(g.concat(head_outputs, 1), nodes);
}

}  // namespace

TensorPtr spatial_gat_layer(Graph& g, const SpatialGraph& graph, const GatParams& p,
                            std::vector<TensorPtr>* attention_out) {
  if (p.dir_v.size() != 2 || !p.label_bias)
    throw std::invalid_argument("spatial_gat_layer: needs two direction projections and a bias");
  return gat_update(g, graph.nodes, p, &graph.edges, attention_out);
}

TensorPtr semantic_gat_layer(Graph& g, const SemanticGraph& graph, const GatParams& p,
                             std::vector<TensorPtr>* attention_out) {
  if (p.dir_v.size() != 1 || p.label_bias)
    throw std::invalid_argument("semantic_gat_layer: needs one projection and no bias");
  return gat_update(g, graph.nodes, p, nullptr, attention_out);
}

std::vector<EncodedFrame> encode_video(Graph& g, const std::vector<FrameObjects>& frames,
                                       double frame_diag, const GatParams& spatial_p,
                                       const GatParams& semantic_p, const TensorPtr& w_s,
                                       double distance_gate) {
  if (frames.empty()) throw std::invalid_argument("encode_video: empty video");
  std::vector<EncodedFrame> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    try {
      EncodedFrame enc;
      enc.spatial = build_spatial_graph(frames[t], frame_diag, distance_gate);
      SemanticGraph sem = build_semantic_graph(frames[t]);
      enc.labels = spatial_gat_layer(g, enc.spatial, spatial_p);
      enc.features = semantic_gat_layer(g, sem, semantic_p);
      enc.semantic_weights = w_s ? semantic_edge_weights(g, sem.nodes, w_s) : nullptr;
      out.push_back(std::move(enc));
    } catch (const std::exception& e) {
      throw std::runtime_error("frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rha
