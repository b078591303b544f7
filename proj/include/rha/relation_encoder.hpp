#pragma once

#include <vector>

#include "rha/instance.hpp"
#include "rha/tensor.hpp"

namespace rha {

// Directed relation edge: `src` is the attending node, `dst` the attended
// neighbor. label 0 is the self-loop; 1..11 are the spatial relation
// classes. dir is 1 when src < dst (and for self-loops), 2 on the reverse
// companion edge.
struct SpatialEdge {
  int src = 0;
  int dst = 0;
  int label = 0;
  int dir = 1;
};

struct SpatialGraph {
  TensorPtr nodes;  // label embeddings, [N_o x d_l]
  std::vector<SpatialEdge> edges;
  int num_nodes() const { return nodes ? nodes->dim(0) : 0; }
};

// Fully connected (self-loops included); nodes are visual features.
struct SemanticGraph {
  TensorPtr nodes;  // [N_o x d_o]
  int num_nodes() const { return nodes ? nodes->dim(0) : 0; }
};

// Parameters of one graph-attention layer. Head m uses rows
// [m*c, (m+1)*c) of message_w and the matching output chunk of query_u /
// dir_v, c = node_dim / heads, so the concatenated head outputs keep the
// node width and the residual stays well-formed.
struct GatParams {
  TensorPtr message_w;            // W, [d x d]
  TensorPtr query_u;              // U, [d x d]
  std::vector<TensorPtr> dir_v;   // V^dir: {V1, V2} spatial, {V} semantic
  TensorPtr label_bias;           // [12 x d] spatial, null for semantic
  int heads = 1;

  void validate(int node_dim) const;
  int head_dim(int node_dim) const { return node_dim / heads; }
};

// One directed edge per ordered object pair with a non-none spatial
// relation, plus a self-loop per node. Throws on an empty frame.
SpatialGraph build_spatial_graph(const FrameObjects& frame, double frame_diag,
                                 double distance_gate = 0.5);

SemanticGraph build_semantic_graph(const FrameObjects& frame);

// Row-softmaxed pairwise affinities of the semantic graph:
// score(i,j) = w_s . [o_i; o_j], softmax over j. Returns [N_o x N_o].
TensorPtr semantic_edge_weights(Graph& g, const TensorPtr& nodes, const TensorPtr& w_s);

// Per-head attention over each node's neighbors with direction-keyed
// projections and label-keyed biases; head outputs pass through ReLU, are
// concatenated and added to the input (residual). Optionally reports the
// per-head attention matrices.
TensorPtr spatial_gat_layer(Graph& g, const SpatialGraph& graph, const GatParams& p,
                            std::vector<TensorPtr>* attention_out = nullptr);

// Same update on the fully connected graph: single projection, no bias,
// softmax over all nodes.
TensorPtr semantic_gat_layer(Graph& g, const SemanticGraph& graph, const GatParams& p,
                             std::vector<TensorPtr>* attention_out = nullptr);

struct EncodedFrame {
  TensorPtr labels;           // updated label embeddings, [N_o x d_l]
  TensorPtr features;         // updated visual features, [N_o x d_o]
  TensorPtr semantic_weights; // [N_o x N_o]
  SpatialGraph spatial;
};

// Applies both layers to every frame with shared parameters. w_s scores
// the semantic edges. Frame-local failures are rethrown with the frame
// index attached.
std::vector<EncodedFrame> encode_video(Graph& g, const std::vector<FrameObjects>& frames,
                                       double frame_diag, const GatParams& spatial_p,
                                       const GatParams& semantic_p, const TensorPtr& w_s,
                                       double distance_gate = 0.5);

}  // namespace rha
