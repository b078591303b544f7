#pragma once

#include <array>

#include "rha/tensor.hpp"

namespace rha {

// Residual downsize block: a plain linear projection to the hidden width
// followed by Layernorm(ReLU(y W_d) + y).
struct DownsizeParams {
  TensorPtr proj;     // [d_in x d_h]
  TensorPtr block_w;  // W_d, [d_h x d_h]
  TensorPtr ln_gain;  // [d_h]
  TensorPtr ln_bias;  // [d_h]
};

TensorPtr downsize_encode(Graph& g, const TensorPtr& x, const DownsizeParams& p);

struct GuidedAttention {
  TensorPtr logits;    // pre-softmax scores, [L_q x n]; kept for the spatial loss
  TensorPtr scores;    // softmax over n
  TensorPtr attended;  // [L_q x d_h]
};

// scores = softmax_n(h_k modality^T); attended = scores . modality
GuidedAttention question_guided_attention(Graph& g, const TensorPtr& hypothesis,
                                          const TensorPtr& modality);

struct FusedStreams {
  TensorPtr fused;    // [L_q x d_h]
  TensorPtr weights;  // [3 x 3], columns are distributions over modalities
};

// Gram-matrix self-attention over the three attended streams. Each stream
// is projected by w_f, flattened and scaled by 1/sqrt(L_q*dhat) before the
// Gram product; column-softmax of the Gram matrix weights the streams and
// the three reweighted columns are averaged into one output stream.
FusedStreams multimodal_attention(Graph& g, const std::array<TensorPtr, 3>& streams,
                                  const TensorPtr& w_f);

}  // namespace rha
