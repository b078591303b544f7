#pragma once

#include <vector>

#include "rha/geometry.hpp"
#include "rha/tensor.hpp"

namespace rha {

struct LossWeights {
  double w_ans = 1.0;
  double w_spa = 0.5;
  double w_temp = 0.5;
};

struct ConvPoolParams {
  TensorPtr weight;  // [3*d_h x d_h]
  TensorPtr bias;    // [d_h]
};

// Per-frame kernel-3 convolution over the token axis (same padding),
// ReLU, then max over tokens. frames[t] is [L_q x d_h]; result is
// [T x d_h]. Requires L_q >= 3.
TensorPtr temporal_encode(Graph& g, const std::vector<TensorPtr>& frames,
                          const ConvPoolParams& p);

struct SpanHeadParams {
  TensorPtr start_w;  // [d_h x 1]
  TensorPtr start_b;  // [1]
  TensorPtr end_w;
  TensorPtr end_b;
};

struct SpanDistributions {
  TensorPtr p_start;  // [T]
  TensorPtr p_end;    // [T]
};

SpanDistributions span_heads(Graph& g, const TensorPtr& a, const SpanHeadParams& p);

// argmax over s <= e < s+max_len of p_start[s]*p_end[e], O(T) via a
// sliding-window max of p_start; ties prefer the smallest s, then the
// smallest e. Returned span is half-open [s, e+1).
TimeSpan dp_span_proposal(const std::vector<double>& p_start, const std::vector<double>& p_end,
                          int max_len);

struct AnswerParams {
  TensorPtr encode_w;  // [d_h x d_h]
  TensorPtr encode_b;  // [d_h]
  TensorPtr score_w;   // [2*d_h x 1]
  TensorPtr score_b;   // [1]
};

// Global (all frames) and local (proposed span) max-pooled views of the
// encoded sequence, concatenated and scored; softmax over the 5 scores.
TensorPtr answer_scores(Graph& g, const std::vector<TensorPtr>& encoded,
                        const std::vector<TimeSpan>& spans, const AnswerParams& p);

// Pairwise ranking loss on per-object scores of one frame:
// sum over (pos, neg) of log(1 + exp(s_neg - s_pos)). object_scores is
// [N_o]; returns a scalar, 0 if either set is empty.
TensorPtr spatial_pair_loss(Graph& g, const TensorPtr& object_scores,
                            const std::vector<int>& positives, const std::vector<int>& negatives);

// (CE(p_start, gt.start) + CE(p_end, gt.end-1)) / 2
TensorPtr temporal_loss(Graph& g, const SpanDistributions& d, const TimeSpan& gt);

TensorPtr total_loss(Graph& g, const TensorPtr& answer, const TensorPtr& spatial,
                     const TensorPtr& temporal, const LossWeights& w);

}  // namespace rha
