#include "rha/predictor.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

namespace rha {

TensorPtr temporal_encode(Graph& g, const std::vector<TensorPtr>& frames,
                          const ConvPoolParams& p) {
  if (frames.empty()) throw std::invalid_argument("temporal_encode: no frames");
  const int lq = frames[0]->dim(0);
  if (lq < 3)
    throw std::invalid_argument("temporal_encode: token count " + std::to_string(lq) +
                                " is below the kernel width 3");
  std::vector<TensorPtr> rows;
  rows.reserve(frames.size());
  for (const auto& y : frames) {
    auto window = g.concat({g.shift_rows(y, 1), y, g.shift_rows(y, -1)}, 1);  // [L_q x 3d]
    auto conv = g.relu(g.add_rowvec(g.matmul(window, p.weight), p.bias));
    rows.push_back(g.reshape(g.reduce_max(conv, 0), {1, conv->dim(1)}));
  }
  return g.concat(rows, 0);  // [T x d_h]
}

SpanDistributions span_heads(Graph& g, const TensorPtr& a, const SpanHeadParams& p) {
  const int t = a->dim(0);
  auto head = [&](const TensorPtr& w, const TensorPtr& b) {
    return g.softmax(g.reshape(g.add_rowvec(g.matmul(a, w), b), {t}), 0);
  };
  return {head(p.start_w, p.start_b), head(p.end_w, p.end_b)};
}

TimeSpan dp_span_proposal(const std::vector<double>& p_start, const std::vector<double>& p_end,
                          int max_len) {
  const int t = static_cast<int>(p_start.size());
  if (t == 0 || p_end.size() != p_start.size())
    throw std::invalid_argument("dp_span_proposal: distributions must be nonempty, same length");
  if (max_len < 1 || max_len > t)
    throw std::invalid_argument("dp_span_proposal: max_len " + std::to_string(max_len) +
                                " outside [1," + std::to_string(t) + "]");
  // window holds candidate start indices with non-increasing p_start;
  // equal values keep the earlier index at the front, so the window
  // argmax is the smallest tied s
  std::deque<int> window;
  double best = -1.0;
  int best_s = 0, best_e = 0;
  for (int e = 0; e < t; ++e) {
    while (!window.empty() && p_start[static_cast<std::size_t>(window.back())] <
                                  p_start[static_cast<std::size_t>(e)])
      window.pop_back();
    window.push_back(e);
    if (window.front() < e - max_len + 1) window.pop_front();
    const int s = window.front();
    const double prod =
        p_start[static_cast<std::size_t>(s)] * p_end[static_cast<std::size_t>(e)];
    if (prod > best || (prod == best && (s < best_s || (s == best_s && e < best_e)))) {
      best = prod;
      best_s = s;
      best_e = e;
    }
  }
  return {best_s, best_e + 1};
}

TensorPtr answer_scores(Graph& g, const std::vector<TensorPtr>& encoded,
                        const std::vector<TimeSpan>& spans, const AnswerParams& p) {
  if (encoded.size() != spans.size() || encoded.empty())
    throw std::invalid_argument("answer_scores: need one span per hypothesis");
  const int dh = encoded[0]->dim(1);
  std::vector<TensorPtr> scores;
  for (std::size_t k = 0; k < encoded.size(); ++k) {
    const auto& span = spans[k];
    const int t = encoded[k]->dim(0);
    if (!span.valid() || span.end > t)
      throw std::logic_error("answer_scores: span [" + std::to_string(span.start) + "," +
                             std::to_string(span.end) + ") invalid for " + std::to_string(t) +
                             " frames");
    auto enc = g.relu(g.add_rowvec(g.matmul(encoded[k], p.encode_w), p.encode_b));
    auto global = g.reduce_max(enc, 0);
    auto local = g.reduce_max(g.slice_rows(enc, span.start, span.length()), 0);
    auto both = g.reshape(g.concat({global, local}, 0), {1, 2 * dh});
    scores.push_back(g.add_rowvec(g.matmul(both, p.score_w), p.score_b));
  }
  const int n = static_cast<int>(scores.size());
  return g.softmax(g.reshape(g.concat(scores, 0), {n}), 0);
}

TensorPtr spatial_pair_loss(Graph& g, const TensorPtr& object_scores,
                            const std::vector<int>& positives,
                            const std::vector<int>& negatives) {
  if (object_scores->rank() != 1)
    throw std::invalid_argument("spatial_pair_loss: scores must be 1-D");
  if (positives.empty() || negatives.empty()) return make_scalar(0.0);
  const int np = static_cast<int>(positives.size());
  const int nn = static_cast<int>(negatives.size());
  auto col = g.reshape(object_scores, {object_scores->dim(0), 1});
  auto pos = g.gather_rows(col, positives);  // [np x 1]
  auto neg = g.gather_rows(col, negatives);  // [nn x 1]
  auto ones_p = make_tensor({np, 1}, std::vector<double>(static_cast<std::size_t>(np), 1.0));
  auto ones_n = make_tensor({1, nn}, std::vector<double>(static_cast<std::size_t>(nn), 1.0));
  // margins[p][n] = s_neg[n] - s_pos[p]
  auto margins = g.sub(g.matmul(ones_p, g.transpose(neg)), g.matmul(pos, ones_n));
  return g.sum_all(g.softplus(margins));
}

TensorPtr temporal_loss(Graph& g, const SpanDistributions& d, const TimeSpan& gt) {
  const int t = d.p_start->dim(0);
  if (!gt.valid() || gt.end > t)
    throw std::out_of_range("temporal_loss: ground-truth span [" + std::to_string(gt.start) +
                            "," + std::to_string(gt.end) + ") outside " + std::to_string(t) +
                            " frames");
  auto ce = g.add(g.cross_entropy(d.p_start, gt.start), g.cross_entropy(d.p_end, gt.end - 1));
  return g.scale(ce, 0.5);
}

TensorPtr total_loss(Graph& g, const TensorPtr& answer, const TensorPtr& spatial,
                     const TensorPtr& temporal, const LossWeights& w) {
  for (const TensorPtr& part : {answer, spatial, temporal}) {
    if (part->numel() != 1) throw std::invalid_argument("total_loss: components must be scalar");
    if (!std::isfinite(part->data[0]) || part->data[0] < 0.0)
      throw std::invalid_argument("total_loss: component " + std::to_string(part->data[0]) +
                                  " is negative or not finite");
  }
  if (w.w_ans < 0.0 || w.w_spa < 0.0 || w.w_temp < 0.0)
    throw std::invalid_argument("total_loss: weights must be nonnegative");
  return g.add(g.scale(answer, w.w_ans),
               g.add(g.scale(spatial, w.w_spa), g.scale(temporal, w.w_temp)));
}

}  // namespace rha
