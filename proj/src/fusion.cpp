#include "rha/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace rha {

TensorPtr downsize_encode(Graph& g, const TensorPtr& x, const DownsizeParams& p) {
  if (x->rank() != 2 || x->dim(1) != p.proj->dim(0))
    throw std::invalid_argument("downsize_encode: input " + shape_str(x->shape) +
                                " does not match projection " + shape_str(p.proj->shape));
  auto y0 = g.matmul(x, p.proj);
  auto y = g.add(g.relu(g.matmul(y0, p.block_w)), y0);
  return g.layer_norm(y, p.ln_gain, p.ln_bias);
}

GuidedAttention question_guided_attention(Graph& g, const TensorPtr& hypothesis,
                                          const TensorPtr& modality) {
  GuidedAttention out;
  out.logits = g.matmul(hypothesis, g.transpose(modality));
  out.scores = g.softmax(out.logits, 1);
  out.attended = g.matmul(out.scores, modality);
  return out;
}

FusedStreams multimodal_attention(Graph& g, const std::array<TensorPtr, 3>& streams,
                                  const TensorPtr& w_f) {
  for (const auto& s : streams)
    if (s->shape != streams[0]->shape)
      throw std::invalid_argument("multimodal_attention: stream shapes differ");
  const int lq = streams[0]->dim(0);
  const int dhat = w_f->dim(1);
  const double norm = 1.0 / std::sqrt(static_cast<double>(lq) * dhat);

  std::vector<TensorPtr> zs;
  for (const auto& s : streams)
    zs.push_back(g.scale(g.reshape(g.matmul(s, w_f), {1, lq * dhat}), norm));
  auto z = g.concat(zs, 0);                     // [3, lq*dhat]
  auto gram = g.matmul(z, g.transpose(z));      // [3, 3]
  if (!gram->all_finite())
    throw std::runtime_error("multimodal_attention: non-finite Gram entries");
  auto weights = g.softmax(gram, 0);            // column-softmax: w[j][i]

  TensorPtr total;
  for (int i = 0; i < 3; ++i) {
    TensorPtr column;
    for (int j = 0; j < 3; ++j) {
      auto term = g.mul_scalar(streams[static_cast<std::size_t>(j)],
                               g.pick(weights, static_cast<std::size_t>(j) * 3 + i));
      column = column ? g.add(column, term) : term;
    }
    total = total ? g.add(total, column) : column;
  }
  return {g.scale(total, 1.0 / 3.0), weights};
}

}  // namespace rha
