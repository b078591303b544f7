#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "rha/fusion.hpp"
#include "rha/gradcheck.hpp"
#include "rha/rng.hpp"

using namespace rha;

namespace {

TensorPtr random_param(Rng& rng, Shape shape, double scale = 1.0) {
  auto t = make_tensor(std::move(shape), true);
  for (double& v : t->data) v = rng.uniform(-scale, scale);
  return t;
}

DownsizeParams random_downsize(Rng& rng, int d_in, int d_h) {
  auto gain = make_tensor({d_h}, std::vector<double>(static_cast<std::size_t>(d_h), 1.0), true);
  auto bias = make_tensor({d_h}, true);
  return {random_param(rng, {d_in, d_h}, 0.5), random_param(rng, {d_h, d_h}, 0.5), gain, bias};
}

// direct loop evaluation of the Gram fusion for the oracle comparison
struct GramOracle {
  std::vector<std::vector<double>> fused;
  double weights[3][3];
};

GramOracle oracle_fusion(const std::array<TensorPtr, 3>& streams, const TensorPtr& w_f) {
  const int lq = streams[0]->dim(0), dh = streams[0]->dim(1), dhat = w_f->dim(1);
  const double norm = 1.0 / std::sqrt(static_cast<double>(lq) * dhat);
  std::vector<std::vector<double>> z(3, std::vector<double>(static_cast<std::size_t>(lq * dhat), 0.0));
  for (int m = 0; m < 3; ++m)
    for (int i = 0; i < lq; ++i)
      for (int j = 0; j < dhat; ++j) {
        double s = 0.0;
        for (int t = 0; t < dh; ++t)
          s += streams[static_cast<std::size_t>(m)]->data[static_cast<std::size_t>(i) * dh + t] *
               w_f->data[static_cast<std::size_t>(t) * dhat + j];
        z[static_cast<std::size_t>(m)][static_cast<std::size_t>(i * dhat + j)] = s * norm;
      }
  double gram[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      gram[a][b] = 0.0;
      for (std::size_t t = 0; t < z[0].size(); ++t)
        gram[a][b] += z[static_cast<std::size_t>(a)][t] * z[static_cast<std::size_t>(b)][t];
    }
  GramOracle out;
  for (int i = 0; i < 3; ++i) {  // softmax down each column
    double mx = std::max({gram[0][i], gram[1][i], gram[2][i]});
    double zsum = 0.0;
    for (int j = 0; j < 3; ++j) zsum += std::exp(gram[j][i] - mx);
    for (int j = 0; j < 3; ++j) out.weights[j][i] = std::exp(gram[j][i] - mx) / zsum;
  }
  out.fused.assign(static_cast<std::size_t>(lq), std::vector<double>(static_cast<std::size_t>(dh), 0.0));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int r = 0; r < lq; ++r)
        for (int t = 0; t < dh; ++t)
          out.fused[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)] +=
              streams[static_cast<std::size_t>(j)]->data[static_cast<std::size_t>(r) * dh + t] *
              out.weights[j][i] / 3.0;
  return out;
}

}  // namespace

TEST_CASE("downsize encode") {
  Rng rng(101);
  const int d_in = 10, d_h = 6;

  SUBCASE("zero block weight leaves layer_norm of the projection") {
    auto p = random_downsize(rng, d_in, d_h);
    std::fill(p.block_w->data.begin(), p.block_w->data.end(), 0.0);
    auto x = random_param(rng, {3, d_in});
    Graph g;
    auto y = downsize_encode(g, x, p);
    auto y0 = g.matmul(x, p.proj);
    auto expected = g.layer_norm(y0, p.ln_gain, p.ln_bias);
    CHECK(y->data == expected->data);
  }

  SUBCASE("output width is d_h for every input width") {
    for (int din : {10, 17, 32}) {
      auto p = random_downsize(rng, din, d_h);
      auto x = random_param(rng, {4, din});
      Graph g;
      CHECK(downsize_encode(g, x, p)->shape == Shape{4, d_h});
    }
    auto p = random_downsize(rng, d_in, d_h);
    Graph g;
    CHECK_THROWS_AS(downsize_encode(g, random_param(rng, {3, d_in + 1}), p),
                    std::invalid_argument);
  }

  SUBCASE("gradient through the block") {
    auto p = random_downsize(rng, 5, 4);
    auto x = random_param(rng, {2, 5});
    auto f = [&](Graph& g) {
      auto y = downsize_encode(g, x, p);
      return g.sum_all(g.mul(y, y));
    };
    CHECK(grad_check(f, {x, p.proj, p.block_w, p.ln_gain, p.ln_bias}) < 1e-4);
  }
}

TEST_CASE("question guided attention") {
  Rng rng(103);
  const int d_h = 5;

  SUBCASE("single object receives the full score") {
    auto h = random_param(rng, {3, d_h});
    auto mod = random_param(rng, {1, d_h});
    Graph g;
    auto att = question_guided_attention(g, h, mod);
    for (double v : att.scores->data) CHECK(v == doctest::Approx(1.0));
    for (int r = 0; r < 3; ++r)
      for (int t = 0; t < d_h; ++t)
        CHECK(att.attended->data[static_cast<std::size_t>(r) * d_h + t] ==
              doctest::Approx(mod->data[static_cast<std::size_t>(t)]));
  }

  SUBCASE("orthogonal rows give uniform scores") {
    auto h = make_tensor({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
    auto mod = make_tensor({3, 4}, {0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 1});
    Graph g;
    auto att = question_guided_attention(g, h, mod);
    for (double v : att.scores->data) CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  SUBCASE("matches direct evaluation on a random case") {
    auto h = random_param(rng, {2, 3});
    auto mod = random_param(rng, {4, 3});
    Graph g;
    auto att = question_guided_attention(g, h, mod);
    for (int i = 0; i < 2; ++i) {
      std::vector<double> logits(4);
      for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int t = 0; t < 3; ++t)
          s += h->data[static_cast<std::size_t>(i) * 3 + t] *
               mod->data[static_cast<std::size_t>(j) * 3 + t];
        logits[static_cast<std::size_t>(j)] = s;
        CHECK(att.logits->data[static_cast<std::size_t>(i) * 4 + j] == doctest::Approx(s));
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double v : logits) z += std::exp(v - mx);
      for (int j = 0; j < 4; ++j) {
        const double sij = std::exp(logits[static_cast<std::size_t>(j)] - mx) / z;
        CHECK(att.scores->data[static_cast<std::size_t>(i) * 4 + j] ==
              doctest::Approx(sij).epsilon(1e-10));
        double att_t = 0.0;
        for (int jj = 0; jj < 4; ++jj)
          att_t += att.scores->data[static_cast<std::size_t>(i) * 4 + jj] *
                   mod->data[static_cast<std::size_t>(jj) * 3];
        CHECK(att.attended->data[static_cast<std::size_t>(i) * 3] ==
              doctest::Approx(att_t).epsilon(1e-10));
      }
    }
  }

  SUBCASE("permuting objects permutes score columns, attended unchanged") {
    auto h = random_param(rng, {3, d_h});
    auto mod = random_param(rng, {4, d_h});
    Graph g;
    auto base = question_guided_attention(g, h, mod);
    const std::vector<int> perm{2, 0, 3, 1};
    auto permuted = g.gather_rows(mod, perm);
    auto shuffled = question_guided_attention(g, h, permuted);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(shuffled.scores->data[static_cast<std::size_t>(i) * 4 + j] ==
              base.scores->data[static_cast<std::size_t>(i) * 4 + perm[static_cast<std::size_t>(j)]]);
    for (std::size_t t = 0; t < base.attended->data.size(); ++t)
      CHECK(shuffled.attended->data[t] == doctest::Approx(base.attended->data[t]).epsilon(1e-12));
  }

  SUBCASE("gradient") {
    auto h = random_param(rng, {2, 4});
    auto mod = random_param(rng, {3, 4});
    auto f = [&](Graph& g) {
      auto att = question_guided_attention(g, h, mod);
      return g.sum_all(g.mul(att.attended, att.attended));
    };
    CHECK(grad_check(f, {h, mod}) < 1e-4);
  }
}

TEST_CASE("multimodal gram attention") {
  Rng rng(107);
  const int lq = 4, d_h = 6, dhat = 3;

  SUBCASE("identical streams fuse to the common stream with uniform weights") {
    auto s = random_param(rng, {lq, d_h});
    auto w_f = random_param(rng, {d_h, dhat});
    Graph g;
    auto out = multimodal_attention(g, {s, s, s}, w_f);
    for (double v : out.weights->data) CHECK(v == doctest::Approx(1.0 / 3.0));
    for (std::size_t t = 0; t < s->data.size(); ++t)
      CHECK(out.fused->data[t] == doctest::Approx(s->data[t]).epsilon(1e-12));
  }

  SUBCASE("a zeroed stream still yields valid weight columns") {
    auto a = random_param(rng, {lq, d_h});
    auto b = random_param(rng, {lq, d_h});
    auto zero = make_tensor({lq, d_h});
    auto w_f = random_param(rng, {d_h, dhat});
    Graph g;
    auto out = multimodal_attention(g, {a, zero, b}, w_f);
    for (int j = 0; j < 3; ++j) {
      double col = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double v = out.weights->data[static_cast<std::size_t>(i) * 3 + j];
        CHECK(v >= 0.0);
        col += v;
      }
      CHECK(col == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(out.fused->all_finite());
  }

  SUBCASE("matches the direct Gram evaluation") {
    for (int round = 0; round < 8; ++round) {
      std::array<TensorPtr, 3> streams{random_param(rng, {lq, d_h}),
                                       random_param(rng, {lq, d_h}),
                                       random_param(rng, {lq, d_h})};
      auto w_f = random_param(rng, {d_h, dhat});
      Graph g;
      auto got = multimodal_attention(g, streams, w_f);
      auto expected = oracle_fusion(streams, w_f);
      for (int j = 0; j < 3; ++j) {
        double col = 0.0;
        for (int i = 0; i < 3; ++i) {
          CHECK(got.weights->data[static_cast<std::size_t>(i) * 3 + j] ==
                doctest::Approx(expected.weights[i][j]).epsilon(1e-10));
          col += got.weights->data[static_cast<std::size_t>(i) * 3 + j];
        }
        CHECK(col == doctest::Approx(1.0).epsilon(1e-6));
      }
      for (int r = 0; r < lq; ++r)
        for (int t = 0; t < d_h; ++t)
          CHECK(got.fused->data[static_cast<std::size_t>(r) * d_h + t] ==
                doctest::Approx(expected.fused[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)])
                    .epsilon(1e-10));
    }
  }

  SUBCASE("combination is linear in the streams for fixed weights") {
    std::array<TensorPtr, 3> streams{random_param(rng, {lq, d_h}), random_param(rng, {lq, d_h}),
                                     random_param(rng, {lq, d_h})};
    auto w_f = random_param(rng, {d_h, dhat});
    auto base = oracle_fusion(streams, w_f);
    const double c = 2.5;
    // same weight matrix, scaled streams
    GramOracle scaled;
    std::copy(&base.weights[0][0], &base.weights[0][0] + 9, &scaled.weights[0][0]);
    scaled.fused.assign(static_cast<std::size_t>(lq), std::vector<double>(static_cast<std::size_t>(d_h), 0.0));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int r = 0; r < lq; ++r)
          for (int t = 0; t < d_h; ++t)
            scaled.fused[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)] +=
                c * streams[static_cast<std::size_t>(j)]->data[static_cast<std::size_t>(r) * d_h + t] *
                base.weights[j][i] / 3.0;
    for (int r = 0; r < lq; ++r)
      for (int t = 0; t < d_h; ++t)
        CHECK(scaled.fused[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)] ==
              doctest::Approx(c * base.fused[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)]));
  }

  SUBCASE("gradient") {
    std::array<TensorPtr, 3> streams{random_param(rng, {3, 4}), random_param(rng, {3, 4}),
                                     random_param(rng, {3, 4})};
    auto w_f = random_param(rng, {4, 2});
    auto f = [&](Graph& g) {
      auto out = multimodal_attention(g, streams, w_f);
      return g.sum_all(g.mul(out.fused, out.fused));
    };
    CHECK(grad_check(f, {streams[0], streams[1], streams[2], w_f}) < 1e-4);
  }
}
