#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rha/gradcheck.hpp"
#include "rha/predictor.hpp"
#include "rha/rng.hpp"

using namespace rha;

namespace {

TensorPtr random_param(Rng& rng, Shape shape, double scale = 1.0) {
  auto t = make_tensor(std::move(shape), true);
  for (double& v : t->data) v = rng.uniform(-scale, scale);
  return t;
}

std::vector<double> random_distribution(Rng& rng, int n) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double z = 0.0;
  for (double& v : p) {
    v = rng.uniform(0.0, 1.0);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

// exhaustive O(T^2) search with the same tie rules
TimeSpan oracle_span(const std::vector<double>& p1, const std::vector<double>& p2, int max_len) {
  const int t = static_cast<int>(p1.size());
  double best = -1.0;
  int bs = 0, be = 0;
  for (int s = 0; s < t; ++s)
    for (int e = s; e < std::min(t, s + max_len); ++e) {
      const double prod = p1[static_cast<std::size_t>(s)] * p2[static_cast<std::size_t>(e)];
      if (prod > best) {
        best = prod;
        bs = s;
        be = e;
      }
    }
  return {bs, be + 1};
}

}  // namespace

TEST_CASE("temporal encode") {
  Rng rng(211);
  const int lq = 5, dh = 4;
  ConvPoolParams conv{random_param(rng, {3 * dh, dh}), random_param(rng, {dh})};

  SUBCASE("constant tokens: interior rows convolve identically") {
    auto frame = make_tensor({lq, dh});
    for (int i = 0; i < lq; ++i)
      for (int j = 0; j < dh; ++j) frame->data[static_cast<std::size_t>(i) * dh + j] = 0.3 * (j + 1);
    Graph g;
    auto a = temporal_encode(g, {frame}, conv);
    CHECK(a->shape == Shape{1, dh});
    // reproduce the shared interior value by hand for channel 0
    double interior = conv.bias->data[0];
    for (int t = 0; t < 3 * dh; ++t)
      interior += 0.3 * ((t % dh) + 1) * conv.weight->data[static_cast<std::size_t>(t) * dh];
    interior = std::max(0.0, interior);
    // pooled value is the max over rows; border rows lack one neighbor
    CHECK(a->data[0] >= doctest::Approx(interior).epsilon(1e-12));
  }

  SUBCASE("shape is [T x d_h] for any token count >= 3") {
    for (int tokens : {3, 5, 9}) {
      std::vector<TensorPtr> frames;
      for (int t = 0; t < 4; ++t) frames.push_back(random_param(rng, {tokens, dh}));
      Graph g;
      CHECK(temporal_encode(g, frames, conv)->shape == Shape{4, dh});
    }
    Graph g;
    CHECK_THROWS_WITH_AS(temporal_encode(g, {random_param(rng, {2, dh})}, conv),
                         doctest::Contains("kernel"), std::invalid_argument);
  }

  SUBCASE("gradient") {
    std::vector<TensorPtr> frames{random_param(rng, {4, 3}), random_param(rng, {4, 3})};
    ConvPoolParams small{random_param(rng, {9, 3}), random_param(rng, {3})};
    auto f = [&](Graph& g) {
      auto a = temporal_encode(g, frames, small);
      return g.sum_all(g.mul(a, a));
    };
    CHECK(grad_check(f, {frames[0], frames[1], small.weight, small.bias}) < 1e-4);
  }
}

TEST_CASE("span heads") {
  Rng rng(223);
  const int dh = 4;
  SpanHeadParams p{random_param(rng, {dh, 1}), random_param(rng, {1}),
                   random_param(rng, {dh, 1}), random_param(rng, {1})};

  SUBCASE("single frame is a point distribution") {
    Graph g;
    auto d = span_heads(g, random_param(rng, {1, dh}), p);
    CHECK(d.p_start->data == std::vector<double>{1.0});
    CHECK(d.p_end->data == std::vector<double>{1.0});
  }

  SUBCASE("identical frames give uniform distributions") {
    auto a = make_tensor({3, dh});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < dh; ++j) a->data[static_cast<std::size_t>(i) * dh + j] = 0.7 - 0.2 * j;
    Graph g;
    auto d = span_heads(g, a, p);
    for (double v : d.p_start->data) CHECK(v == doctest::Approx(1.0 / 3.0));
    for (double v : d.p_end->data) CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  SUBCASE("matches a straight-line evaluation") {
    auto a = random_param(rng, {4, dh});
    Graph g;
    auto d = span_heads(g, a, p);
    std::vector<double> logits(4);
    for (int i = 0; i < 4; ++i) {
      double s = p.start_b->data[0];
      for (int j = 0; j < dh; ++j)
        s += a->data[static_cast<std::size_t>(i) * dh + j] * p.start_w->data[static_cast<std::size_t>(j)];
      logits[static_cast<std::size_t>(i)] = s;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    for (int i = 0; i < 4; ++i)
      CHECK(d.p_start->data[static_cast<std::size_t>(i)] ==
            doctest::Approx(std::exp(logits[static_cast<std::size_t>(i)] - mx) / z).epsilon(1e-10));
  }
}

TEST_CASE("dp span proposal") {
  SUBCASE("fixed example") {
    const TimeSpan s = dp_span_proposal({0.7, 0.2, 0.1}, {0.1, 0.2, 0.7}, 3);
    CHECK(s == TimeSpan{0, 3});  // start 0, end frame 2
  }

  SUBCASE("one-hot heads select their peaks") {
    const TimeSpan s = dp_span_proposal({0, 1, 0, 0}, {0, 0, 0, 1}, 4);
    CHECK(s == TimeSpan{1, 4});
    const TimeSpan point = dp_span_proposal({0, 0, 1, 0}, {0, 0, 1, 0}, 4);
    CHECK(point == TimeSpan{2, 3});
  }

  SUBCASE("max_len constrains the window") {
    // unconstrained argmax would be (0, 3)
    const TimeSpan s = dp_span_proposal({0.9, 0.05, 0.03, 0.02}, {0.01, 0.01, 0.01, 0.97}, 2);
    CHECK(s.length() <= 2);
    CHECK(s == oracle_span({0.9, 0.05, 0.03, 0.02}, {0.01, 0.01, 0.01, 0.97}, 2));
  }

  SUBCASE("ties prefer the smallest start then end") {
    const TimeSpan s = dp_span_proposal({0.5, 0.5}, {0.5, 0.5}, 2);
    CHECK(s == TimeSpan{0, 1});
  }

  SUBCASE("argument checks") {
    CHECK_THROWS_AS(dp_span_proposal({0.5, 0.5}, {0.5, 0.5}, 0), std::invalid_argument);
    CHECK_THROWS_AS(dp_span_proposal({0.5, 0.5}, {0.5, 0.5}, 3), std::invalid_argument);
    CHECK_THROWS_AS(dp_span_proposal({}, {}, 1), std::invalid_argument);
    CHECK_THROWS_AS(dp_span_proposal({1.0}, {0.5, 0.5}, 1), std::invalid_argument);
  }

  SUBCASE("matches exhaustive search on 1000 random cases") {
    Rng rng(227);
    for (int round = 0; round < 1000; ++round) {
      const int t = 1 + rng.uniform_int(50);
      const int max_len = 1 + rng.uniform_int(t);
      auto p1 = random_distribution(rng, t);
      auto p2 = random_distribution(rng, t);
      if (round % 5 == 0) {
        // inject ties
        p1[static_cast<std::size_t>(rng.uniform_int(t))] =
            p1[static_cast<std::size_t>(rng.uniform_int(t))];
        p2[static_cast<std::size_t>(rng.uniform_int(t))] = 0.0;
      }
      CAPTURE(t);
      CAPTURE(max_len);
      CHECK(dp_span_proposal(p1, p2, max_len) == oracle_span(p1, p2, max_len));
    }
  }
}

TEST_CASE("answer scores") {
  Rng rng(229);
  const int dh = 4, t = 3;
  AnswerParams p{random_param(rng, {dh, dh}), random_param(rng, {dh}),
                 random_param(rng, {2 * dh, 1}), random_param(rng, {1})};

  SUBCASE("identical sequences give the uniform answer distribution") {
    auto a = random_param(rng, {t, dh});
    std::vector<TensorPtr> enc(5, a);
    std::vector<TimeSpan> spans(5, TimeSpan{0, 2});
    Graph g;
    auto probs = answer_scores(g, enc, spans, p);
    double sum = 0.0;
    for (double v : probs->data) {
      CHECK(v == doctest::Approx(0.2));
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("matches straight-line evaluation") {
    std::vector<TensorPtr> enc;
    std::vector<TimeSpan> spans;
    for (int k = 0; k < 5; ++k) {
      enc.push_back(random_param(rng, {t, dh}));
      spans.push_back({k % t, k % t + 1});
    }
    Graph g;
    auto probs = answer_scores(g, enc, spans, p);
    std::vector<double> scores(5);
    for (int k = 0; k < 5; ++k) {
      std::vector<std::vector<double>> encoded(static_cast<std::size_t>(t),
                                               std::vector<double>(static_cast<std::size_t>(dh)));
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < dh; ++j) {
          double s = p.encode_b->data[static_cast<std::size_t>(j)];
          for (int r = 0; r < dh; ++r)
            s += enc[static_cast<std::size_t>(k)]->data[static_cast<std::size_t>(i) * dh + r] *
                 p.encode_w->data[static_cast<std::size_t>(r) * dh + j];
          encoded[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::max(0.0, s);
        }
      double score = p.score_b->data[0];
      for (int j = 0; j < dh; ++j) {
        double global = encoded[0][static_cast<std::size_t>(j)];
        for (int i = 1; i < t; ++i) global = std::max(global, encoded[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        double local = encoded[static_cast<std::size_t>(spans[static_cast<std::size_t>(k)].start)][static_cast<std::size_t>(j)];
        for (int i = spans[static_cast<std::size_t>(k)].start; i < spans[static_cast<std::size_t>(k)].end; ++i)
          local = std::max(local, encoded[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        score += global * p.score_w->data[static_cast<std::size_t>(j)] +
                 local * p.score_w->data[static_cast<std::size_t>(dh + j)];
      }
      scores[static_cast<std::size_t>(k)] = score;
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double v : scores) z += std::exp(v - mx);
    for (int k = 0; k < 5; ++k)
      CHECK(probs->data[static_cast<std::size_t>(k)] ==
            doctest::Approx(std::exp(scores[static_cast<std::size_t>(k)] - mx) / z).epsilon(1e-10));
  }

  SUBCASE("raising the winning logit lowers the answer loss") {
    // monotone sanity on the score -> cross entropy composite
    std::vector<double> base{0.1, 0.4, -0.2, 0.0, 0.3};
    double prev = 1e9;
    for (double bump = 0.0; bump < 2.0; bump += 0.4) {
      auto s = make_tensor({5}, base);
      s->data[1] += bump;
      Graph g;
      const double loss = g.cross_entropy(g.softmax(s, 0), 1)->data[0];
      CHECK(loss < prev);
      prev = loss;
    }
  }

  SUBCASE("invalid span is rejected") {
    std::vector<TensorPtr> enc(5, random_param(rng, {t, dh}));
    std::vector<TimeSpan> spans(5, TimeSpan{0, t + 1});
    Graph g;
    CHECK_THROWS_AS(answer_scores(g, enc, spans, p), std::logic_error);
  }
}

TEST_CASE("spatial pair loss") {
  SUBCASE("zero margin gives log 2 per pair") {
    auto s = make_tensor({4}, {0.5, 0.5, 0.5, 0.5});
    Graph g;
    auto loss = spatial_pair_loss(g, s, {0, 1}, {2, 3});
    CHECK(loss->data[0] == doctest::Approx(4.0 * std::log(2.0)));
  }

  SUBCASE("large positive margin drives the loss to zero") {
    auto s = make_tensor({2}, {40.0, 0.0});
    Graph g;
    CHECK(spatial_pair_loss(g, s, {0}, {1})->data[0] == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("hand-summed 2x2 case") {
    auto s = make_tensor({4}, {1.0, 2.0, 0.5, -0.5});
    Graph g;
    auto loss = spatial_pair_loss(g, s, {0, 1}, {2, 3});
    const double expected = std::log1p(std::exp(0.5 - 1.0)) + std::log1p(std::exp(-0.5 - 1.0)) +
                            std::log1p(std::exp(0.5 - 2.0)) + std::log1p(std::exp(-0.5 - 2.0));
    CHECK(loss->data[0] == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("empty sets contribute nothing") {
    auto s = make_tensor({3}, {1.0, 2.0, 3.0});
    Graph g;
    CHECK(spatial_pair_loss(g, s, {}, {0, 1})->data[0] == 0.0);
    CHECK(spatial_pair_loss(g, s, {2}, {})->data[0] == 0.0);
  }

  SUBCASE("gradient") {
    Rng rng(233);
    auto s = random_param(rng, {5});
    auto f = [&](Graph& g) { return spatial_pair_loss(g, s, {0, 2}, {1, 3, 4}); };
    CHECK(grad_check(f, {s}) < 1e-4);
  }
}

TEST_CASE("temporal loss") {
  SUBCASE("one-hot correct heads give zero loss") {
    Graph g;
    SpanDistributions d{make_tensor({4}, {0, 1, 0, 0}), make_tensor({4}, {0, 0, 1, 0})};
    CHECK(temporal_loss(g, d, {1, 3})->data[0] == doctest::Approx(0.0));
  }

  SUBCASE("uniform heads over 10 frames cost ln 10") {
    Graph g;
    auto u = make_tensor({10}, std::vector<double>(10, 0.1));
    SpanDistributions d{u, u};
    CHECK(temporal_loss(g, d, {2, 7})->data[0] == doctest::Approx(std::log(10.0)));
  }

  SUBCASE("out-of-range span is rejected") {
    Graph g;
    auto u = make_tensor({4}, std::vector<double>(4, 0.25));
    SpanDistributions d{u, u};
    CHECK_THROWS_AS(temporal_loss(g, d, {2, 6}), std::out_of_range);
  }

  SUBCASE("gradient") {
    Rng rng(239);
    auto logits1 = random_param(rng, {6});
    auto logits2 = random_param(rng, {6});
    auto f = [&](Graph& g) {
      SpanDistributions d{g.softmax(logits1, 0), g.softmax(logits2, 0)};
      return temporal_loss(g, d, {1, 4});
    };
    CHECK(grad_check(f, {logits1, logits2}) < 1e-4);
  }
}

TEST_CASE("total loss") {
  Graph g;
  const LossWeights w;
  CHECK(total_loss(g, make_scalar(0), make_scalar(0), make_scalar(0), w)->data[0] == 0.0);
  CHECK(total_loss(g, make_scalar(1), make_scalar(2), make_scalar(2), w)->data[0] ==
        doctest::Approx(3.0));

  Rng rng(241);
  for (int i = 0; i < 20; ++i) {
    const double a = rng.uniform(0.0, 4.0), s = rng.uniform(0.0, 4.0), t = rng.uniform(0.0, 4.0);
    CHECK(total_loss(g, make_scalar(a), make_scalar(s), make_scalar(t), w)->data[0] ==
          doctest::Approx(a + 0.5 * s + 0.5 * t));
  }

  CHECK_THROWS_WITH_AS(total_loss(g, make_scalar(-1), make_scalar(0), make_scalar(0), w),
                       doctest::Contains("negative"), std::invalid_argument);
}
