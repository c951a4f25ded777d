#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "advdet/autodiff/graph.hpp"
#include "advdet/autodiff/losses.hpp"
#include "advdet/autodiff/ops.hpp"
#include "advdet/core/config.hpp"
#include "test_util.hpp"

using namespace advdet;
using ad::Graph;
using ad::Matrix;
using ad::TensorShape;
using ad::Var;
using Mat = Matrix<double>;

namespace {

using Builder = std::function<Var(Graph<double>&, Var)>;

/// Analytic gradient of build(x) w.r.t. x against central differences.
double gradient_error(const Builder& build, const Mat& x0, TensorShape shape) {
  Graph<double> g;
  Var x = g.variable(x0, shape);
  Var out = build(g, x);
  g.backward(out);
  const Mat analytic = g.grad(x);
  const Mat numeric = tu::numeric_gradient(
      [&](const Mat& x) {
        Graph<double> h(false);
        return h.scalar(build(h, h.constant(x, shape)));
      },
      x0);
  return tu::relative_error(analytic, numeric);
}

Var squares(Graph<double>& g, Var y) { return ad::sum_squares(g, y); }

}  // namespace

TEST(Graph, ShapeMismatchIsRejected) {
  Graph<double> g;
  EXPECT_THROW(g.constant(Mat::Zero(3, 2), TensorShape::flat(2, 2)), ShapeError);
  Var v = g.constant(Mat::Zero(2, 2), TensorShape::flat(2, 2));
  EXPECT_THROW(g.backward(v), ShapeError);
  EXPECT_THROW(g.scalar(v), ShapeError);
}

TEST(Graph, ParameterGradientsAccumulateUntilZeroed) {
  ad::Parameter<double> p("p", Mat::Constant(1, 2, 3.0));
  for (int i = 0; i < 2; ++i) {
    Graph<double> g;
    g.backward(ad::sum_squares(g, g.param(p)));
  }
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 12.0);  // 2 * (2 * 3)
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad(0, 1), 0.0);
}

TEST(Graph, NoGradModeLeavesParametersUntouched) {
  ad::Parameter<double> p("p", Mat::Constant(1, 2, 3.0));
  Graph<double> g(false);
  Var y = ad::sum_squares(g, g.param(p));
  EXPECT_FALSE(g.requires_grad(y));
  EXPECT_DOUBLE_EQ(g.scalar(y), 18.0);
  g.backward(y);
  EXPECT_DOUBLE_EQ(p.grad.norm(), 0.0);
}

TEST(Ops, LinearGradient) {
  std::mt19937_64 rng(1);
  const Mat w = tu::random_matrix(rng, 4, 3), b = tu::random_matrix(rng, 1, 3);
  const Builder f = [&](Graph<double>& g, Var x) {
    return squares(g, ad::linear(g, x, g.constant(w, TensorShape::flat(4, 3)), g.constant(b, TensorShape::flat(1, 3))));
  };
  EXPECT_LT(gradient_error(f, tu::random_matrix(rng, 5, 4), TensorShape::flat(5, 4)), 1e-7);
  // and w.r.t. the weight
  const Mat x = tu::random_matrix(rng, 5, 4);
  const Builder fw = [&](Graph<double>& g, Var wv) {
    return squares(g, ad::linear(g, g.constant(x, TensorShape::flat(5, 4)), wv, g.constant(b, TensorShape::flat(1, 3))));
  };
  EXPECT_LT(gradient_error(fw, w, TensorShape::flat(4, 3)), 1e-7);
}

TEST(Ops, LinearShapeError) {
  Graph<double> g;
  EXPECT_THROW(ad::linear(g, g.constant(Mat::Zero(2, 3), TensorShape::flat(2, 3)),
                          g.constant(Mat::Zero(4, 1), TensorShape::flat(4, 1)),
                          g.constant(Mat::Zero(1, 1), TensorShape::flat(1, 1))),
               ShapeError);
}

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(2);
  const Mat x = tu::random_matrix(rng, 6, 5);
  const auto shape = TensorShape::flat(6, 5);
  EXPECT_LT(gradient_error([](auto& g, Var v) { return squares(g, ad::relu(g, v)); }, x, shape), 1e-7);
  EXPECT_LT(gradient_error([](auto& g, Var v) { return squares(g, ad::sigmoid(g, v)); }, x, shape), 1e-7);
  EXPECT_LT(gradient_error([](auto& g, Var v) { return squares(g, ad::pairwise_sq_diff(g, v)); }, x, shape), 1e-7);
  const std::vector<int> rows{4, 0, 4};
  EXPECT_LT(gradient_error([&](auto& g, Var v) { return squares(g, ad::gather_rows(g, v, rows)); }, x, shape), 1e-7);
}

TEST(Ops, ImageGradients) {
  std::mt19937_64 rng(3);
  const TensorShape s{2, 4, 6, 3};
  const Mat x = tu::random_matrix(rng, s.rows(), s.c);
  const Mat w = tu::random_matrix(rng, 27, 2, 0.3), b = tu::random_matrix(rng, 1, 2);
  const Builder conv = [&](Graph<double>& g, Var v) {
    return squares(g, ad::conv3x3(g, v, g.constant(w, TensorShape::flat(27, 2)), g.constant(b, TensorShape::flat(1, 2))));
  };
  EXPECT_LT(gradient_error(conv, x, s), 1e-7);
  const Builder conv_w = [&](Graph<double>& g, Var wv) {
    return squares(g, ad::conv3x3(g, g.constant(x, s), wv, g.constant(b, TensorShape::flat(1, 2))));
  };
  EXPECT_LT(gradient_error(conv_w, w, TensorShape::flat(27, 2)), 1e-7);
  // layer_norm output has a fixed squared norm, so weight the entries first
  const Builder ln = [&](Graph<double>& g, Var v) {
    return squares(g, ad::conv3x3(g, ad::layer_norm(g, v), g.constant(w, TensorShape::flat(27, 2)),
                                  g.constant(b, TensorShape::flat(1, 2))));
  };
  EXPECT_LT(gradient_error(ln, x, s), 1e-6);
  EXPECT_LT(gradient_error([](auto& g, Var v) { return squares(g, ad::max_pool2(g, v)); }, x, s), 1e-7);
  EXPECT_LT(gradient_error([](auto& g, Var v) { return squares(g, ad::global_avg_pool(g, v)); }, x, s), 1e-7);
}

TEST(Ops, ConvMatchesDirectLoop) {
  std::mt19937_64 rng(4);
  const TensorShape s{1, 3, 4, 2};
  const Mat x = tu::random_matrix(rng, s.rows(), s.c);
  const Mat w = tu::random_matrix(rng, 18, 3);
  Graph<double> g;
  const Mat& y = g.value(ad::conv3x3(g, g.constant(x, s), g.constant(w, TensorShape::flat(18, 3)),
                                     g.constant(Mat::Zero(1, 3), TensorShape::flat(1, 3))));
  for (int oy = 0; oy < s.h; ++oy) {
    for (int ox = 0; ox < s.w; ++ox) {
      for (int co = 0; co < 3; ++co) {
        double acc = 0;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy + ky - 1, ix = ox + kx - 1;
            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
            for (int ci = 0; ci < s.c; ++ci) acc += x(iy * s.w + ix, ci) * w((ky * 3 + kx) * s.c + ci, co);
          }
        }
        EXPECT_NEAR(y(oy * s.w + ox, co), acc, 1e-12);
      }
    }
  }
}

TEST(Ops, LayerNormStatistics) {
  std::mt19937_64 rng(5);
  const TensorShape s{3, 2, 2, 4};
  Graph<double> g;
  const Mat& y = g.value(ad::layer_norm(g, g.constant(tu::random_matrix(rng, s.rows(), s.c, 5.0), s)));
  for (int n = 0; n < s.n; ++n) {
    const auto block = y.middleRows(n * 4, 4);
    EXPECT_NEAR(block.mean(), 0.0, 1e-12);
    EXPECT_NEAR(block.squaredNorm() / 16.0, 1.0, 1e-5);
  }
}

TEST(Ops, PairwiseDifferenceExamples) {
  Graph<double> g;
  Mat z(3, 2);
  z << 1, 2, 3, 0, 1, 2;
  const Mat& d = g.value(ad::pairwise_sq_diff(g, g.constant(z, TensorShape::flat(3, 2))));
  ASSERT_EQ(d.rows(), 3);
  EXPECT_DOUBLE_EQ(d(0, 0), 4.0);  // pair (0, 1)
  EXPECT_DOUBLE_EQ(d(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 0.0);  // pair (0, 2): identical rows
  EXPECT_DOUBLE_EQ(d(1, 1), 0.0);
  EXPECT_EQ(ad::pair_count(64), 2016u);
  EXPECT_THROW(ad::pairwise_sq_diff(g, g.constant(Mat::Zero(1, 2), TensorShape::flat(1, 2))), ContractViolation);
}

TEST(GradientReversal, ForwardIsIdentity) {
  Graph<double> g;
  Mat x(1, 2);
  x << 1.5, -2.0;
  EXPECT_EQ(g.value(ad::gradient_reversal(g, g.constant(x, TensorShape::flat(1, 2)), 0.7)), x);
}

TEST(GradientReversal, ScalesGradientByMinusLambda) {
  Mat x(1, 2);
  x << 1, 2;
  for (double lambda : {0.0, 1.0}) {
    Graph<double> g;
    Var v = g.variable(x, TensorShape::flat(1, 2));
    g.backward(ad::sum_squares(g, ad::gradient_reversal(g, v, lambda)));
    const Mat grad = g.grad(v);
    EXPECT_DOUBLE_EQ(grad(0, 0), lambda == 0.0 ? 0.0 : -2.0);
    EXPECT_DOUBLE_EQ(grad(0, 1), lambda == 0.0 ? 0.0 : -4.0);
  }
  Graph<double> g;
  EXPECT_THROW(ad::gradient_reversal(g, g.constant(x, TensorShape::flat(1, 2)), -0.1), ContractViolation);
}

TEST(Ramp, ValuesAgainstDirectEvaluation) {
  auto direct = [](double gamma, double p) {
    return static_cast<double>(2.0L / (1.0L + std::exp(-static_cast<long double>(gamma) * p)) - 1.0L);
  };
  EXPECT_EQ(ramp_lambda({0, 1000, 10.0}), 0.0);
  EXPECT_NEAR(ramp_lambda({1000, 1000, 10.0}), direct(10.0, 1.0), 1e-15);
  EXPECT_NEAR(ramp_lambda({500, 1000, 10.0}), direct(10.0, 0.5), 1e-15);
  EXPECT_NEAR(ramp_lambda({1000, 1000, 10.0}), 0.9999092, 1e-6);
  EXPECT_NEAR(ramp_lambda({500, 1000, 10.0}), 0.9866143, 1e-6);
  EXPECT_THROW(ramp_lambda({0, 0, 10.0}), ConfigError);
  EXPECT_THROW(ramp_lambda({11, 10, 10.0}), ContractViolation);
}

TEST(Losses, CrossEntropyExamples) {
  Mat logits = Mat::Zero(1, 4);
  const std::vector<int> y{2};
  EXPECT_NEAR(forgery_adversarial_loss(logits, y), -std::log(0.25), 1e-12);
  Mat two = Mat::Zero(1, 2);
  const std::vector<std::optional<int>> ids{0};
  EXPECT_NEAR(identity_hard_label_loss(two, ids), std::log(2.0), 1e-12);
  Mat confident(1, 2);
  confident << 50, -50;
  EXPECT_NEAR(softmax_cross_entropy(confident, std::vector<int>{0}), 0.0, 1e-12);
  // mean reduction
  Mat pair(2, 2);
  pair << 0, 0, 2, -1;
  const double a = softmax_cross_entropy(pair.topRows(1), std::vector<int>{1});
  const double b = softmax_cross_entropy(pair.bottomRows(1), std::vector<int>{1});
  EXPECT_NEAR(softmax_cross_entropy(pair, std::vector<int>{1, 1}), (a + b) / 2, 1e-12);
  EXPECT_EQ(forgery_adversarial_loss(Mat(0, 4), std::vector<int>{}), 0.0);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{4}), ContractViolation);
}

TEST(Losses, HardLabelNamesTheUnlabeledSample) {
  const std::vector<std::optional<int>> ids{0, std::nullopt};
  const std::vector<std::string> names{"a.ppm", "b.ppm"};
  try {
    identity_hard_label_loss(Mat::Zero(2, 3), ids, names);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("b.ppm"), std::string::npos);
  }
}

TEST(Losses, FocalExamples) {
  EXPECT_NEAR(focal_loss(1, 0.5, 0.25, 2.0), -0.25 * 0.25 * std::log(0.5), 1e-12);
  EXPECT_NEAR(focal_loss(0, 0.5, 0.25, 2.0), -0.75 * 0.25 * std::log(0.5), 1e-12);
  EXPECT_NEAR(focal_loss(1, 0.5, 0.25, 2.0), 0.0433217, 1e-6);
  EXPECT_NEAR(focal_loss(0, 0.5, 0.25, 2.0), 0.1299651, 1e-6);
  EXPECT_LT(focal_loss(1, 1.0 - 1e-9, 0.25, 2.0), 1e-12);
  EXPECT_TRUE(std::isfinite(focal_loss(1, 0.0, 0.25, 2.0)));
  EXPECT_THROW(focal_loss(2, 0.5, 0.25, 2.0), ContractViolation);
}

TEST(Losses, PairLossSumsTerms) {
  const std::vector<double> one{0.5};
  const std::vector<int> pos{1};
  EXPECT_NEAR(identity_similarity_loss(one, pos, 0.25, 2.0), focal_loss(1, 0.5, 0.25, 2.0), 1e-15);
  const std::vector<double> perfect{1.0, 0.0, 1.0};
  const std::vector<int> labels{1, 0, 1};
  EXPECT_LT(identity_similarity_loss(perfect, labels, 0.25, 2.0), 1e-10);
  EXPECT_THROW(identity_similarity_loss(perfect, pos, 0.25, 2.0), ContractViolation);
}

TEST(Losses, TotalLossWeights) {
  const AdversarialConfig cfg;
  EXPECT_NEAR(total_loss(1, 1, 1, cfg), 1 + 0.8 + 5, 1e-12);
  AdversarialConfig zero = cfg;
  zero.lambda1 = zero.lambda2 = 0;
  EXPECT_EQ(total_loss(0.37, 4, 9, zero), 0.37);
  EXPECT_NEAR(total_loss(1, 2, 1, cfg) - total_loss(1, 1, 1, cfg), 0.8, 1e-12);
  AdversarialConfig off = cfg;
  off.forgery_mode = ForgeryMode::kOff;
  off.identity_mode = IdentityMode::kOff;
  EXPECT_EQ(total_loss(0.37, 4, 9, off), 0.37);
}

TEST(Losses, GraphCrossEntropyMatchesScalarAndGradient) {
  std::mt19937_64 rng(6);
  const Mat logits = tu::random_matrix(rng, 5, 3);
  const std::vector<int> y{0, 2, 1, 1, 0};
  Graph<double> g;
  EXPECT_NEAR(g.scalar(ad::cross_entropy(g, g.constant(logits, TensorShape::flat(5, 3)), y)),
              softmax_cross_entropy(logits, y), 1e-12);
  EXPECT_LT(gradient_error([&](auto& gr, Var v) { return ad::cross_entropy(gr, v, y); }, logits, TensorShape::flat(5, 3)),
            1e-7);
}

TEST(Losses, GraphFocalPairLossMatchesScalarAndGradient) {
  std::mt19937_64 rng(7);
  const Mat raw = tu::random_matrix(rng, 6, 1);
  const std::vector<int> y{1, 0, 0, 1, 0, 1};
  for (bool normalize : {false, true}) {
    const Builder f = [&](Graph<double>& g, Var v) {
      return ad::focal_pair_loss(g, ad::sigmoid(g, v), y, 0.25, 2.0, normalize);
    };
    EXPECT_LT(gradient_error(f, raw, TensorShape::flat(6, 1)), 1e-7);
    Graph<double> g;
    const Mat p = (1.0 / (1.0 + (-raw.array()).exp())).matrix();
    std::vector<double> pv(p.data(), p.data() + p.size());
    const double expected = identity_similarity_loss(pv, y, 0.25, 2.0) / (normalize ? 6.0 : 1.0);
    EXPECT_NEAR(g.scalar(f(g, g.constant(raw, TensorShape::flat(6, 1)))), expected, 1e-12);
  }
}

TEST(Losses, WeightedSumGradient) {
  Graph<double> g;
  Var a = g.variable(Mat::Constant(1, 1, 2.0), TensorShape::flat(1, 1));
  Var b = g.variable(Mat::Constant(1, 1, 3.0), TensorShape::flat(1, 1));
  const std::vector<Var> terms{a, b};
  const std::vector<double> w{0.5, 4.0};
  Var s = ad::weighted_sum(g, std::span<const Var>(terms), std::span<const double>(w));
  EXPECT_DOUBLE_EQ(g.scalar(s), 13.0);
  g.backward(s);
  EXPECT_DOUBLE_EQ(g.grad(a)(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.grad(b)(0, 0), 4.0);
}
