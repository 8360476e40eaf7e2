#include <cmath>

#include <gtest/gtest.h>

#include "wdisc/checkpoint.hpp"
#include "wdisc/numerics.hpp"

namespace wdisc {
namespace {

// ---------------------------------------------------------------------------
// softmax with temperature

TEST(SoftmaxTemperature, UniformForEqualLogits) {
  const std::vector<double> x{0, 0, 0};
  for (double p : softmax_temperature(x, 1.0)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTemperature, ExactExponentials) {
  const std::vector<double> x{std::log(2.0), 0.0};
  const auto p = softmax_temperature(x, 1.0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTemperature, TemperatureDividesLogits) {
  // exp(ln 16 / 2) = 4 against exp(0) = 1.
  const std::vector<double> x{std::log(16.0), 0.0};
  const auto p = softmax_temperature(x, 2.0);
  EXPECT_NEAR(p[0], 0.8, 1e-15);
  EXPECT_NEAR(p[1], 0.2, 1e-15);
}

TEST(SoftmaxTemperature, SumsToOneAndStaysInRange) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + rng.below(30));
    for (auto& v : x) v = rng.uniform(-500, 500);
    const double T = rng.uniform(0.01, 20);
    double s = 0;
    for (double p : softmax_temperature(x, T)) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SoftmaxTemperature, RejectsBadInput) {
  const std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(softmax_temperature(x, 0.0), ValidationError);
  EXPECT_THROW(softmax_temperature(x, -1.0), ValidationError);
  const std::vector<double> bad{1.0, std::nan("")};
  EXPECT_THROW(softmax_temperature(bad, 1.0), ValidationError);
  const std::vector<double> inf{1.0, INFINITY};
  EXPECT_THROW(softmax_temperature(inf, 1.0), ValidationError);
}

// ---------------------------------------------------------------------------
// LSTM cell

struct Cell {
  ParameterSet set;
  LstmParams p;
  Cell(std::size_t in, std::size_t n) : p(LstmParams::create(set, "cell", in, n)) {}
};

std::pair<Tensor, Tensor> run_cell(Cell& cell, const Tensor& x, const Tensor& h, const Tensor& c) {
  Graph g(false);
  auto [h2, c2] = lstm_cell(g.input(x), g.input(h), g.input(c), cell.p);
  return {g.value(h2), g.value(c2)};
}

TEST(LstmCell, ZeroWeightsGiveZeroState) {
  Cell cell(2, 3);
  auto [h, c] = run_cell(cell, Tensor(2, 1, 0.7), Tensor(3, 1, -0.2), Tensor(3, 1, 0.0));
  for (double v : h.values()) EXPECT_EQ(v, 0.0);
  for (double v : c.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, LargeForgetBiasKeepsCell) {
  Cell cell(2, 3);
  for (std::size_t k = 3; k < 6; ++k) cell.p.b->value[k] = 10.0;
  Tensor c0 = Tensor::column({0.5, -1.5, 2.0});
  auto [h, c] = run_cell(cell, Tensor(2, 1, 0.3), Tensor(3, 1, 0.1), c0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(c[k], c0[k], 1e-4);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(LstmCell, MatchesScalarGateFormulas) {
  const std::size_t in = 4, n = 3;
  Cell cell(in, n);
  Rng rng(11);
  for (auto* p : {cell.p.wx, cell.p.wh, cell.p.b})
    for (auto& v : p->value.values()) v = rng.uniform(-1, 1);
  Tensor x(in, 1), h(n, 1), c(n, 1);
  for (auto* t : {&x, &h, &c})
    for (auto& v : t->values()) v = rng.uniform(-1, 1);
  auto [h2, c2] = run_cell(cell, x, h, c);

  const Tensor& Wx = cell.p.wx->value;
  const Tensor& Wh = cell.p.wh->value;
  const Tensor& b = cell.p.b->value;
  auto pre = [&](std::size_t row) {
    double s = b[row];
    for (std::size_t j = 0; j < in; ++j) s += Wx(row, j) * x[j];
    for (std::size_t j = 0; j < n; ++j) s += Wh(row, j) * h[j];
    return s;
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double i = logistic(pre(k));
    const double f = logistic(pre(n + k));
    const double o = logistic(pre(2 * n + k));
    const double g = std::tanh(pre(3 * n + k));
    const double cc = f * c[k] + i * g;
    EXPECT_NEAR(c2[k], cc, 1e-12);
    EXPECT_NEAR(h2[k], o * std::tanh(cc), 1e-12);
  }
}

TEST(LstmCell, ShapeMismatch) {
  Cell cell(2, 3);
  EXPECT_THROW(run_cell(cell, Tensor(3, 1), Tensor(3, 1), Tensor(3, 1)), ShapeError);
  EXPECT_THROW(run_cell(cell, Tensor(2, 1), Tensor(2, 1), Tensor(3, 1)), ShapeError);
}

TEST(LstmCell, GradientsMatchFiniteDifferences) {
  Cell cell(3, 4);
  Rng rng(3);
  for (std::size_t i = 0; i < cell.set.size(); ++i)
    for (auto& v : cell.set[i].value.values()) v = rng.uniform(-1, 1);
  Tensor x(3, 2), h(4, 2), c(4, 2);
  for (auto* t : {&x, &h, &c})
    for (auto& v : t->values()) v = rng.uniform(-1, 1);
  auto report = gradient_check(cell.set, [&](Graph& g) {
    auto [h2, c2] = lstm_cell(g.input(x), g.input(h), g.input(c), cell.p);
    auto [h3, c3] = lstm_cell(g.input(x), h2, c2, cell.p);
    return ops::sum(ops::add(ops::mul(h3, h3), c3));
  });
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

// ---------------------------------------------------------------------------
// cross-entropy

TEST(CrossEntropy, CertainPredictionsHaveZeroLoss) {
  std::vector<std::vector<double>> p{{0, 1, 0}, {1, 0, 0}};
  const std::vector<std::uint32_t> ref{1, 0};
  EXPECT_EQ(cross_entropy(p, ref), 0.0);
}

TEST(CrossEntropy, UniformOverFourForTwoSteps) {
  std::vector<std::vector<double>> p(2, std::vector<double>(4, 0.25));
  const std::vector<std::uint32_t> ref{3, 1};
  EXPECT_NEAR(cross_entropy(p, ref), 2.0 * std::log(4.0), 1e-14);
}

TEST(CrossEntropy, BatchLossIsMeanOfSentences) {
  const std::vector<double> l{1.25, 3.5};
  EXPECT_DOUBLE_EQ(batch_loss(l), (1.25 + 3.5) / 2.0);
}

TEST(CrossEntropy, ZeroProbabilityIsFloored) {
  std::vector<std::vector<double>> p{{1.0, 0.0}};
  const std::vector<std::uint32_t> ref{1};
  EXPECT_NEAR(cross_entropy(p, ref), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, GraphOpMatchesDirectEvaluation) {
  Graph g(false);
  Tensor logits(3, 2, {0.1, -1.0, 2.0, 0.5, -0.3, 0.0});
  Var l = ops::softmax_cross_entropy(g.input(logits), {2, 0}, {1.0, 1.0});
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> col{logits(0, b), logits(1, b), logits(2, b)};
    const auto p = softmax_temperature(col);
    const std::uint32_t ref = b == 0 ? 2 : 0;
    EXPECT_NEAR(g.value(l)(0, b), -std::log(p[ref]), 1e-14);
  }
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet ps;
  auto& w = ps.add("w", 2, 2);
  w.value = Tensor(2, 2, {1, -2, 3, 0.5});
  const Tensor before = w.value;
  AdamState st(ps, {});
  for (int i = 0; i < 5; ++i) {
    ps.zero_grad();
    EXPECT_EQ(adam_step(ps, st), AdamStatus::applied);
  }
  EXPECT_EQ(w.value, before);
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepClosedForm) {
  ParameterSet ps;
  auto& w = ps.add("w", 1, 1);
  w.value[0] = 1.0;
  w.grad[0] = 0.5;
  AdamState st(ps, {});
  adam_step(ps, st);
  // m_hat = 0.5, v_hat = 0.25 after bias correction.
  EXPECT_NEAR(w.value[0], 1.0 - 0.001 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w.value[0], 0.999, 1e-10);
}

TEST(Adam, MatchesScalarOracleOverThreeSteps) {
  ParameterSet ps;
  auto& w = ps.add("w", 1, 1);
  w.value[0] = 0.3;
  AdamState st(ps, {});
  double x = 0.3, m = 0, v = 0;
  const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8, grad = -1.7;
  for (int t = 1; t <= 3; ++t) {
    w.grad[0] = grad;
    adam_step(ps, st);
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(w.value[0], x, 1e-12);
  }
}

TEST(Adam, NonFiniteGradientSkipsStep) {
  ParameterSet ps;
  auto& w = ps.add("w", 1, 2);
  w.value = Tensor(1, 2, {1.0, 2.0});
  w.grad = Tensor(1, 2, {0.1, std::nan("")});
  AdamState st(ps, {});
  EXPECT_EQ(adam_step(ps, st), AdamStatus::skipped_non_finite);
  EXPECT_EQ(st.step, 0u);
  EXPECT_EQ(w.value, Tensor(1, 2, {1.0, 2.0}));
}

TEST(Adam, MissingGradientIsAnError) {
  ParameterSet ps;
  auto& w = ps.add("w", 1, 2);
  AdamState st(ps, {});
  w.grad = Tensor();
  EXPECT_THROW(adam_step(ps, st), ValidationError);
}

TEST(Adam, ClipNormScalesGradient) {
  ParameterSet ps;
  auto& w = ps.add("w", 1, 1);
  w.grad[0] = 100.0;
  AdamConfig cfg;
  cfg.clip_norm = 1.0;
  AdamState st(ps, cfg);
  adam_step(ps, st);
  // Adam is scale invariant on the first step; the moments carry the clip.
  EXPECT_NEAR(st.first_moment[0][0], 0.1, 1e-12);
}

// ---------------------------------------------------------------------------
// gradient check

TEST(GradientCheck, QuadraticIsExactUnderCentralDifferences) {
  ParameterSet ps;
  auto& x = ps.add("x", 1, 1);
  x.value[0] = 3.0;
  auto report = gradient_check(ps, [&](Graph& g) { return ops::mul(g.param(x), g.param(x)); });
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_EQ(report.entries[0].analytic, 6.0);
  EXPECT_NEAR(report.entries[0].numeric, 6.0, 1e-9);
  EXPECT_TRUE(report.passed);
}

TEST(GradientCheck, CorruptedCoordinateIsReported) {
  ParameterSet ps;
  auto& w = ps.add("w", 2, 3);
  Rng rng(8);
  for (auto& v : w.value.values()) v = rng.uniform(-1, 1);
  LossBuilder f = [&](Graph& g) { return ops::sum(ops::tanh(ops::mul(g.param(w), g.param(w)))); };
  ps.zero_grad();
  {
    Graph g;
    g.backward(f(g));
  }
  w.grad[4] += 0.01;
  auto report = compare_with_finite_differences(ps, f);
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.entries[report.worst].index, 4u);
  for (const auto& e : report.entries)
    if (e.index != 4) {
      EXPECT_LT(e.relative_error, 1e-4);
    }
}

TEST(GradientCheck, SmallGradientsAboveResolutionAreStillChecked) {
  // Loss 1e-3 * x^2 at x = 0.5 has gradient 1e-3 and value 2.5e-4, so the
  // resolution floor sits far below the gradient and a 0.1% error shows.
  ParameterSet ps;
  auto& x = ps.add("x", 1, 1);
  x.value[0] = 0.5;
  Tensor k(1, 1, 1e-3);
  LossBuilder f = [&](Graph& g) { return ops::mul(g.input(k), ops::mul(g.param(x), g.param(x))); };
  ps.zero_grad();
  {
    Graph g;
    g.backward(f(g));
  }
  EXPECT_TRUE(compare_with_finite_differences(ps, f).passed);
  x.grad[0] *= 1.001;
  EXPECT_FALSE(compare_with_finite_differences(ps, f).passed);
}

// ---------------------------------------------------------------------------
// checkpoint

TEST(Checkpoint, RoundTripsExactly) {
  ParameterSet ps;
  Rng rng(1);
  for (auto [name, r, c] : {std::tuple{"a.W", 3, 5}, {"b", 4, 1}}) {
    auto& p = ps.add(name, r, c);
    for (auto& v : p.value.values()) v = rng.uniform(-1e3, 1e3) * std::pow(10.0, rng.uniform(-20, 20));
  }
  const auto path = std::filesystem::temp_directory_path() / "wdisc_ck_test.txt";
  save_checkpoint(path, {{"k", "v w"}}, ps);
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.config.at("k"), "v w");
  ASSERT_EQ(ck.params.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(ck.params[i].name, ps[i].name);
    EXPECT_EQ(ck.params[i].value, ps[i].value);
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace wdisc
