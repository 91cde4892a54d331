#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmf/gradcheck.hpp"
#include "cmf/rng.hpp"
#include "cmf/tensor.hpp"

using namespace cmf;

namespace {

Tensor leaf(const Shape& shape, std::vector<double> data) {
  Tensor t = Tensor::from_data(shape, std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor random_leaf(const Shape& shape, Rng& rng) {
  std::vector<double> v(detail::shape_size(shape));
  for (double& x : v) x = rng.gaussian();
  return leaf(shape, std::move(v));
}

}  // namespace

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, UniformRangeAndGaussianMoments) {
  Rng rng(7);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    double g = rng.gaussian();
    sum += g;
    sum_sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.05);
}

TEST(Rng, MixProducesIndependentStreams) {
  EXPECT_NE(Rng::mix(1, 0), Rng::mix(1, 1));
  EXPECT_NE(Rng::mix(1, 0), Rng::mix(2, 0));
  EXPECT_EQ(Rng::mix(5, 3), Rng::mix(5, 3));
}

TEST(Rng, ShuffleIsPermutationAndDeterministic) {
  std::vector<std::size_t> items(50);
  std::iota(items.begin(), items.end(), 0);
  auto a = items;
  auto b = items;
  Rng r1(9), r2(9);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, items);  // astronomically unlikely to be identity
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, items);
}

// ---------------------------------------------------------------------------
// Construction and accessors
// ---------------------------------------------------------------------------

TEST(Tensor, ConstructionAndShapeChecks) {
  Tensor z = Tensor::zeros({2, 3});
  EXPECT_EQ(z.size(), 6u);
  EXPECT_EQ(z.shape(), (Shape{2, 3}));
  EXPECT_THROW(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor::zeros({0, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({}), ShapeError);
}

TEST(Tensor, RowMajorAddressing) {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.at(0, 2), 3.0);
  EXPECT_EQ(t.at(1, 0), 4.0);
}

TEST(Tensor, ItemRequiresScalar) {
  EXPECT_EQ(Tensor::scalar(4.5).item(), 4.5);
  EXPECT_THROW(Tensor::zeros({2}).item(), ContractError);
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST(Matmul, IdentityCase) {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {7, 8, 9, 10});
  Tensor c = matmul(eye, m);
  EXPECT_EQ(c.data(), m.data());
}

TEST(Matmul, HandOracle) {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c.at(0, 0), 17.0);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 39.0);
}

TEST(Matmul, ZeroAnnihilator) {
  Tensor z = Tensor::zeros({3, 4});
  Tensor b = Tensor::from_data({4, 2}, std::vector<double>(8, 3.25));
  Tensor c = matmul(z, b);  // named: data() of a temporary dangles
  for (double v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, BackwardRule) {
  // dA = dC B^T, dB = A^T dC with dC = 1 under sum().
  Tensor a = leaf({2, 2}, {1, 2, 3, 4});
  Tensor b = leaf({2, 1}, {5, 6});
  sum(matmul(a, b)).backward();
  EXPECT_EQ(a.grad(), (std::vector<double>{5, 6, 5, 6}));
  EXPECT_EQ(b.grad(), (std::vector<double>{4, 6}));
}

TEST(Matmul, ShapeAlgebraProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5);
    Tensor c = matmul(Tensor::zeros({m, k}), Tensor::zeros({k, n}));
    EXPECT_EQ(c.shape(), (Shape{m, n}));
  }
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

TEST(Softmax, UniformOnZeros) {
  Tensor s = softmax(Tensor::zeros({3}), 0);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, DirectExponentiationOracle) {
  Tensor s = softmax(Tensor::from_data({3}, {1, 2, 3}), 0);
  EXPECT_NEAR(s.data()[0], 0.09003057317038046, 1e-12);
  EXPECT_NEAR(s.data()[1], 0.24472847105479767, 1e-12);
  EXPECT_NEAR(s.data()[2], 0.6652409557748219, 1e-12);
}

TEST(Softmax, SlicesSumToOneBothAxes) {
  Rng rng(3);
  std::vector<double> v(12);
  for (double& x : v) x = 10.0 * rng.gaussian();
  Tensor t = Tensor::from_data({3, 4}, v);
  Tensor rows = softmax(t, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += rows.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  Tensor cols = softmax(t, 0);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += cols.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(4);
  std::vector<double> v(5);
  for (double& x : v) x = rng.gaussian();
  Tensor base = softmax(Tensor::from_data({5}, v), 0);
  for (double& x : v) x += 123.456;
  Tensor shifted = softmax(Tensor::from_data({5}, v), 0);
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(base.data()[i], shifted.data()[i], 1e-12);
}

TEST(Softmax, StableUnderLargeInputs) {
  Tensor s = softmax(Tensor::from_data({2}, {1000.0, 1000.0}), 0);
  EXPECT_TRUE(all_finite(s));
  EXPECT_NEAR(s.data()[0], 0.5, 1e-15);
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor x = random_leaf({2, 3}, rng);
  Tensor w = random_leaf({2, 3}, rng);  // weights select a nontrivial combination
  auto f = [&]() { return sum(mul(softmax(x, 1), w)); };
  auto res = finite_difference_check(f, {{"x", x}}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

// ---------------------------------------------------------------------------
// pointwise ops
// ---------------------------------------------------------------------------

TEST(Pointwise, ReluSignGating) {
  Tensor y = relu(Tensor::from_data({3}, {-1, 0, 2}));
  EXPECT_EQ(y.data(), (std::vector<double>{0, 0, 2}));
}

TEST(Pointwise, SigmoidTanhAtZero) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(cmf::tanh(Tensor::scalar(0.0)).item(), 0.0);
}

TEST(Pointwise, ConcatShapes) {
  Tensor c = concat(Tensor::zeros({2, 3}), Tensor::zeros({2, 5}), 1);
  EXPECT_EQ(c.shape(), (Shape{2, 8}));
  Tensor r = concat(Tensor::zeros({2, 3}), Tensor::zeros({4, 3}), 0);
  EXPECT_EQ(r.shape(), (Shape{6, 3}));
  EXPECT_THROW(concat(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}), 1), ShapeError);
}

TEST(Pointwise, ConcatValuesAndBackward) {
  Tensor a = leaf({1, 2}, {1, 2});
  Tensor b = leaf({1, 3}, {3, 4, 5});
  Tensor c = concat(a, b, 1);
  EXPECT_EQ(c.data(), (std::vector<double>{1, 2, 3, 4, 5}));
  Tensor w = Tensor::from_data({1, 5}, {10, 20, 30, 40, 50});
  sum(mul(c, w)).backward();
  EXPECT_EQ(a.grad(), (std::vector<double>{10, 20}));
  EXPECT_EQ(b.grad(), (std::vector<double>{30, 40, 50}));
}

TEST(Pointwise, AddBiasBroadcast) {
  Tensor x = leaf({2, 3}, {0, 0, 0, 1, 1, 1});
  Tensor b = leaf({3}, {10, 20, 30});
  Tensor y = add(x, b);
  EXPECT_EQ(y.data(), (std::vector<double>{10, 20, 30, 11, 21, 31}));
  sum(y).backward();
  EXPECT_EQ(b.grad(), (std::vector<double>{2, 2, 2}));
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(Pointwise, SliceRowsColsRoundTrip) {
  Tensor x = leaf({3, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  Tensor mid = slice_rows(x, 1, 2);
  EXPECT_EQ(mid.data(), (std::vector<double>{4, 5, 6, 7}));
  Tensor right = slice_cols(x, 2, 4);
  EXPECT_EQ(right.shape(), (Shape{3, 2}));
  EXPECT_EQ(right.at(2, 1), 11.0);
  sum(right).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1}));
  EXPECT_THROW(slice_rows(x, 2, 2), ShapeError);
  EXPECT_THROW(slice_cols(x, 0, 5), ShapeError);
}

TEST(Pointwise, TransposeForwardBackward) {
  Tensor x = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(x);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t.at(2, 0), 3.0);
  Tensor w = Tensor::from_data({3, 2}, {1, 0, 0, 0, 0, 0});
  sum(mul(t, w)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0, 0, 0}));
}

TEST(Pointwise, MeanBackward) {
  Tensor x = leaf({4}, {1, 2, 3, 4});
  mean(x).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(Pointwise, DeterministicBitwise) {
  auto run = []() {
    Rng rng(17);
    std::vector<double> v(20);
    for (double& x : v) x = rng.gaussian();
    Tensor t = Tensor::from_data({4, 5}, v);
    return mul(softmax(matmul(t, transpose(t)), 1),
               cmf::tanh(matmul(t, transpose(t))))
        .data();
  };
  EXPECT_EQ(run(), run());
}

TEST(Pointwise, ForwardOutputsFinite) {
  Rng rng(23);
  Tensor a = random_leaf({3, 3}, rng);
  Tensor b = random_leaf({3, 3}, rng);
  Tensor out = add(sigmoid(matmul(a, b)), relu(sub(a, b)));
  EXPECT_TRUE(all_finite(out));
}

// ---------------------------------------------------------------------------
// backward semantics
// ---------------------------------------------------------------------------

TEST(Backward, IdentityGradient) {
  Tensor x = leaf({1}, {3.0});
  x.backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{1.0}));
}

TEST(Backward, SumOfSquaresOracle) {
  Tensor x = leaf({3}, {1, 2, 3});
  // y = sum(x ⊙ x); same tensor twice exercises duplicate-parent handling.
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, MatmulAgainstFiniteDifferences) {
  Rng rng(29);
  Tensor a = random_leaf({3, 4}, rng);
  Tensor b = random_leaf({4, 2}, rng);
  auto f = [&]() { return sum(matmul(a, b)); };
  auto res = finite_difference_check(f, {{"a", a}, {"b", b}}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = leaf({2}, {1, 2});
  EXPECT_THROW(x.backward(), ContractError);
  EXPECT_THROW(mul(x, x).backward(), ContractError);
}

TEST(Backward, LeafGradsAccumulateUntilZeroGrad) {
  Tensor x = leaf({2}, {1, 2});
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{2, 4}));
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{4, 8}));
  x.zero_grad();
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{2, 4}));
}

TEST(Backward, InteriorGradsAreFreshPerSweep) {
  Tensor x = leaf({2}, {1, 2});
  Tensor h = mul(x, x);  // interior
  Tensor l = sum(h);
  l.backward();
  l.backward();
  // Interior node grads restart each sweep; only leaves accumulate.
  EXPECT_EQ(h.node()->grad, (std::vector<double>{1, 1}));
  EXPECT_EQ(x.grad(), (std::vector<double>{4, 8}));
}

TEST(Backward, GraphReusedTensorAsTwoParents) {
  Tensor x = leaf({1}, {3.0});
  Tensor y = mul(x, x);  // dy/dx = 2x = 6
  y.backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{6.0}));
}

TEST(Backward, NoGradGuardDisablesTracking) {
  Tensor x = leaf({2}, {1, 2});
  NoGradGuard guard;
  Tensor y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

// ---------------------------------------------------------------------------
// finite_difference_check
// ---------------------------------------------------------------------------

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(31);
  Tensor w = random_leaf({3, 3}, rng);
  Tensor x = Tensor::from_data({1, 3}, {0.5, -1.0, 2.0});
  auto f = [&]() { return sum(matmul(x, w)); };
  auto res = finite_difference_check(f, {{"w", w}}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-9);
}

TEST(GradCheck, QuadraticWithinRounding) {
  Rng rng(37);
  Tensor theta = random_leaf({4}, rng);
  auto f = [&]() { return sum(mul(theta, theta)); };
  auto res = finite_difference_check(f, {{"theta", theta}}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(GradCheck, EpsRangeEnforced) {
  Tensor theta = leaf({1}, {1.0});
  auto f = [&]() { return sum(theta); };
  EXPECT_THROW(finite_difference_check(f, {{"t", theta}}, 0.0), ConfigError);
  EXPECT_THROW(finite_difference_check(f, {{"t", theta}}, 1e-2), ConfigError);
}

TEST(GradCheck, NonFiniteLossNamesParameter) {
  Tensor theta = leaf({2}, {1.0, 1.0});
  auto f = [&]() {
    // 1/(θ₀−1+eps-ish) blows up when the checker perturbs θ₀ near 1.
    Tensor shifted = sub(theta, Tensor::from_data({2}, {1.0 + 1e-5, 0.0}));
    std::vector<double> inv(2);
    for (std::size_t i = 0; i < 2; ++i) inv[i] = 1.0 / shifted.data()[i];
    return Tensor::from_data({1}, {inv[0]});
  };
  try {
    finite_difference_check(f, {{"theta", theta}}, 1e-5);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
  }
}

TEST(GradCheck, ReportsWorstParameterOfCorruptedGradient) {
  // A deliberately wrong backward rule must be caught.
  Tensor x = leaf({2}, {0.3, -0.7});
  auto bad_square = [](const Tensor& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = t.data()[i] * t.data()[i];
    return detail::make_op(t.shape(), std::move(out), {t},
                           [](detail::Node& node) {
                             auto& p = node.parents[0];
                             if (!p->requires_grad) return;
                             p->ensure_grad();
                             for (std::size_t i = 0; i < node.grad.size(); ++i)
                               p->grad[i] += node.grad[i] * 3.0;  // wrong on purpose
                           });
  };
  auto f = [&]() { return sum(bad_square(x)); };
  auto res = finite_difference_check(f, {{"x", x}}, 1e-5);
  EXPECT_GT(res.max_rel_error, 1e-2);
  EXPECT_EQ(res.worst_param, "x");
}
