#include <cmath>
#include <limits>
#include <numeric>

#include "test_support.hpp"

namespace {

using namespace keci;
using keci::ad::Tensor;
using keci::testing::check_inputs;
using keci::testing::random_tensor;

constexpr double kTight = 1e-6;

std::vector<double> vals(const Tensor<double>& t) { return t.vec(); }

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto eye = Tensor<double>::matrix(2, 2, {1, 0, 0, 1});
  auto m = Tensor<double>::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(vals(ad::matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, RowTimesColumn) {
  auto a = Tensor<double>::matrix(1, 2, {1, 2});
  auto b = Tensor<double>::matrix(2, 1, {3, 4});
  auto c = ad::matmul(a, b);
  EXPECT_EQ(c.shape(), (ad::Shape{1, 1}));
  EXPECT_DOUBLE_EQ(c[0], 11.0);
}

TEST(Matmul, InnerMismatchNamesBothShapes) {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({2, 3});
  try {
    ad::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto r = check_inputs({a, b}, [&] { return ad::sum(ad::matmul(a, b)); });
  EXPECT_LT(r.max_relative_error, kTight);
}

TEST(Elementwise, ReluValues) {
  auto x = Tensor<double>::vector({-1, 0, 2});
  EXPECT_EQ(vals(ad::relu(x)), (std::vector<double>{0, 0, 2}));
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  auto x = Tensor<double>::vector({-1, 0, 2}, true);
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  ad::backward(ad::sum(ad::relu(x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 0, 1}));
}

TEST(Elementwise, SigmoidOfZero) {
  EXPECT_DOUBLE_EQ(ad::sigmoid(Tensor<double>::scalar(0.0)).item(), 0.5);
}

TEST(Elementwise, ConcatVectors) {
  auto c = ad::concat<double>({Tensor<double>::vector({1, 2}), Tensor<double>::vector({3})}, 0);
  EXPECT_EQ(vals(c), (std::vector<double>{1, 2, 3}));
}

TEST(Elementwise, ConcatColumnsInterleavesRows) {
  auto a = Tensor<double>::matrix(2, 1, {1, 2});
  auto b = Tensor<double>::matrix(2, 2, {3, 4, 5, 6});
  auto c = ad::concat<double>({a, b}, 1);
  EXPECT_EQ(c.shape(), (ad::Shape{2, 3}));
  EXPECT_EQ(vals(c), (std::vector<double>{1, 3, 4, 2, 5, 6}));
}

TEST(Elementwise, IncompatibleShapesThrow) {
  auto a = Tensor<double>::zeros({2, 2});
  auto b = Tensor<double>::zeros({3});
  EXPECT_THROW(ad::add(a, b), DimensionError);
  EXPECT_THROW(ad::mul(a, b), DimensionError);
  EXPECT_THROW(ad::concat<double>({a, Tensor<double>::zeros({3, 3})}, 0), DimensionError);
}

TEST(Elementwise, ScalarBroadcast) {
  auto a = Tensor<double>::vector({1, 2, 3});
  EXPECT_EQ(vals(ad::add(a, Tensor<double>::scalar(1))), (std::vector<double>{2, 3, 4}));
  EXPECT_EQ(vals(ad::mul(Tensor<double>::scalar(2), a)), (std::vector<double>{2, 4, 6}));
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  auto a = random_tensor({3, 2}, rng);
  auto b = random_tensor({3, 2}, rng);
  auto s = random_tensor({1}, rng);
  auto bias = random_tensor({2}, rng);
  // Keep relu inputs away from the kink.
  auto r_in = random_tensor({4}, rng, 0.1, 1.0);
  auto r_neg = random_tensor({4}, rng, -1.0, -0.1);
  auto w = random_tensor({3, 3}, rng);

  EXPECT_LT(check_inputs({a, b}, [&] { return ad::sum(ad::mul(ad::add(a, b), a)); }).max_relative_error, kTight);
  EXPECT_LT(check_inputs({a, s}, [&] { return ad::sum(ad::mul(ad::add(a, s), s)); }).max_relative_error, kTight);
  EXPECT_LT(check_inputs({a, bias}, [&] { return ad::sum(ad::mul(ad::add_bias(a, bias), a)); }).max_relative_error,
            kTight);
  EXPECT_LT(check_inputs({a, b, w},
                         [&] {
                           auto c = ad::concat<double>({a, b}, 1);
                           return ad::sum(ad::mul(c, ad::concat<double>({ad::scale(b, 2.0), a}, 1)));
                         })
                .max_relative_error,
            kTight);
  EXPECT_LT(check_inputs({r_in, r_neg},
                         [&] { return ad::sum(ad::mul(ad::relu(ad::concat<double>({r_in, r_neg}, 0)),
                                                      ad::concat<double>({r_in, r_neg}, 0))); })
                .max_relative_error,
            kTight);
  EXPECT_LT(check_inputs({a}, [&] { return ad::sum(ad::mul(ad::sigmoid(a), a)); }).max_relative_error, kTight);
  EXPECT_LT(check_inputs({a}, [&] { return ad::sum(ad::mul(ad::transpose(a), ad::transpose(a))); })
                .max_relative_error,
            kTight);
  EXPECT_LT(check_inputs({a}, [&] { return ad::mean(ad::mul(ad::reshape(a, {6}), ad::reshape(a, {6}))); })
                .max_relative_error,
            kTight);
}

TEST(Softmax, SymmetricInput) {
  auto p = ad::softmax(Tensor<double>::vector({0, 0}), 0);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  auto p = ad::softmax(Tensor<double>::vector({1000, 0}), 0);
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  EXPECT_NEAR(p[1], 0.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAndArePositive) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 5}, rng, -30.0, 30.0, false);
    auto p = ad::softmax(x, 1);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_GT(p.at(i, j), 0.0);
        total += p.at(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
    auto q = ad::softmax(x, 0);
    for (std::size_t j = 0; j < 5; ++j) {
      double total = 0;
      for (std::size_t i = 0; i < 4; ++i) total += q.at(i, j);
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, JacobianMatchesFiniteDifferences) {
  Rng rng(4);
  auto x = random_tensor({3, 4}, rng, -2.0, 2.0);
  auto v = random_tensor({3, 4}, rng, -1.0, 1.0, false);
  for (std::size_t axis : {0u, 1u}) {
    auto r = check_inputs({x}, [&] { return ad::sum(ad::mul(ad::softmax(x, axis), v)); });
    EXPECT_LT(r.max_relative_error, kTight) << "axis " << axis;
  }
}

TEST(CrossEntropy, CertainPredictionIsZero) {
  EXPECT_DOUBLE_EQ(ad::cross_entropy(Tensor<double>::vector({1, 0}), std::size_t{0}).item(), 0.0);
}

TEST(CrossEntropy, UniformIsLn2) {
  EXPECT_NEAR(ad::cross_entropy(Tensor<double>::vector({0.5, 0.5}), std::size_t{1}).item(), std::log(2.0), 1e-12);
}

TEST(CrossEntropy, ZeroProbabilityIsClamped) {
  const double loss = ad::cross_entropy(Tensor<double>::vector({1, 0}), std::size_t{1}).item();
  EXPECT_NEAR(loss, -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, TargetOutOfRange) {
  EXPECT_THROW(ad::cross_entropy(Tensor<double>::vector({0.5, 0.5}), std::size_t{2}), IndexError);
}

TEST(CrossEntropy, GradientThroughSoftmaxIsSoftmaxMinusOneHot) {
  Rng rng(5);
  auto logits = random_tensor({4}, rng, -2.0, 2.0);
  const std::size_t target = 2;
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    ad::backward(ad::cross_entropy(ad::softmax(logits, 0), target));
  }
  auto p = ad::softmax(logits, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(logits.grad()[i], p[i] - (i == target ? 1.0 : 0.0), 1e-12);
  }
  logits.zero_grad();
  auto r = check_inputs({logits}, [&] { return ad::cross_entropy(ad::softmax(logits, 0), target); });
  EXPECT_LT(r.max_relative_error, kTight);
}

TEST(CrossEntropy, BatchAveragesRows) {
  auto p = Tensor<double>::matrix(2, 2, {0.5, 0.5, 0.25, 0.75});
  const double expected = (std::log(2.0) - std::log(0.25)) / 2.0;
  EXPECT_NEAR(ad::cross_entropy(p, std::vector<std::size_t>{0, 0}).item(), expected, 1e-12);
}

TEST(BinaryCrossEntropy, Examples) {
  EXPECT_DOUBLE_EQ(ad::binary_cross_entropy(Tensor<double>::vector({1}), Tensor<double>::vector({1})).item(), 0.0);
  EXPECT_NEAR(ad::binary_cross_entropy(Tensor<double>::vector({0.5}), Tensor<double>::vector({0})).item(),
              std::log(2.0), 1e-12);
}

TEST(BinaryCrossEntropy, NonBinaryTargetRejected) {
  EXPECT_THROW(ad::binary_cross_entropy(Tensor<double>::vector({0.5}), Tensor<double>::vector({0.3})),
               ValidationError);
}

TEST(BinaryCrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto logits = random_tensor({5}, rng, -2.0, 2.0);
  auto target = Tensor<double>::vector({1, 0, 0, 1, 1});
  auto r = check_inputs({logits}, [&] { return ad::binary_cross_entropy(ad::sigmoid(logits), target); });
  EXPECT_LT(r.max_relative_error, kTight);
}

TEST(Indexing, GatherScatterAndColumn) {
  Rng rng(7);
  auto x = random_tensor({4, 3}, rng);
  auto g = ad::gather_rows(x, {2, 0, 2});
  EXPECT_EQ(g.shape(), (ad::Shape{3, 3}));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(g.at(0, j), x.at(2, j));
    EXPECT_EQ(g.at(1, j), x.at(0, j));
  }
  auto v = Tensor<double>::vector({5, 7});
  auto s = ad::scatter(v, {3, 0}, {2, 2});
  EXPECT_EQ(vals(s), (std::vector<double>{7, 0, 0, 5}));
  auto c = ad::column(x, 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c[i], x.at(i, 1));

  auto w = random_tensor({3, 3}, rng, -1.0, 1.0, false);
  EXPECT_LT(check_inputs({x}, [&] { return ad::sum(ad::mul(ad::gather_rows(x, {2, 0, 2}), w)); }).max_relative_error,
            kTight);
  EXPECT_LT(check_inputs({x},
                         [&] {
                           auto col = ad::column(x, 1);
                           return ad::sum(ad::mul(ad::scatter(col, {0, 5, 2, 7}, {3, 3}), w));
                         })
                .max_relative_error,
            kTight);
}

TEST(Indexing, SpanAttentionPool) {
  Rng rng(8);
  auto x = random_tensor({5, 3}, rng);
  auto scores = random_tensor({5}, rng);
  const std::vector<std::pair<std::size_t, std::size_t>> spans{{0, 1}, {1, 4}, {2, 5}};
  auto pooled = ad::span_attention_pool(x, scores, spans);
  EXPECT_EQ(pooled.shape(), (ad::Shape{3, 3}));
  // A length-one span returns its row exactly.
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(pooled.at(0, j), x.at(0, j));
  // Oracle: explicit softmax over the span's scores.
  double z = 0;
  for (std::size_t t = 1; t < 4; ++t) z += std::exp(scores[t]);
  for (std::size_t j = 0; j < 3; ++j) {
    double expect = 0;
    for (std::size_t t = 1; t < 4; ++t) expect += std::exp(scores[t]) / z * x.at(t, j);
    EXPECT_NEAR(pooled.at(1, j), expect, 1e-12);
  }
  auto w = random_tensor({3, 3}, rng, -1.0, 1.0, false);
  EXPECT_LT(check_inputs({x, scores}, [&] { return ad::sum(ad::mul(ad::span_attention_pool(x, scores, spans), w)); })
                .max_relative_error,
            kTight);
}

TEST(Indexing, GroupedSoftmax) {
  Rng rng(9);
  auto s = random_tensor({5}, rng, -2.0, 2.0);
  const std::vector<std::vector<std::size_t>> groups{{0, 3}, {1}, {2, 4}};
  auto p = ad::grouped_softmax(s, groups);
  EXPECT_DOUBLE_EQ(p[1], 1.0);
  EXPECT_NEAR(p[0] + p[3], 1.0, 1e-12);
  EXPECT_NEAR(p[2] + p[4], 1.0, 1e-12);
  EXPECT_NEAR(p[0], std::exp(s[0]) / (std::exp(s[0]) + std::exp(s[3])), 1e-12);
  auto w = random_tensor({5}, rng, -1.0, 1.0, false);
  EXPECT_LT(check_inputs({s}, [&] { return ad::sum(ad::mul(ad::grouped_softmax(s, groups), w)); }).max_relative_error,
            kTight);
}

TEST(Backward, NonScalarLossIsContractError) {
  auto x = Tensor<double>::vector({1, 2}, true);
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  auto y = ad::scale(x, 2.0);
  EXPECT_THROW(ad::backward(y), ContractError);
}

TEST(Backward, NoActiveTapeIsContractError) {
  auto x = Tensor<double>::scalar(1.0, true);
  EXPECT_THROW(ad::backward(x), ContractError);
}

TEST(Backward, ClearsTapeAndAccumulates) {
  auto x = Tensor<double>::scalar(3.0, true);
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  ad::backward(ad::mul(x, x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  ad::backward(ad::scale(x, 5.0));
  EXPECT_DOUBLE_EQ(x.grad()[0], 11.0);
}

TEST(Backward, LinearityOverSummedLosses) {
  Rng rng(10);
  auto a = random_tensor({3, 3}, rng);
  auto b = random_tensor({3, 3}, rng);
  auto l1 = [&] { return ad::sum(ad::sigmoid(ad::matmul(a, b))); };
  auto l2 = [&] { return ad::mean(ad::mul(a, ad::relu(b))); };
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  ad::backward(l1());
  auto ga1 = std::vector<double>(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  ad::backward(l2());
  auto ga2 = std::vector<double>(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  ad::backward(ad::add(l1(), l2()));
  for (std::size_t i = 0; i < ga1.size(); ++i) EXPECT_NEAR(a.grad()[i], ga1[i] + ga2[i], 1e-12);
}

TEST(Backward, NoGradScopeRecordsNothing) {
  auto x = Tensor<double>::scalar(2.0, true);
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  {
    ad::NoGradScope<double> off;
    auto y = ad::mul(x, x);
    EXPECT_EQ(tape.size(), 0u);
  }
  auto y = ad::mul(x, x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Determinism, IdenticalInputsGiveBitwiseIdenticalOutputs) {
  Rng r1(11), r2(11);
  auto a1 = random_tensor({4, 4}, r1);
  auto a2 = random_tensor({4, 4}, r2);
  auto f = [](const Tensor<double>& a) { return ad::softmax(ad::matmul(a, ad::transpose(a)), 1); };
  EXPECT_EQ(f(a1).vec(), f(a2).vec());
}

TEST(FiniteDifferenceCheck, SquareAtThree) {
  auto x = Tensor<double>::scalar(3.0);
  auto r = check_inputs({x}, [&] { return ad::mul(x, x); });
  EXPECT_NEAR(r.analytic, 6.0, 1e-12);
  EXPECT_NEAR(r.numeric, 6.0, 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-9);
}

TEST(FiniteDifferenceCheck, CorruptedGradientIsReportedWithName) {
  Rng rng(12);
  ad::ParameterStore<double> store;
  store.add("layer.weight", random_tensor({3}, rng, 0.5, 1.5));
  store.add("layer.bias", Tensor<double>::vector({0.1, 0.2}));
  auto& w = store.get("layer.weight");
  auto& b = store.get("layer.bias");
  std::function<Tensor<double>()> f = [&] { return ad::add(ad::sum(ad::mul(w, w)), ad::sum(b)); };
  auto analytic = ad::analytic_gradients(f, store);
  for (auto& g : analytic["layer.weight"]) g *= 2.0;
  auto r = ad::compare_with_finite_differences(f, store, analytic);
  EXPECT_NEAR(r.max_relative_error, 1.0, 1e-6);
  EXPECT_EQ(r.worst_parameter, "layer.weight");
}

TEST(ParameterStoreTest, SortedUniqueNames) {
  ad::ParameterStore<double> store;
  store.add("b", Tensor<double>::scalar(1));
  store.add("a", Tensor<double>::scalar(2));
  EXPECT_THROW(store.add("a", Tensor<double>::scalar(3)), ContractError);
  EXPECT_EQ(store.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(store.get("a").requires_grad());
  EXPECT_THROW(store.get("zz"), ContractError);
}

TEST(TensorTest, ShapeMustMatchValues) {
  EXPECT_THROW(Tensor<double>({2, 2}, {1, 2, 3}), DimensionError);
  auto t = Tensor<double>::vector({1, 2});
  EXPECT_THROW(t.item(), ContractError);
  auto c = t.clone();
  EXPECT_FALSE(c.same_storage(t));
}

}  // namespace
