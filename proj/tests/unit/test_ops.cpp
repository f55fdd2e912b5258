#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>

#include "gradcheck.hpp"
#include "sisr/error.hpp"
#include "sisr/ops.hpp"
#include "test_util.hpp"

namespace sisr::ad {
namespace {

using testing::check_gradients;
using testing::random_tensor;

constexpr double kGradTol = 1e-6;

TEST(Ops, MatmulValues) {
  Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_DOUBLE_EQ(c.at(0, 0), 58);
  EXPECT_DOUBLE_EQ(c.at(0, 1), 64);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 139);
  EXPECT_DOUBLE_EQ(c.at(1, 1), 154);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(3);
  Tensor x = random_tensor({4, 7}, rng, -30, 30);
  Tensor s = softmax(x, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 7; ++j) total += s.at(i, j);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  Tensor ls = log_softmax(x);
  for (std::size_t k = 0; k < x.numel(); ++k) EXPECT_NEAR(std::exp(ls[k]), s[k], 1e-12);
}

TEST(Ops, LayerNormStandardizes) {
  Rng rng(4);
  Tensor x = random_tensor({3, 6}, rng, -5, 5);
  Tensor y = layer_norm(x, Tensor({6}, 1.0), Tensor({6}, 0.0));
  for (std::size_t i = 0; i < 3; ++i) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 6; ++j) m += y.at(i, j);
    m /= 6;
    for (std::size_t j = 0; j < 6; ++j) v += (y.at(i, j) - m) * (y.at(i, j) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 6, 1.0, 1e-4);
  }
  EXPECT_THROW(layer_norm(Tensor({2, 1}, 1.0), Tensor({1}, 1.0), Tensor({1}, 0.0)), ShapeError);
}

TEST(Ops, CosineValuesAndZeroNorm) {
  Tensor u = Tensor::vector({1, 0});
  Tensor v = Tensor::vector({1, 1});
  EXPECT_NEAR(cosine_similarity(u, v).item(), 1 / std::sqrt(2.0), 1e-15);
  Tensor rows = Tensor::matrix(2, 2, {1, 0, 0, 0});
  try {
    cosine_rows(rows, v);
    FAIL() << "expected UndefinedError";
  } catch (const UndefinedError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(Ops, MaxOverTokensTakesColumnMax) {
  Tensor x = Tensor::matrix(3, 2, {1, 5, 4, 2, 3, 6});
  Tensor m = max_over_tokens(x);
  EXPECT_DOUBLE_EQ(m[0], 4);
  EXPECT_DOUBLE_EQ(m[1], 6);
}

TEST(Ops, LogIsFloored) {
  Tensor x = Tensor::vector({0.0, 1.0});
  Tensor y = log(x);
  EXPECT_DOUBLE_EQ(y[0], std::log(kLogFloor));
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(Ops, CrossEntropyMatchesLogSoftmax) {
  Rng rng(5);
  Tensor x = random_tensor({3, 5}, rng, -2, 2);
  const std::vector<std::size_t> t = {4, 0, 2};
  Tensor ls = log_softmax(x);
  const double expect = -(ls.at(0, 4) + ls.at(1, 0) + ls.at(2, 2)) / 3;
  EXPECT_NEAR(cross_entropy(x, t).item(), expect, 1e-14);
  EXPECT_THROW(cross_entropy(x, std::vector<std::size_t>{5, 0, 0}), ShapeError);
}

TEST(Ops, RowPlumbing) {
  Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx = {2, 0};
  Tensor g = gather_rows(x, idx);
  EXPECT_DOUBLE_EQ(g.at(0, 1), 6);
  EXPECT_DOUBLE_EQ(g.at(1, 0), 1);
  Tensor r = replace_rows(x, std::vector<std::size_t>{1}, Tensor::vector({9, 9}));
  EXPECT_DOUBLE_EQ(r.at(1, 0), 9);
  EXPECT_DOUBLE_EQ(x.at(1, 0), 3);
  Tensor c = concat_rows({x, g});
  EXPECT_EQ(c.rows(), 5u);
  EXPECT_DOUBLE_EQ(slice_rows(c, 3, 2).at(0, 1), 6);
  EXPECT_DOUBLE_EQ(slice_cols(x, 1, 1).at(2, 0), 6);
  EXPECT_EQ(concat_cols({x, x}).cols(), 4u);
  EXPECT_DOUBLE_EQ(pick(x, std::vector<std::size_t>{1, 0, 1})[2], 6);
  EXPECT_DOUBLE_EQ(transpose(x).at(1, 2), 6);
  EXPECT_THROW(gather_rows(x, std::vector<std::size_t>{3}), ShapeError);
  EXPECT_THROW(reshape(x, {4}), ShapeError);
}

struct GradCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<Tensor(const std::vector<Tensor>&)> fn;
};

class OpGradients : public ::testing::TestWithParam<GradCase> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  const auto& c = GetParam();
  Rng rng(17);
  std::vector<Tensor> inputs;
  std::vector<testing::Leaf> leaves;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) {
    inputs.push_back(random_tensor(c.shapes[i], rng, -1.5, 1.5));
    leaves.push_back({"in" + std::to_string(i), inputs.back()});
  }
  // A fixed random projection turns any output into a scalar.
  Tensor probe;
  auto loss = [&] {
    Tensor out = c.fn(inputs);
    if (!probe.defined()) {
      Rng prng(99);
      probe = random_tensor(out.shape(), prng);
    }
    return sum(mul(out, probe));
  };
  const auto r = check_gradients(leaves, loss);
  EXPECT_LT(r.max_relative_error, kGradTol) << c.name << " worst " << r.worst;
}

const std::vector<std::size_t> kIdx = {2, 0, 2};
const std::vector<std::size_t> kCols = {1, 3, 0};

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradients,
    ::testing::Values(
        GradCase{"matmul", {{3, 4}, {4, 2}}, [](auto& v) { return matmul(v[0], v[1]); }},
        GradCase{"transpose", {{3, 4}}, [](auto& v) { return transpose(v[0]); }},
        GradCase{"add", {{2, 3}, {2, 3}}, [](auto& v) { return add(v[0], v[1]); }},
        GradCase{"sub", {{2, 3}, {2, 3}}, [](auto& v) { return sub(v[0], v[1]); }},
        GradCase{"mul", {{2, 3}, {2, 3}}, [](auto& v) { return mul(v[0], v[1]); }},
        GradCase{"scale", {{2, 3}}, [](auto& v) { return scale(v[0], -0.7); }},
        GradCase{"add_bias", {{3, 4}, {4}}, [](auto& v) { return add_bias(v[0], v[1]); }},
        GradCase{"gelu", {{3, 4}}, [](auto& v) { return gelu(v[0]); }},
        GradCase{"square", {{3, 4}}, [](auto& v) { return square(v[0]); }},
        GradCase{"log", {{3, 4}}, [](auto& v) { return log(add(square(v[0]), Tensor({3, 4}, 0.1))); }},
        GradCase{"row_norms", {{3, 4}}, [](auto& v) { return row_norms(v[0]); }},
        GradCase{"softmax_cols", {{3, 4}}, [](auto& v) { return softmax(v[0], 1); }},
        GradCase{"softmax_rows", {{3, 4}}, [](auto& v) { return softmax(v[0], 0); }},
        GradCase{"log_softmax", {{3, 4}}, [](auto& v) { return log_softmax(v[0]); }},
        GradCase{"layer_norm", {{3, 5}, {5}, {5}}, [](auto& v) { return layer_norm(v[0], v[1], v[2]); }},
        GradCase{"cosine_similarity", {{5}, {5}}, [](auto& v) { return cosine_similarity(v[0], v[1]); }},
        GradCase{"cosine_rows", {{4, 5}, {5}}, [](auto& v) { return cosine_rows(v[0], v[1]); }},
        GradCase{"cosine_matrix", {{3, 5}, {4, 5}}, [](auto& v) { return cosine_matrix(v[0], v[1]); }},
        GradCase{"max_over_tokens", {{4, 5}}, [](auto& v) { return max_over_tokens(v[0]); }},
        GradCase{"sum", {{3, 4}}, [](auto& v) { return sum(v[0]); }},
        GradCase{"mean", {{3, 4}}, [](auto& v) { return mean(v[0]); }},
        GradCase{"gather_rows", {{3, 4}}, [](auto& v) { return gather_rows(v[0], kIdx); }},
        GradCase{"replace_rows", {{3, 4}, {4}}, [](auto& v) { return replace_rows(v[0], std::vector<std::size_t>{0, 2}, v[1]); }},
        GradCase{"concat_rows", {{2, 3}, {1, 3}}, [](auto& v) { return concat_rows({v[0], v[1]}); }},
        GradCase{"slice_rows", {{4, 3}}, [](auto& v) { return slice_rows(v[0], 1, 2); }},
        GradCase{"concat_cols", {{2, 3}, {2, 1}}, [](auto& v) { return concat_cols({v[0], v[1]}); }},
        GradCase{"slice_cols", {{2, 5}}, [](auto& v) { return slice_cols(v[0], 2, 2); }},
        GradCase{"reshape", {{2, 6}}, [](auto& v) { return reshape(v[0], {3, 4}); }},
        GradCase{"pick", {{3, 4}}, [](auto& v) { return pick(v[0], kCols); }},
        GradCase{"cross_entropy", {{3, 4}}, [](auto& v) { return cross_entropy(v[0], kCols); }}),
    [](const auto& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace sisr::ad
