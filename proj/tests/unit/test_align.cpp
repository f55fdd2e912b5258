#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sisr/align.hpp"
#include "sisr/error.hpp"
#include "sisr/ops.hpp"
#include "test_util.hpp"
#include "toy.hpp"

namespace sisr::align {
namespace {

using ad::Tensor;
using testing::random_tensor;
using testing::to_rows;
using testing::to_vector;

TEST(Contrastive, MatchesOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t b = 1 + rng.below(5), d = 2 + rng.below(6);
    const double tau = rng.uniform(0.05, 1.0), wvt = rng.uniform(0, 1), wtv = rng.uniform(0, 1);
    std::vector<Tensor> gv, gt;
    oracle::Matrix ov, ot;
    for (std::size_t i = 0; i < b; ++i) {
      gv.push_back(random_tensor({d}, rng));
      gt.push_back(random_tensor({d}, rng));
      ov.push_back(to_vector(gv.back()));
      ot.push_back(to_vector(gt.back()));
    }
    const auto got = contrastive_bidirectional(gv, gt, tau, wvt, wtv);
    const auto want = oracle::contrastive(ov, ot, tau, wvt, wtv);
    EXPECT_NEAR(got.vision_to_text.item(), want.vision_to_text, 1e-10);
    EXPECT_NEAR(got.text_to_vision.item(), want.text_to_vision, 1e-10);
    EXPECT_NEAR(got.total.item(), want.total, 1e-10);
  }
}

TEST(Contrastive, SingleSampleIsZeroAndZeroNormIsUndefined) {
  const auto one = contrastive_bidirectional({Tensor::vector({1, 2})}, {Tensor::vector({3, 1})}, 0.1, 0.75, 0.25);
  EXPECT_NEAR(one.total.item(), 0.0, 1e-15);
  try {
    contrastive_bidirectional({Tensor::vector({1, 0}), Tensor::vector({0, 0})},
                              {Tensor::vector({1, 1}), Tensor::vector({1, 2})}, 0.1, 1, 1);
    FAIL();
  } catch (const UndefinedError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(contrastive_bidirectional({Tensor::vector({1})}, {}, 0.1, 1, 1), ShapeError);
  EXPECT_THROW(contrastive_bidirectional({Tensor::vector({1})}, {Tensor::vector({1})}, 0.0, 1, 1),
               ConfigError);
}

TEST(Saliency, MatchesOracleAndIsBounded) {
  Rng rng(32);
  for (int trial = 0; trial < 150; ++trial) {
    const Tensor local = random_tensor({2 + rng.below(15), 2 + rng.below(6)}, rng);
    const auto got = to_saliency_map(saliency_scores(local));
    const auto want = oracle::saliency(to_rows(local));
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_NEAR(got.scores[i], want[i], 1e-10);
      EXPECT_LE(std::abs(got.scores[i]), 1.0 + 1e-12);
    }
  }
}

TEST(Saliency, ZeroPatchNamesThePatch) {
  const Tensor local = Tensor::matrix(3, 2, {1, 2, 0, 0, 2, 1});
  try {
    saliency_scores(local);
    FAIL();
  } catch (const UndefinedError& e) {
    EXPECT_NE(std::string(e.what()).find("patch 1"), std::string::npos) << e.what();
  }
}

TEST(Salient, CountFloorsAndClamps) {
  EXPECT_EQ(salient_count(64, 0.2), 12u);
  EXPECT_EQ(salient_count(16, 0.2), 3u);
  EXPECT_EQ(salient_count(100, 0.29), 29u);
  EXPECT_EQ(salient_count(5, 0.01), 1u);
  EXPECT_EQ(salient_count(7, 1.0), 7u);
  EXPECT_THROW(salient_count(10, 0.0), ConfigError);
  EXPECT_THROW(salient_count(10, 1.5), ConfigError);
}

TEST(Salient, SelectsTopScoresWithLowerIndexTies) {
  SaliencyMap m{{0.1, 0.9, 0.5, 0.9, 0.5, -0.2, 0.5, 0.0, 0.3, 0.2}};
  // floor(0.4 * 10) = 4: both 0.9s then the first two 0.5s.
  const auto s = select_salient(m, 0.4);
  EXPECT_EQ(s.indices, (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(s.k_percent, 0.4);
  EXPECT_THROW(select_salient(SaliencyMap{}, 0.2), ContractError);
}

TEST(Salient, PropertySelectedDominateUnselected) {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    SaliencyMap m;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) m.scores.push_back(std::round(rng.uniform(-4, 4)) / 4);
    const double k = rng.uniform(0.01, 1.0);
    const auto s = select_salient(m, k);
    EXPECT_EQ(s.indices.size(), salient_count(n, k));
    EXPECT_TRUE(std::is_sorted(s.indices.begin(), s.indices.end()));
    double min_in = std::numeric_limits<double>::infinity();
    for (auto i : s.indices) min_in = std::min(min_in, m.scores[i]);
    for (std::size_t i = 0; i < n; ++i) {
      if (std::binary_search(s.indices.begin(), s.indices.end(), i)) continue;
      EXPECT_LE(m.scores[i], min_in);
    }
  }
}

TEST(Masks, RandomMaskCountsAndTokenPositions) {
  Rng rng(34);
  const auto m = random_mask(16, 0.5, rng);
  EXPECT_EQ(m.size(), 8u);
  EXPECT_TRUE(std::adjacent_find(m.begin(), m.end(), std::greater_equal<>()) == m.end());
  EXPECT_EQ(random_mask(10, 0.01, rng).size(), 1u);
  const text::TokenSequence ids = {text::kBos, 7, 8, 9, text::kEos, text::kPad};
  for (int i = 0; i < 20; ++i) {
    const auto t = random_token_mask(ids, 0.5, rng);
    for (auto p : t) EXPECT_TRUE(p >= 1 && p <= 3);
  }
  EXPECT_THROW(random_token_mask({text::kBos, text::kEos}, 0.5, rng), ContractError);
}

TEST(MaskedLosses, Values) {
  const Tensor pred = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor target = Tensor::matrix(2, 2, {1, 0, 0, 4});
  // Only row 1 counts: ((3-0)^2 + 0) / 2.
  EXPECT_DOUBLE_EQ(masked_patch_mse(pred, target, std::vector<std::size_t>{1}).item(), 4.5);
  EXPECT_THROW(masked_patch_mse(pred, target, {}), ContractError);
}

class IdentificationGradients : public ::testing::Test {
 protected:
  IdentificationGradients()
      : net(testing::toy_align_config(), testing::kToyVocab, 5), batch(testing::toy_align_batch(3, 9)) {
    Rng rng(10);
    for (const auto& s : batch) {
      image_masks.push_back(random_mask(16, 0.5, rng));
      text_masks.push_back(random_token_mask(s.tokens, 0.3, rng));
    }
  }
  double check(Tensor AlignLosses::*term) {
    auto loss = [&] { return net.losses(batch, image_masks, text_masks).*term; };
    const auto r = testing::check_gradients(testing::leaves_of(net.params()), loss, 1e-5, 8);
    return r.max_relative_error;
  }
  IdentificationNetwork net;
  std::vector<AlignSample> batch;
  std::vector<std::vector<std::size_t>> image_masks, text_masks;
};

TEST_F(IdentificationGradients, ImageTerm) { EXPECT_LT(check(&AlignLosses::image), 1e-5); }
TEST_F(IdentificationGradients, TextTerm) { EXPECT_LT(check(&AlignLosses::text), 1e-5); }
TEST_F(IdentificationGradients, ContrastiveTerm) { EXPECT_LT(check(&AlignLosses::contrastive), 1e-5); }
TEST_F(IdentificationGradients, Total) { EXPECT_LT(check(&AlignLosses::total), 1e-5); }

TEST(IdentificationNetwork, TotalIsWeightedSum) {
  auto cfg = testing::toy_align_config();
  cfg.lambda_image = 0.3;
  cfg.lambda_text = 2.0;
  cfg.lambda_bi = 0.7;
  IdentificationNetwork net(cfg, testing::kToyVocab, 1);
  const auto batch = testing::toy_align_batch(3, 2);
  Rng rng(3);
  const auto l = net.losses(batch, rng);
  EXPECT_NEAR(l.total.item(), 0.3 * l.image.item() + 2.0 * l.text.item() + 0.7 * l.contrastive.item(), 1e-12);
  for (const auto& item : net.params().items()) EXPECT_EQ(item.name.rfind("ident.", 0), 0u);
}

TEST(IdentificationNetwork, SameSeedSameWeights) {
  IdentificationNetwork a(testing::toy_align_config(), testing::kToyVocab, 4);
  IdentificationNetwork b(testing::toy_align_config(), testing::kToyVocab, 4);
  IdentificationNetwork c(testing::toy_align_config(), testing::kToyVocab, 5);
  EXPECT_EQ(io::encode_bundle(a.params().to_bundle()), io::encode_bundle(b.params().to_bundle()));
  EXPECT_NE(io::encode_bundle(a.params().to_bundle()), io::encode_bundle(c.params().to_bundle()));
}

TEST(TrainIdentification, DeterministicAndDecreasing) {
  const auto batch = testing::toy_align_batch(8, 11);
  AlignTrainOptions opt;
  opt.epochs = 15;
  opt.batch_size = 4;
  opt.adam.lr = 3e-3;
  opt.seed = 2;
  IdentificationNetwork a(testing::toy_align_config(), testing::kToyVocab, 1);
  IdentificationNetwork b(testing::toy_align_config(), testing::kToyVocab, 1);
  std::size_t callbacks = 0;
  opt.on_epoch = [&](const AlignEpochLog&) { ++callbacks; };
  const auto la = train_identification(a, batch, opt);
  const auto lb = train_identification(b, batch, opt);
  ASSERT_EQ(la.size(), 15u);
  EXPECT_EQ(callbacks, 30u);
  for (std::size_t e = 0; e < la.size(); ++e) EXPECT_EQ(la[e].total, lb[e].total);
  EXPECT_LT(la.back().total, la.front().total);
}

TEST(TrainIdentification, NonFiniteLossIsDivergence) {
  IdentificationNetwork net(testing::toy_align_config(), testing::kToyVocab, 1);
  net.params().items().front().tensor.node()->data[0] = std::numeric_limits<double>::quiet_NaN();
  AlignTrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 2;
  EXPECT_THROW(train_identification(net, testing::toy_align_batch(4, 1), opt), DivergenceError);
}

}  // namespace
}  // namespace sisr::align
