#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sisr/error.hpp"
#include "sisr/ops.hpp"
#include "sisr/rrg.hpp"
#include "test_util.hpp"
#include "toy.hpp"

namespace sisr::rrg {
namespace {

using ad::Tensor;
using testing::random_tensor;
using testing::to_rows;
using testing::to_vector;

TEST(SaliencyToken, MatchesOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 1 + rng.below(16), d = 2 + rng.below(8);
    nn::ParameterSet params;
    nn::LayerNorm norm(params, "ln", d);
    align::SaliencyMap map;
    for (std::size_t i = 0; i < n; ++i) map.scores.push_back(rng.uniform(-1, 1));
    const Tensor features = random_tensor({n, d}, rng, -2, 2);
    const Tensor got = saliency_token(map, features, norm);
    const auto want = oracle::saliency_token(map.scores, to_rows(features), ad::kLayerNormEps);
    ASSERT_EQ(got.shape(), (ad::Shape{1, d}));
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(got[j], want[j], 1e-10);
  }
}

TEST(SaliencyToken, WeightedSumShapeCheck) {
  const Tensor f = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor w = saliency_weighted_sum(align::SaliencyMap{{0.5, -1.0}}, f);
  EXPECT_DOUBLE_EQ(w[0], -2.5);
  EXPECT_DOUBLE_EQ(w[1], -3.0);
  EXPECT_THROW(saliency_weighted_sum(align::SaliencyMap{{1.0}}, f), ShapeError);
}

TEST(ReportLoss, MatchesOracleAndLogitsForm) {
  Rng rng(42);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t v = 6 + rng.below(6), len = 1 + rng.below(8);
    text::TokenSequence ref = {text::kBos};
    for (std::size_t i = 0; i < len; ++i) ref.push_back(rng.below(v));
    ref.push_back(text::kEos);
    const Tensor logits = random_tensor({len + 1, v}, rng, -3, 3);
    const Tensor probs = ad::softmax(logits, 1);
    const auto targets = decoder_targets(ref);
    const double want = oracle::report_loss(to_rows(probs), targets);
    EXPECT_NEAR(report_loss(probs, ref).item(), want, 1e-10);
    EXPECT_NEAR(report_loss_from_logits(logits, ref).item(), want, 1e-10);
  }
  EXPECT_THROW(report_loss(Tensor({3, 4}, 0.25), {text::kBos, 5, text::kEos}), ShapeError);
  EXPECT_THROW(decoder_inputs({text::kBos}), ContractError);
}

TEST(ReportLoss, TeacherForcingSplit) {
  const text::TokenSequence ref = {text::kBos, 7, 8, text::kEos};
  EXPECT_EQ(decoder_inputs(ref), (text::TokenSequence{text::kBos, 7, 8}));
  EXPECT_EQ(decoder_targets(ref), (text::TokenSequence{7, 8, text::kEos}));
}

TEST(MimLoss, BothDistances) {
  const Tensor pred = Tensor::matrix(3, 2, {3, 4, 9, 9, 0, 0});
  const Tensor target = Tensor::matrix(3, 2, {0, 0, 9, 9, 1, 0});
  const std::vector<std::size_t> masked = {0, 2};
  // Residual rows (3,4) and (-1,0).
  EXPECT_DOUBLE_EQ(mim_loss(pred, target, masked, MimDistance::kPixelMse).item(), (9 + 16 + 1) / 4.0);
  EXPECT_DOUBLE_EQ(mim_loss(pred, target, masked, MimDistance::kPatchNorm).item(), (5 + 1) / 2.0);
  EXPECT_THROW(mim_loss(pred, target, {}, MimDistance::kPixelMse), ContractError);
}

class RrgGradients : public ::testing::TestWithParam<MimDistance> {};

TEST_P(RrgGradients, AllTerms) {
  auto cfg = testing::toy_rrg_config();
  cfg.distance = GetParam();
  RrgNetwork net(cfg, testing::kToyVocab, 3);
  const auto batch = testing::toy_rrg_batch(3, 4);
  std::vector<MaskPlan> plans;
  for (std::size_t b = 0; b < batch.size(); ++b) plans.push_back(net.plan_for(batch[b], b));
  for (auto term : {&RrgLosses::image, &RrgLosses::report, &RrgLosses::total}) {
    auto loss = [&] { return net.losses(batch, plans).*term; };
    const auto r = testing::check_gradients(testing::leaves_of(net.params()), loss, 1e-5, 8);
    EXPECT_LT(r.max_relative_error, 1e-5) << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Distances, RrgGradients,
                         ::testing::Values(MimDistance::kPixelMse, MimDistance::kPatchNorm));

TEST(RrgNetwork, TotalIsWeightedSumAndReportCanBeOff) {
  auto cfg = testing::toy_rrg_config();
  cfg.lambda_image = 0.5;
  cfg.lambda_report = 2.0;
  RrgNetwork net(cfg, testing::kToyVocab, 3);
  const auto batch = testing::toy_rrg_batch(2, 4);
  const std::vector<MaskPlan> plans = {net.plan_for(batch[0], 1), net.plan_for(batch[1], 2)};
  const auto l = net.losses(batch, plans);
  EXPECT_NEAR(l.total.item(), 0.5 * l.image.item() + 2.0 * l.report.item(), 1e-12);
  cfg.lambda_report = 0.0;
  RrgNetwork off(cfg, testing::kToyVocab, 3);
  const auto l0 = off.losses(batch, plans);
  EXPECT_EQ(l0.report.item(), 0.0);
  EXPECT_DOUBLE_EQ(l0.image.item(), l.image.item());
}

TEST(RrgNetwork, SaliencyTokenAffectsDecoderUnlessDisabled) {
  auto cfg = testing::toy_rrg_config();
  RrgNetwork net(cfg, testing::kToyVocab, 3);
  const auto s = testing::toy_rrg_batch(1, 4).front();
  align::SaliencyMap flipped = s.saliency;
  for (auto& v : flipped.scores) v = -v;
  const text::TokenSequence in = {text::kBos, 6};
  const Tensor a = net.logits(in, net.context(s.patches, s.saliency));
  const Tensor b = net.logits(in, net.context(s.patches, flipped));
  const Tensor za = net.logits(in, net.context(s.patches, s.saliency, true));
  const Tensor zb = net.logits(in, net.context(s.patches, flipped, true));
  EXPECT_NE(to_vector(a), to_vector(b));
  EXPECT_EQ(to_vector(za), to_vector(zb));
  cfg.use_saliency_token = false;
  RrgNetwork off(cfg, testing::kToyVocab, 3);
  EXPECT_EQ(to_vector(off.logits(in, off.context(s.patches, s.saliency))),
            to_vector(off.logits(in, off.context(s.patches, flipped))));
}

TEST(RrgNetwork, ParameterNamesAndMaskShapeCheck) {
  RrgNetwork net(testing::toy_rrg_config(), testing::kToyVocab, 3);
  for (const auto& item : net.params().items()) EXPECT_EQ(item.name.rfind("rrg.", 0), 0u);
  MaskPlan bad;
  bad.probabilities.assign(5, 0.5);
  bad.masked = {0};
  Rng rng(1);
  EXPECT_THROW(net.mim_forward_loss(random_tensor({16, 4}, rng), bad), ShapeError);
}

TEST(TrainRrg, DeterministicAndDecreasing) {
  const auto batch = testing::toy_rrg_batch(6, 12);
  RrgTrainOptions opt;
  opt.epochs = 12;
  opt.batch_size = 3;
  opt.adam.lr = 3e-3;
  opt.seed = 5;
  RrgNetwork a(testing::toy_rrg_config(), testing::kToyVocab, 2);
  RrgNetwork b(testing::toy_rrg_config(), testing::kToyVocab, 2);
  const auto la = train_rrg(a, batch, opt);
  const auto lb = train_rrg(b, batch, opt);
  ASSERT_EQ(la.size(), 12u);
  for (std::size_t e = 0; e < la.size(); ++e) EXPECT_EQ(la[e].total, lb[e].total);
  EXPECT_LT(la.back().total, la.front().total);
  EXPECT_EQ(io::encode_bundle(a.params().to_bundle()), io::encode_bundle(b.params().to_bundle()));
}

}  // namespace
}  // namespace sisr::rrg
