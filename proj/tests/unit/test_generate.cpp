#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sisr/error.hpp"
#include "sisr/generate.hpp"
#include "toy.hpp"

namespace sisr::rrg {
namespace {

class Generation : public ::testing::Test {
 protected:
  Generation() : net(testing::toy_rrg_config(), testing::kToyVocab, 8), samples(testing::toy_rrg_batch(50, 21)) {
    // A few steps of training give the decoder a non-uniform, EOS-reaching policy.
    RrgTrainOptions opt;
    opt.epochs = 6;
    opt.batch_size = 5;
    opt.adam.lr = 1e-2;
    train_rrg(net, std::span(samples).subspan(0, 10), opt);
  }
  RrgNetwork net;
  std::vector<RrgSample> samples;
};

TEST_F(Generation, BeamOneEqualsGreedy) {
  DecodeOptions g;
  DecodeOptions b1{DecodeMode::kBeam, 1};
  for (const auto& s : samples) {
    const auto a = generate(net, s.patches, s.saliency, g);
    const auto b = generate(net, s.patches, s.saliency, b1);
    EXPECT_EQ(a.ids, b.ids);
    EXPECT_EQ(a.log_prob, b.log_prob);
    EXPECT_EQ(b.mode, DecodeMode::kBeam);
  }
}

TEST_F(Generation, BeamThreeNeverScoresBelowGreedy) {
  DecodeOptions b3{DecodeMode::kBeam, 3};
  for (const auto& s : samples) {
    const auto a = generate(net, s.patches, s.saliency, {});
    const auto b = generate(net, s.patches, s.saliency, b3);
    EXPECT_GE(b.normalized_log_prob(), a.normalized_log_prob());
  }
}

TEST_F(Generation, OutputIsWellFormed) {
  for (auto mode : {DecodeMode::kGreedy, DecodeMode::kBeam}) {
    const auto r = generate(net, samples[0].patches, samples[0].saliency, {mode, 3});
    EXPECT_EQ(r.ids.front(), text::kBos);
    EXPECT_EQ(r.confidences.size(), r.generated_length());
    double lp = 0.0;
    for (std::size_t t = 0; t < r.confidences.size(); ++t) {
      const auto& d = r.confidences[t];
      EXPECT_EQ(d.size(), testing::kToyVocab);
      EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
      lp += std::log(d[r.ids[t + 1]]);
    }
    EXPECT_NEAR(lp, r.log_prob, 1e-9);
    EXPECT_EQ(r.truncated, r.ids.back() != text::kEos);
    const auto again = generate(net, samples[0].patches, samples[0].saliency, {mode, 3});
    EXPECT_EQ(again.ids, r.ids);
  }
}

TEST_F(Generation, LengthLimitAndWidthValidation) {
  DecodeOptions o;
  o.max_length = 2;
  for (const auto& s : samples) EXPECT_LE(generate(net, s.patches, s.saliency, o).generated_length(), 2u);
  EXPECT_THROW(generate(net, samples[0].patches, samples[0].saliency, {DecodeMode::kBeam, 0}), ConfigError);
}

}  // namespace
}  // namespace sisr::rrg
