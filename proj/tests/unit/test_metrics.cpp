#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sisr/error.hpp"
#include "sisr/metrics.hpp"
#include "sisr/rng.hpp"

namespace sisr::metrics {
namespace {

Words words(std::initializer_list<const char*> w) { return Words(w.begin(), w.end()); }

Words random_words(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  Words w(rng.below(max_len + 1));
  for (auto& s : w) s = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
  return w;
}

TEST(Bleu, HandComputedExample) {
  const auto cand = words({"the", "cat", "sat", "on", "the", "mat"});
  const auto ref = words({"the", "cat", "is", "on", "the", "mat"});
  const auto r = corpus_bleu({cand}, {ref});
  EXPECT_DOUBLE_EQ(r.precision[0], 5.0 / 6);
  EXPECT_DOUBLE_EQ(r.precision[1], 3.0 / 5);
  EXPECT_DOUBLE_EQ(r.precision[2], 1.0 / 4);
  EXPECT_DOUBLE_EQ(r.precision[3], 0.0);
  EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
  EXPECT_NEAR(r.bleu[1], std::sqrt(5.0 / 6 * 3.0 / 5), 1e-15);
  EXPECT_EQ(r.bleu[3], 0.0);
}

TEST(Bleu, ClippingAndBrevity) {
  const auto r = corpus_bleu({words({"the", "the", "the"})}, {words({"the", "cat", "the", "dog"})});
  EXPECT_DOUBLE_EQ(r.precision[0], 2.0 / 3);
  EXPECT_NEAR(r.brevity_penalty, std::exp(1.0 - 4.0 / 3), 1e-15);
  EXPECT_EQ(bleu_n(words({"a", "b"}), words({"a", "b"}), 2).value, 1.0);
  EXPECT_TRUE(bleu_n({}, words({"a"}), 1).degenerate);
  EXPECT_THROW(bleu_n({}, {}, 5), ContractError);
  EXPECT_THROW(corpus_bleu({{}}, {}), ContractError);
}

TEST(Bleu, MatchesOracleOnRandomCorpora) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Words> cands, refs;
    const std::size_t n = 1 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) {
      cands.push_back(random_words(rng, 12, 4));
      refs.push_back(random_words(rng, 12, 4));
    }
    const auto got = corpus_bleu(cands, refs);
    const auto want = oracle::corpus_bleu(cands, refs);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(got.bleu[k], want[k], 1e-10) << trial;
  }
}

TEST(Rouge, HandComputedExample) {
  const auto c = words({"a", "b", "c", "d"});
  const auto r = words({"a", "c", "e"});
  EXPECT_EQ(lcs_length(c, r), 2u);
  const double p = 0.5, rc = 2.0 / 3;
  EXPECT_NEAR(rouge_l(c, r).value, (1 + kRougeBetaSquared) * p * rc / (rc + kRougeBetaSquared * p),
              1e-15);
  EXPECT_EQ(rouge_l(c, c).value, 1.0);
  EXPECT_TRUE(rouge_l({}, c).degenerate);
  EXPECT_EQ(rouge_l(words({"x"}), c).value, 0.0);
}

TEST(Rouge, MatchesOracleOnRandomPairs) {
  Rng rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = random_words(rng, 14, 5);
    const auto r = random_words(rng, 14, 5);
    EXPECT_EQ(lcs_length(c, r), oracle::lcs(c, r));
    EXPECT_NEAR(rouge_l(c, r).value, oracle::rouge_l(c, r, kRougeBetaSquared), 1e-10);
  }
}

TEST(ClinicalEfficacy, MicroAveragesOverAllPairs) {
  using corpus::ObservationLabelSet;
  ObservationLabelSet a, b, c, d;
  a.set(0).set(1);
  b.set(0);
  c.set(2);
  d.set(3);
  const auto m = micro_ce({a, c}, {b, d});
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.fp, 2u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_DOUBLE_EQ(m.precision, 1.0 / 3);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.4);
  const auto empty = micro_ce_from_counts(0, 0, 0);
  EXPECT_EQ(empty.f1, 0.0);
}

TEST(Localization, RecallAndPrecision) {
  const auto l = saliency_localization({1, 2, 3, 4}, {2, 4, 9});
  EXPECT_DOUBLE_EQ(*l.recall, 2.0 / 3);
  EXPECT_DOUBLE_EQ(l.precision, 0.5);
  EXPECT_FALSE(saliency_localization({1}, {}).recall.has_value());
}

TEST(MetricReport, JsonRoundTripAndEvaluate) {
  const auto r = evaluate_reports({"there is a mild mass in the left upper zone ."},
                                  {"there is a mild mass in the left upper zone ."});
  EXPECT_EQ(r.n_samples, 1u);
  EXPECT_DOUBLE_EQ(r.bleu[3], 1.0);
  EXPECT_DOUBLE_EQ(r.rouge_l, 1.0);
  EXPECT_DOUBLE_EQ(r.ce_f1, 1.0);
  const auto j = to_json(r);
  for (const char* key : {"bleu1", "bleu4", "rougeL", "ce_precision", "ce_recall", "ce_f1",
                          "sal_recall", "sal_precision", "n_samples"}) {
    EXPECT_NE(j.find(std::string("\"") + key + "\""), std::string::npos) << key;
  }
  const auto back = report_from_json(j);
  EXPECT_EQ(back.bleu, r.bleu);
  EXPECT_EQ(back.ce_f1, r.ce_f1);
  EXPECT_FALSE(back.sal_recall.has_value());
}

}  // namespace
}  // namespace sisr::metrics
