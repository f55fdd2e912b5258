#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sisr/corpus.hpp"

namespace sisr::metrics {

using Words = std::vector<std::string>;

// ROUGE-L F-measure weight.
inline constexpr double kRougeBetaSquared = 1.2;

struct Score {
  double value = 0.0;
  // Set when an input was empty and the score fell back to 0.
  bool degenerate = false;
};

struct BleuResult {
  // bleu[n-1] is BLEU-n.
  std::array<double, 4> bleu{};
  // Clipped (modified) n-gram precisions.
  std::array<double, 4> precision{};
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  bool degenerate = false;
};

// Pools clipped n-gram counts and lengths over a corpus of
// (candidate, reference) pairs.
class BleuAccumulator {
 public:
  void add(const Words& candidate, const Words& reference);
  BleuResult result() const;

 private:
  std::array<std::size_t, 4> matched_{};
  std::array<std::size_t, 4> total_{};
  std::size_t candidate_length_ = 0;
  std::size_t reference_length_ = 0;
};

// Sentence-level BLEU-n, n in 1..4.
Score bleu_n(const Words& candidate, const Words& reference, int n);
// Corpus-level BLEU-1..4 from pooled counts.
BleuResult corpus_bleu(const std::vector<Words>& candidates, const std::vector<Words>& references);

std::size_t lcs_length(const Words& a, const Words& b);
Score rouge_l(const Words& candidate, const Words& reference);

struct MicroCe {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};
MicroCe micro_ce(const std::vector<corpus::ObservationLabelSet>& predicted,
                 const std::vector<corpus::ObservationLabelSet>& reference);
// Precision/recall/F1 from pooled counts with 0 on empty denominators.
MicroCe micro_ce_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

struct Localization {
  // Absent when the truth set is empty.
  std::optional<double> recall;
  double precision = 0.0;
};
Localization saliency_localization(const std::vector<std::size_t>& predicted,
                                   const std::vector<std::size_t>& truth);

struct MetricReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double ce_precision = 0.0;
  double ce_recall = 0.0;
  double ce_f1 = 0.0;
  std::optional<double> sal_recall;
  std::optional<double> sal_precision;
  std::size_t n_samples = 0;
  bool bleu_degenerate = false;
  bool rouge_degenerate = false;
};

// Fixed keys: bleu1..bleu4, rougeL, ce_precision, ce_recall, ce_f1,
// sal_recall, sal_precision, n_samples (plus degenerate flags).
std::string to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& json);

// Scores candidate report texts against references.
MetricReport evaluate_reports(const std::vector<std::string>& candidates,
                              const std::vector<std::string>& references);

}  // namespace sisr::metrics
