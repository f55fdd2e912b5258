#include "sisr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"
#include "sisr/error.hpp"
#include "sisr/vocab.hpp"

namespace sisr::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[Words(words.begin() + static_cast<std::ptrdiff_t>(i),
                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

void BleuAccumulator::add(const Words& candidate, const Words& reference) {
  candidate_length_ += candidate.size();
  reference_length_ += reference.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = count_ngrams(candidate, n);
    const auto ref = count_ngrams(reference, n);
    for (const auto& [gram, c] : cand) {
      auto it = ref.find(gram);
      matched_[n - 1] += it == ref.end() ? 0 : std::min(c, it->second);
      total_[n - 1] += c;
    }
  }
}

BleuResult BleuAccumulator::result() const {
  BleuResult r;
  r.candidate_length = candidate_length_;
  r.reference_length = reference_length_;
  if (candidate_length_ == 0) {
    r.degenerate = true;
    return r;
  }
  for (std::size_t n = 0; n < 4; ++n) {
    r.precision[n] = total_[n] == 0 ? 0.0
                                    : static_cast<double>(matched_[n]) / static_cast<double>(total_[n]);
  }
  r.brevity_penalty =
      candidate_length_ < reference_length_
          ? std::exp(1.0 - static_cast<double>(reference_length_) /
                               static_cast<double>(candidate_length_))
          : 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    if (r.precision[n] <= 0.0) zero = true;
    if (!zero) log_sum += std::log(r.precision[n]);
    r.bleu[n] = zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return r;
}

Score bleu_n(const Words& candidate, const Words& reference, int n) {
  if (n < 1 || n > 4) throw ContractError("BLEU order must be in 1..4, got " + std::to_string(n));
  BleuAccumulator acc;
  acc.add(candidate, reference);
  const auto r = acc.result();
  return {r.bleu[static_cast<std::size_t>(n - 1)], r.degenerate};
}

BleuResult corpus_bleu(const std::vector<Words>& candidates, const std::vector<Words>& references) {
  if (candidates.size() != references.size()) {
    throw ContractError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
  }
  BleuAccumulator acc;
  for (std::size_t i = 0; i < candidates.size(); ++i) acc.add(candidates[i], references[i]);
  return acc.result();
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Score rouge_l(const Words& candidate, const Words& reference) {
  if (candidate.empty() || reference.empty()) return {0.0, true};
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return {0.0, false};
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return {(1.0 + kRougeBetaSquared) * p * r / (r + kRougeBetaSquared * p), false};
}

MicroCe micro_ce_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  MicroCe m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0
                                        : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

MicroCe micro_ce(const std::vector<corpus::ObservationLabelSet>& predicted,
                 const std::vector<corpus::ObservationLabelSet>& reference) {
  if (predicted.size() != reference.size()) {
    throw ContractError("micro_ce: " + std::to_string(predicted.size()) + " predictions vs " +
                        std::to_string(reference.size()) + " references");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    tp += (predicted[i] & reference[i]).count();
    fp += (predicted[i] & ~reference[i]).count();
    fn += (~predicted[i] & reference[i]).count();
  }
  return micro_ce_from_counts(tp, fp, fn);
}

Localization saliency_localization(const std::vector<std::size_t>& predicted,
                                   const std::vector<std::size_t>& truth) {
  const std::set<std::size_t> t(truth.begin(), truth.end());
  const std::set<std::size_t> p(predicted.begin(), predicted.end());
  std::size_t hit = 0;
  for (auto i : p) hit += t.count(i);
  Localization loc;
  if (!t.empty()) loc.recall = static_cast<double>(hit) / static_cast<double>(t.size());
  loc.precision = p.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(p.size());
  return loc;
}

std::string to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  for (std::size_t n = 0; n < 4; ++n) j["bleu" + std::to_string(n + 1)] = r.bleu[n];
  j["rougeL"] = r.rouge_l;
  j["ce_precision"] = r.ce_precision;
  j["ce_recall"] = r.ce_recall;
  j["ce_f1"] = r.ce_f1;
  j["sal_recall"] = r.sal_recall ? nlohmann::ordered_json(*r.sal_recall) : nullptr;
  j["sal_precision"] = r.sal_precision ? nlohmann::ordered_json(*r.sal_precision) : nullptr;
  j["n_samples"] = r.n_samples;
  j["bleu_degenerate"] = r.bleu_degenerate;
  j["rougeL_degenerate"] = r.rouge_degenerate;
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  MetricReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    for (std::size_t n = 0; n < 4; ++n) r.bleu[n] = j.at("bleu" + std::to_string(n + 1)).get<double>();
    r.rouge_l = j.at("rougeL").get<double>();
    r.ce_precision = j.at("ce_precision").get<double>();
    r.ce_recall = j.at("ce_recall").get<double>();
    r.ce_f1 = j.at("ce_f1").get<double>();
    if (!j.at("sal_recall").is_null()) r.sal_recall = j["sal_recall"].get<double>();
    if (!j.at("sal_precision").is_null()) r.sal_precision = j["sal_precision"].get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.bleu_degenerate = j.value("bleu_degenerate", false);
    r.rouge_degenerate = j.value("rougeL_degenerate", false);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

MetricReport evaluate_reports(const std::vector<std::string>& candidates,
                              const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) {
    throw ContractError("evaluate_reports: " + std::to_string(candidates.size()) +
                        " candidates vs " + std::to_string(references.size()) + " references");
  }
  MetricReport report;
  report.n_samples = candidates.size();
  BleuAccumulator bleu;
  double rouge = 0.0;
  std::vector<corpus::ObservationLabelSet> pred, ref;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = text::split_words(candidates[i]);
    const auto r = text::split_words(references[i]);
    bleu.add(c, r);
    const auto rl = rouge_l(c, r);
    rouge += rl.value;
    report.rouge_degenerate = report.rouge_degenerate || rl.degenerate;
    pred.push_back(corpus::extract_labels(candidates[i]));
    ref.push_back(corpus::extract_labels(references[i]));
  }
  const auto b = bleu.result();
  report.bleu = b.bleu;
  report.bleu_degenerate = b.degenerate;
  report.rouge_l = candidates.empty() ? 0.0 : rouge / static_cast<double>(candidates.size());
  if (candidates.empty()) report.rouge_degenerate = true;
  const auto ce = micro_ce(pred, ref);
  report.ce_precision = ce.precision;
  report.ce_recall = ce.recall;
  report.ce_f1 = ce.f1;
  return report;
}

}  // namespace sisr::metrics
