#include "sisr/generate.hpp"

#include <algorithm>
#include <cmath>

#include "sisr/error.hpp"
#include "sisr/image.hpp"
#include "sisr/ops.hpp"

namespace sisr::rrg {

namespace {

// Log-probabilities and probabilities of the next token after `prefix`.
void next_distribution(const RrgNetwork& net, const text::TokenSequence& prefix,
                       const nn::TextDecoder::Context& ctx, std::vector<double>& log_probs,
                       std::vector<double>& probs) {
  const ad::Tensor logits = net.logits(prefix, ctx);
  const std::size_t v = logits.cols(), last = logits.rows() - 1;
  double mx = logits.at(last, 0);
  for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, logits.at(last, j));
  double z = 0.0;
  for (std::size_t j = 0; j < v; ++j) z += std::exp(logits.at(last, j) - mx);
  const double log_z = std::log(z);
  log_probs.resize(v);
  probs.resize(v);
  for (std::size_t j = 0; j < v; ++j) {
    log_probs[j] = logits.at(last, j) - mx - log_z;
    probs[j] = std::exp(log_probs[j]);
  }
}

std::size_t resolve_length(const RrgNetwork& net, const DecodeOptions& options) {
  const std::size_t cap = net.max_tokens();
  return options.max_length == 0 ? cap : std::min(options.max_length, cap);
}

GeneratedReport greedy(const RrgNetwork& net, const nn::TextDecoder::Context& ctx,
                       std::size_t max_length) {
  GeneratedReport out;
  out.ids = {text::kBos};
  std::vector<double> log_probs, probs;
  while (out.generated_length() < max_length) {
    next_distribution(net, out.ids, ctx, log_probs, probs);
    const auto best = static_cast<std::size_t>(
        std::max_element(log_probs.begin(), log_probs.end()) - log_probs.begin());
    out.ids.push_back(best);
    out.log_prob += log_probs[best];
    out.confidences.push_back(probs);
    if (best == text::kEos) return out;
  }
  out.truncated = true;
  return out;
}

struct Hypothesis {
  text::TokenSequence ids;
  std::vector<std::vector<double>> confidences;
  double log_prob = 0.0;
};

GeneratedReport beam(const RrgNetwork& net, const nn::TextDecoder::Context& ctx,
                     std::size_t max_length, std::size_t width) {
  const GeneratedReport greedy_path = greedy(net, ctx, max_length);
  std::vector<Hypothesis> live(1);
  live[0].ids = {text::kBos};
  std::vector<Hypothesis> finished;
  std::vector<double> log_probs, probs;
  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double log_prob;
  };
  for (std::size_t step = 0; step < max_length && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    std::vector<std::vector<double>> dists;
    for (std::size_t h = 0; h < live.size(); ++h) {
      next_distribution(net, live[h].ids, ctx, log_probs, probs);
      dists.push_back(probs);
      std::vector<std::size_t> order(log_probs.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      const std::size_t keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          return log_probs[a] > log_probs[b] || (log_probs[a] == log_probs[b] && a < b);
                        });
      for (std::size_t j = 0; j < keep; ++j)
        candidates.push_back({h, order[j], live[h].log_prob + log_probs[order[j]]});
    }
    // Stable: equal scores keep parent order, then token order.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    candidates.resize(std::min(width, candidates.size()));
    std::vector<Hypothesis> next;
    for (const auto& c : candidates) {
      Hypothesis h = live[c.parent];
      h.ids.push_back(c.token);
      h.confidences.push_back(dists[c.parent]);
      h.log_prob = c.log_prob;
      (c.token == text::kEos ? finished : next).push_back(std::move(h));
    }
    live = std::move(next);
  }
  std::vector<Hypothesis> pool = finished.empty() ? std::move(live) : std::move(finished);
  // The greedy path competes too, so the result never scores below it.
  pool.push_back({greedy_path.ids, greedy_path.confidences, greedy_path.log_prob});
  auto score = [](const Hypothesis& h) {
    return h.log_prob / static_cast<double>(h.ids.size() - 1);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i)
    if (score(pool[i]) > score(pool[best])) best = i;
  GeneratedReport out;
  out.ids = pool[best].ids;
  out.confidences = pool[best].confidences;
  out.log_prob = pool[best].log_prob;
  out.truncated = out.ids.back() != text::kEos;
  return out;
}

}  // namespace

double GeneratedReport::normalized_log_prob() const {
  return log_prob / static_cast<double>(std::max<std::size_t>(1, generated_length()));
}

GeneratedReport generate(const RrgNetwork& net, const ad::Tensor& patches,
                         const align::SaliencyMap& saliency, const DecodeOptions& options) {
  if (options.mode == DecodeMode::kBeam && options.beam_width == 0) {
    throw ConfigError("beam width must be positive");
  }
  const std::size_t max_length = resolve_length(net, options);
  const auto ctx = net.context(patches, saliency, options.zero_saliency_token);
  GeneratedReport out = options.mode == DecodeMode::kGreedy
                            ? greedy(net, ctx, max_length)
                            : beam(net, ctx, max_length, options.beam_width);
  out.mode = options.mode;
  out.beam_width = options.mode == DecodeMode::kGreedy ? 1 : options.beam_width;
  return out;
}

GeneratedReport generate(const align::IdentificationNetwork& ident, const RrgNetwork& net,
                         const ImageGrid& image, const DecodeOptions& options) {
  const ad::Tensor patches = patchify(image, net.config().patch_size);
  return generate(net, patches, ident.saliency_map(patches), options);
}

}  // namespace sisr::rrg
