#pragma once

#include <cstddef>
#include <vector>

#include "sisr/align.hpp"
#include "sisr/rrg.hpp"

namespace sisr::rrg {

enum class DecodeMode { kGreedy, kBeam };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  std::size_t beam_width = 3;
  // Generated tokens including EOS; 0 means the decoder's capacity.
  std::size_t max_length = 0;
  bool zero_saliency_token = false;
};

struct GeneratedReport {
  // [BOS, w..., EOS]; EOS is absent when truncated.
  text::TokenSequence ids;
  // One softmax distribution per generated token.
  std::vector<std::vector<double>> confidences;
  double log_prob = 0.0;
  DecodeMode mode = DecodeMode::kGreedy;
  std::size_t beam_width = 1;
  bool truncated = false;

  std::size_t generated_length() const { return ids.size() - 1; }
  // log_prob divided by the number of generated tokens.
  double normalized_log_prob() const;
};

GeneratedReport generate(const RrgNetwork& net, const ad::Tensor& patches,
                         const align::SaliencyMap& saliency, const DecodeOptions& options);
// Runs the frozen identification network for the saliency map first.
GeneratedReport generate(const align::IdentificationNetwork& ident, const RrgNetwork& net,
                         const ImageGrid& image, const DecodeOptions& options);

}  // namespace sisr::rrg
