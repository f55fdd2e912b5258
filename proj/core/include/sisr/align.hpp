#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sisr/encoders.hpp"
#include "sisr/image.hpp"
#include "sisr/optim.hpp"
#include "sisr/vocab.hpp"

// Salient-region identification: per-token projection into a shared
// image/text space, max-pooled global features, bidirectional contrastive
// alignment, and the patch saliency map derived from it.
namespace sisr::align {

// Linear maps from each encoder width into the common space.
struct CommonSpaceProjections {
  nn::Linear vision;
  nn::Linear text;

  std::size_t width() const { return vision.out_features(); }
};

struct Pooled {
  ad::Tensor local_vision;   // [N_v, d_c]
  ad::Tensor local_text;     // [N_t, d_c]
  ad::Tensor global_vision;  // [d_c]
  ad::Tensor global_text;    // [d_c]
};

// Projects token features, then max-pools each modality over its tokens.
Pooled project_and_pool(const ad::Tensor& vision_tokens, const ad::Tensor& text_tokens,
                        const CommonSpaceProjections& proj);

struct ContrastiveTerms {
  ad::Tensor total;          // weighted sum of both directions
  ad::Tensor vision_to_text;
  ad::Tensor text_to_vision;
};

// InfoNCE over cosine similarities / tau with positives on the diagonal,
// in both directions. Global feature i of each modality belongs to sample i.
ContrastiveTerms contrastive_bidirectional(const std::vector<ad::Tensor>& global_vision,
                                           const std::vector<ad::Tensor>& global_text,
                                           double tau, double weight_vision_to_text,
                                           double weight_text_to_vision);

// Mean over masked rows of the per-pixel squared error.
ad::Tensor masked_patch_mse(const ad::Tensor& predicted, const ad::Tensor& target,
                            std::span<const std::size_t> masked);
// Cross-entropy of the original ids at masked positions.
ad::Tensor masked_token_loss(const ad::Tensor& logits, const text::TokenSequence& original,
                             std::span<const std::size_t> masked);

struct SaliencyMap {
  // One cosine score in [-1, 1] per patch, in patch order.
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
};

struct SalientRegionSet {
  std::vector<std::size_t> indices;  // strictly increasing
  double k_percent = 0.0;
};

// Cosine of every projected local feature with their max-pooled global
// feature. Throws UndefinedError naming the patch for a zero-norm row.
ad::Tensor saliency_scores(const ad::Tensor& local_features);
SaliencyMap to_saliency_map(const ad::Tensor& scores);

// max(1, floor(k * N)) highest scores, ties to the lower index.
std::size_t salient_count(std::size_t num_patches, double k_percent);
SalientRegionSet select_salient(const SaliencyMap& map, double k_percent);

struct AlignConfig {
  nn::EncoderConfig vision;
  nn::EncoderConfig text;
  std::size_t common_width = 64;
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t channels = 1;
  std::size_t max_tokens = 64;
  double tau = 0.07;
  double lambda_vision_to_text = 0.75;
  double lambda_text_to_vision = 0.25;
  double lambda_image = 1.0;
  double lambda_text = 1.0;
  double lambda_bi = 0.1;
  double image_mask_ratio = 0.5;
  double text_mask_ratio = 0.15;
};

// One training pair prepared for the identification network.
struct AlignSample {
  ad::Tensor patches;
  text::TokenSequence tokens;
};

struct AlignLosses {
  ad::Tensor image;        // L_v
  ad::Tensor text;         // L_t
  ad::Tensor contrastive;  // L_bi
  ad::Tensor total;        // L1
};

class IdentificationNetwork {
 public:
  IdentificationNetwork(const AlignConfig& config, std::size_t vocab_size, std::uint64_t seed);
  IdentificationNetwork(const IdentificationNetwork&) = delete;
  IdentificationNetwork& operator=(const IdentificationNetwork&) = delete;

  const AlignConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  std::size_t num_patches() const { return vision_.num_patches(); }

  const nn::VisionEncoder& vision() const { return vision_; }
  const nn::TextEncoder& text() const { return text_; }
  const CommonSpaceProjections& projections() const { return proj_; }

  // L1 over a batch. Masks for the auxiliary losses are drawn from `rng`.
  AlignLosses losses(std::span<const AlignSample> batch, Rng& rng) const;
  // Same, with explicitly supplied masks (one list per sample).
  AlignLosses losses(std::span<const AlignSample> batch,
                     const std::vector<std::vector<std::size_t>>& image_masks,
                     const std::vector<std::vector<std::size_t>>& text_masks) const;

  // Projected per-patch features E'_v of an image, [N_v, d_c].
  ad::Tensor local_features(const ad::Tensor& patches) const;
  SaliencyMap saliency_map(const ImageGrid& image) const;
  SaliencyMap saliency_map(const ad::Tensor& patches) const;

 private:
  AlignConfig config_;
  nn::ParameterSet params_;
  Rng init_rng_;
  nn::VisionEncoder vision_;
  nn::TextEncoder text_;
  CommonSpaceProjections proj_;
  nn::Linear pixel_head_;
  nn::Linear token_head_;
};

// Random subset of `count` positions out of `n`, at least one, sorted.
std::vector<std::size_t> random_mask(std::size_t n, double ratio, Rng& rng);
// Masks a `ratio` share of the word positions (excluding BOS/EOS).
std::vector<std::size_t> random_token_mask(const text::TokenSequence& ids, double ratio, Rng& rng);

struct AlignEpochLog {
  std::size_t epoch = 0;
  double image = 0.0;
  double text = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
};

struct AlignTrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  optim::AdamConfig adam;
  std::uint64_t seed = 0;
  std::function<void(const AlignEpochLog&)> on_epoch;
};

// Minimizes L1 with Adam. On a non-finite loss the parameters are restored
// to the end of the last completed epoch and DivergenceError is thrown.
std::vector<AlignEpochLog> train_identification(IdentificationNetwork& net,
                                                std::span<const AlignSample> samples,
                                                const AlignTrainOptions& options);

}  // namespace sisr::align
