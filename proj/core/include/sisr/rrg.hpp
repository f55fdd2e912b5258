#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sisr/align.hpp"
#include "sisr/encoders.hpp"
#include "sisr/masking.hpp"
#include "sisr/optim.hpp"
#include "sisr/vocab.hpp"

// Report generation network: saliency-guided masked image modeling plus a
// decoder conditioned on the saliency token and the patch features.
namespace sisr::rrg {

enum class MimDistance {
  kPixelMse,   // mean squared error over the pixels of each masked patch
  kPatchNorm,  // unsquared L2 norm of each masked patch residual
};

// Mean over masked patches of the per-patch distance.
ad::Tensor mim_loss(const ad::Tensor& predicted, const ad::Tensor& target,
                    std::span<const std::size_t> masked, MimDistance distance);

// M_S * E_I with M_S as a 1 x N_v row, shape [1, d_v].
ad::Tensor saliency_weighted_sum(const align::SaliencyMap& map, const ad::Tensor& features);
// w' = LayerNorm(M_S * E_I), shape [1, d_v].
ad::Tensor saliency_token(const align::SaliencyMap& map, const ad::Tensor& features,
                          const nn::LayerNorm& norm);

// -(1/l) sum_i log yhat[i, y_i] where row i of `confidences` predicts
// reference[i + 1]. The reference includes its leading BOS.
ad::Tensor report_loss(const ad::Tensor& confidences, const text::TokenSequence& reference);
// Same quantity from unnormalized decoder logits.
ad::Tensor report_loss_from_logits(const ad::Tensor& logits, const text::TokenSequence& reference);

// Teacher-forcing split of [BOS, w..., EOS] into decoder inputs and targets.
text::TokenSequence decoder_inputs(const text::TokenSequence& reference);
text::TokenSequence decoder_targets(const text::TokenSequence& reference);

struct RrgConfig {
  nn::EncoderConfig vision;
  nn::EncoderConfig decoder{64, 2, 4, 2};
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t channels = 1;
  std::size_t max_tokens = 64;
  double k_percent = 0.2;
  double phi = 0.35;
  double mask_rate = 0.75;
  double lambda_image = 1.0;
  double lambda_report = 0.1;
  // When false the saliency token is replaced by zeros.
  bool use_saliency_token = true;
  MimDistance distance = MimDistance::kPixelMse;
};

struct RrgSample {
  ad::Tensor patches;
  text::TokenSequence tokens;
  align::SaliencyMap saliency;
  align::SalientRegionSet salient;
};

struct RrgLosses {
  ad::Tensor image;   // L_I
  ad::Tensor report;  // L_R
  ad::Tensor total;   // L2
};

class RrgNetwork {
 public:
  RrgNetwork(const RrgConfig& config, std::size_t vocab_size, std::uint64_t seed);
  RrgNetwork(const RrgNetwork&) = delete;
  RrgNetwork& operator=(const RrgNetwork&) = delete;

  const RrgConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  std::size_t num_patches() const { return encoder_.num_patches(); }
  std::size_t vocab_size() const { return decoder_.vocab_size(); }
  std::size_t max_tokens() const { return decoder_.max_tokens(); }

  // Encodes with the planned patches masked and reconstructs them.
  ad::Tensor mim_forward_loss(const ad::Tensor& patches, const MaskPlan& plan) const;

  // Decoder memory [w'; E_I] for an unmasked image.
  nn::TextDecoder::Context context(const ad::Tensor& patches, const align::SaliencyMap& map,
                                   bool zero_saliency_token = false) const;
  ad::Tensor logits(const text::TokenSequence& inputs, const nn::TextDecoder::Context& ctx) const;

  MaskPlan plan_for(const RrgSample& sample, std::uint64_t seed) const;
  RrgLosses losses(std::span<const RrgSample> batch, std::span<const MaskPlan> plans) const;

 private:
  RrgConfig config_;
  nn::ParameterSet params_;
  Rng init_rng_;
  nn::VisionEncoder encoder_;
  nn::Linear pixel_head_;
  nn::LayerNorm saliency_norm_;
  nn::TextDecoder decoder_;
};

struct RrgEpochLog {
  std::size_t epoch = 0;
  double image = 0.0;
  double report = 0.0;
  double total = 0.0;
};

struct RrgTrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  optim::AdamConfig adam;
  std::uint64_t seed = 0;
  std::function<void(const RrgEpochLog&)> on_epoch;
};

// Minimizes L2 with Adam; mask plans are seeded per (epoch, sample). On a
// non-finite loss the parameters revert to the last completed epoch and
// DivergenceError is thrown.
std::vector<RrgEpochLog> train_rrg(RrgNetwork& net, std::span<const RrgSample> samples,
                                   const RrgTrainOptions& options);

}  // namespace sisr::rrg
