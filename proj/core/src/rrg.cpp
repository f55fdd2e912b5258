#include "sisr/rrg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sisr/error.hpp"
#include "sisr/image.hpp"
#include "sisr/ops.hpp"

namespace sisr::rrg {

using ad::Tensor;

Tensor mim_loss(const Tensor& predicted, const Tensor& target, std::span<const std::size_t> masked,
                MimDistance distance) {
  if (masked.empty()) throw ContractError("masked image modeling needs a non-empty mask set");
  if (predicted.shape() != target.shape()) {
    throw ShapeError("reconstruction shape " + shape_string(predicted.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const Tensor diff = ad::sub(ad::gather_rows(predicted, masked), ad::gather_rows(target, masked));
  if (distance == MimDistance::kPixelMse) return ad::mean(ad::square(diff));
  return ad::mean(ad::row_norms(diff));
}

Tensor saliency_weighted_sum(const align::SaliencyMap& map, const Tensor& features) {
  if (features.rank() != 2 || map.size() != features.dim(0)) {
    throw ShapeError("saliency map of length " + std::to_string(map.size()) +
                     " does not match features " + shape_string(features.shape()));
  }
  const Tensor row = Tensor::matrix(1, map.size(), map.scores);
  return ad::matmul(row, features);
}

Tensor saliency_token(const align::SaliencyMap& map, const Tensor& features,
                      const nn::LayerNorm& norm) {
  return norm(saliency_weighted_sum(map, features));
}

text::TokenSequence decoder_inputs(const text::TokenSequence& reference) {
  if (reference.size() < 2) throw ContractError("reference report is empty");
  return {reference.begin(), reference.end() - 1};
}

text::TokenSequence decoder_targets(const text::TokenSequence& reference) {
  if (reference.size() < 2) throw ContractError("reference report is empty");
  return {reference.begin() + 1, reference.end()};
}

Tensor report_loss(const Tensor& confidences, const text::TokenSequence& reference) {
  const auto targets = decoder_targets(reference);
  if (confidences.rank() != 2 || confidences.dim(0) != targets.size()) {
    throw ShapeError("confidences " + shape_string(confidences.shape()) + " do not cover " +
                     std::to_string(targets.size()) + " reference positions");
  }
  return ad::scale(ad::mean(ad::log(ad::pick(confidences, targets))), -1.0);
}

Tensor report_loss_from_logits(const Tensor& logits, const text::TokenSequence& reference) {
  const auto targets = decoder_targets(reference);
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("logits " + shape_string(logits.shape()) + " do not cover " +
                     std::to_string(targets.size()) + " reference positions");
  }
  return ad::cross_entropy(logits, targets);
}

RrgNetwork::RrgNetwork(const RrgConfig& config, std::size_t vocab_size, std::uint64_t seed)
    : config_(config),
      init_rng_(seed),
      encoder_(params_, "rrg.vision", config.patch_size * config.patch_size * config.channels,
               patch_count(config.image_size, config.image_size, config.patch_size), config.vision,
               init_rng_),
      pixel_head_(params_, "rrg.pixel_head", config.vision.width,
                  config.patch_size * config.patch_size * config.channels, init_rng_),
      saliency_norm_(params_, "rrg.saliency_norm", config.vision.width),
      decoder_(params_, "rrg.decoder", vocab_size, config.max_tokens, config.vision.width,
               config.decoder, init_rng_) {}

Tensor RrgNetwork::mim_forward_loss(const Tensor& patches, const MaskPlan& plan) const {
  if (patches.rows() != plan.probabilities.size()) {
    throw ShapeError("mask plan for " + std::to_string(plan.probabilities.size()) +
                     " patches applied to " + std::to_string(patches.rows()));
  }
  const Tensor encoded = encoder_.encode(patches, plan.masked);
  return mim_loss(pixel_head_(encoded), patches, plan.masked, config_.distance);
}

nn::TextDecoder::Context RrgNetwork::context(const Tensor& patches, const align::SaliencyMap& map,
                                             bool zero_saliency_token) const {
  const Tensor features = encoder_.encode(patches);
  Tensor token;
  if (config_.use_saliency_token && !zero_saliency_token) {
    token = saliency_token(map, features, saliency_norm_);
  } else {
    token = Tensor({1, features.cols()}, 0.0);
  }
  return decoder_.prepare(ad::concat_rows({token, features}));
}

Tensor RrgNetwork::logits(const text::TokenSequence& inputs,
                          const nn::TextDecoder::Context& ctx) const {
  return decoder_.logits(inputs, ctx);
}

MaskPlan RrgNetwork::plan_for(const RrgSample& sample, std::uint64_t seed) const {
  return masking_plan(sample.salient, sample.patches.rows(), config_.phi, config_.mask_rate, seed);
}

RrgLosses RrgNetwork::losses(std::span<const RrgSample> batch,
                             std::span<const MaskPlan> plans) const {
  if (batch.empty()) throw ContractError("report generation loss needs a non-empty batch");
  if (plans.size() != batch.size()) throw ContractError("one mask plan is required per sample");
  std::vector<Tensor> image_terms, report_terms;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    image_terms.push_back(mim_forward_loss(s.patches, plans[b]));
    if (config_.lambda_report != 0.0) {
      const auto ctx = context(s.patches, s.saliency);
      report_terms.push_back(report_loss_from_logits(logits(decoder_inputs(s.tokens), ctx), s.tokens));
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  RrgLosses out;
  out.image = ad::scale(ad::sum(ad::concat_rows(image_terms)), inv);
  out.report = report_terms.empty() ? Tensor::scalar(0.0)
                                    : ad::scale(ad::sum(ad::concat_rows(report_terms)), inv);
  out.total = ad::add(ad::scale(out.image, config_.lambda_image),
                      ad::scale(out.report, config_.lambda_report));
  return out;
}

std::vector<RrgEpochLog> train_rrg(RrgNetwork& net, std::span<const RrgSample> samples,
                                   const RrgTrainOptions& options) {
  if (samples.empty()) throw ContractError("report generation training needs samples");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  optim::Adam adam(net.params(), options.adam);
  Rng rng(options.seed);
  io::TensorBundle last_good = net.params().to_bundle();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<RrgEpochLog> logs;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    RrgEpochLog log;
    log.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<RrgSample> batch;
      std::vector<MaskPlan> plans;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(samples[order[i]]);
        plans.push_back(net.plan_for(batch.back(),
                                     Rng::mix(options.seed, epoch * samples.size() + order[i])));
      }
      ad::Tape tape;
      RrgLosses l;
      {
        ad::TapeScope scope(tape);
        l = net.losses(batch, plans);
      }
      const double total = l.total.item();
      if (!std::isfinite(total)) {
        net.params().load(last_good);
        throw DivergenceError("report generation loss became non-finite in epoch " +
                              std::to_string(epoch + 1));
      }
      adam.zero_grad();
      tape.backward(l.total);
      try {
        adam.step();
      } catch (const DivergenceError&) {
        net.params().load(last_good);
        throw;
      }
      log.image += l.image.item();
      log.report += l.report.item();
      log.total += total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    log.image *= inv;
    log.report *= inv;
    log.total *= inv;
    last_good = net.params().to_bundle();
    logs.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
  }
  return logs;
}

}  // namespace sisr::rrg
