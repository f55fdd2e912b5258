#include "sisr/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sisr/error.hpp"
#include "sisr/ops.hpp"

namespace sisr::align {

using ad::Tensor;

Pooled project_and_pool(const Tensor& vision_tokens, const Tensor& text_tokens,
                        const CommonSpaceProjections& proj) {
  Pooled p;
  p.local_vision = proj.vision(vision_tokens);
  p.local_text = proj.text(text_tokens);
  p.global_vision = ad::max_over_tokens(p.local_vision);
  p.global_text = ad::max_over_tokens(p.local_text);
  return p;
}

namespace {

Tensor stack(const std::vector<Tensor>& rows) {
  std::vector<Tensor> parts;
  parts.reserve(rows.size());
  for (const auto& r : rows) parts.push_back(ad::reshape(r, {1, r.numel()}));
  return ad::concat_rows(parts);
}

void require_nonzero(const std::vector<Tensor>& features, const char* modality) {
  for (std::size_t i = 0; i < features.size(); ++i) {
    double s = 0.0;
    for (double v : features[i].data()) s += v * v;
    if (s == 0.0) {
      throw UndefinedError(std::string("contrastive alignment: zero-norm ") + modality +
                           " feature for sample " + std::to_string(i));
    }
  }
}

}  // namespace

ContrastiveTerms contrastive_bidirectional(const std::vector<Tensor>& global_vision,
                                           const std::vector<Tensor>& global_text, double tau,
                                           double weight_vision_to_text,
                                           double weight_text_to_vision) {
  if (global_vision.empty() || global_vision.size() != global_text.size()) {
    throw ShapeError("contrastive alignment needs equally many image and text features, got " +
                     std::to_string(global_vision.size()) + " and " +
                     std::to_string(global_text.size()));
  }
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  require_nonzero(global_vision, "image");
  require_nonzero(global_text, "text");
  const Tensor sim = ad::scale(ad::cosine_matrix(stack(global_vision), stack(global_text)), 1.0 / tau);
  std::vector<std::size_t> diag(global_vision.size());
  std::iota(diag.begin(), diag.end(), 0);
  ContrastiveTerms out;
  out.vision_to_text = ad::cross_entropy(sim, diag);
  out.text_to_vision = ad::cross_entropy(ad::transpose(sim), diag);
  out.total = ad::add(ad::scale(out.vision_to_text, weight_vision_to_text),
                      ad::scale(out.text_to_vision, weight_text_to_vision));
  return out;
}

Tensor masked_patch_mse(const Tensor& predicted, const Tensor& target,
                        std::span<const std::size_t> masked) {
  if (masked.empty()) throw ContractError("masked reconstruction needs at least one masked patch");
  if (predicted.shape() != target.shape()) {
    throw ShapeError("reconstruction shape " + shape_string(predicted.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const Tensor diff = ad::sub(ad::gather_rows(predicted, masked), ad::gather_rows(target, masked));
  return ad::mean(ad::square(diff));
}

Tensor masked_token_loss(const Tensor& logits, const text::TokenSequence& original,
                         std::span<const std::size_t> masked) {
  if (masked.empty()) throw ContractError("masked token loss needs at least one masked position");
  std::vector<std::size_t> targets;
  targets.reserve(masked.size());
  for (auto m : masked) targets.push_back(original.at(m));
  return ad::cross_entropy(ad::gather_rows(logits, masked), targets);
}

Tensor saliency_scores(const Tensor& local_features) {
  const Tensor global = ad::max_over_tokens(local_features);
  const std::size_t d = local_features.cols();
  for (std::size_t i = 0; i < local_features.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += local_features.at(i, j) * local_features.at(i, j);
    if (s == 0.0) {
      throw UndefinedError("saliency undefined: patch " + std::to_string(i) +
                           " has a zero-norm feature");
    }
  }
  double g = 0.0;
  for (double v : global.data()) g += v * v;
  if (g == 0.0) throw UndefinedError("saliency undefined: pooled image feature has zero norm");
  return ad::cosine_rows(local_features, global);
}

SaliencyMap to_saliency_map(const Tensor& scores) {
  SaliencyMap m;
  m.scores.assign(scores.data().begin(), scores.data().end());
  return m;
}

std::size_t salient_count(std::size_t num_patches, double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 1.0)) {
    throw ConfigError("k_percent must lie in (0, 1], got " + std::to_string(k_percent));
  }
  // The small slack keeps products such as 0.29 * 100 from flooring to 28.
  const auto n = static_cast<std::size_t>(std::floor(k_percent * static_cast<double>(num_patches) + 1e-9));
  return std::clamp<std::size_t>(n, 1, num_patches);
}

SalientRegionSet select_salient(const SaliencyMap& map, double k_percent) {
  if (map.scores.empty()) throw ContractError("cannot select salient regions from an empty map");
  const std::size_t count = salient_count(map.size(), k_percent);
  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return map.scores[a] > map.scores[b]; });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return {std::move(order), k_percent};
}

std::vector<std::size_t> random_mask(std::size_t n, double ratio, Rng& rng) {
  auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, 1, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> random_token_mask(const text::TokenSequence& ids, double ratio, Rng& rng) {
  std::vector<std::size_t> words;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != text::kBos && ids[i] != text::kEos && ids[i] != text::kPad) words.push_back(i);
  if (words.empty()) throw ContractError("token masking needs at least one word position");
  const auto pick = random_mask(words.size(), ratio, rng);
  std::vector<std::size_t> out;
  out.reserve(pick.size());
  for (auto p : pick) out.push_back(words[p]);
  return out;
}

IdentificationNetwork::IdentificationNetwork(const AlignConfig& config, std::size_t vocab_size,
                                             std::uint64_t seed)
    : config_(config),
      init_rng_(seed),
      vision_(params_, "ident.vision", config.patch_size * config.patch_size * config.channels,
              patch_count(config.image_size, config.image_size, config.patch_size), config.vision,
              init_rng_),
      text_(params_, "ident.text", vocab_size, config.max_tokens, config.text, init_rng_),
      proj_{nn::Linear(params_, "ident.proj_vision", config.vision.width, config.common_width,
                       init_rng_),
            nn::Linear(params_, "ident.proj_text", config.text.width, config.common_width,
                       init_rng_)},
      pixel_head_(params_, "ident.pixel_head", config.vision.width,
                  config.patch_size * config.patch_size * config.channels, init_rng_),
      token_head_(params_, "ident.token_head", config.text.width, vocab_size, init_rng_) {}

AlignLosses IdentificationNetwork::losses(std::span<const AlignSample> batch, Rng& rng) const {
  std::vector<std::vector<std::size_t>> image_masks, text_masks;
  for (const auto& s : batch) {
    image_masks.push_back(random_mask(s.patches.rows(), config_.image_mask_ratio, rng));
    text_masks.push_back(random_token_mask(s.tokens, config_.text_mask_ratio, rng));
  }
  return losses(batch, image_masks, text_masks);
}

AlignLosses IdentificationNetwork::losses(
    std::span<const AlignSample> batch, const std::vector<std::vector<std::size_t>>& image_masks,
    const std::vector<std::vector<std::size_t>>& text_masks) const {
  if (batch.empty()) throw ContractError("identification loss needs a non-empty batch");
  if (image_masks.size() != batch.size() || text_masks.size() != batch.size()) {
    throw ContractError("one image mask and one text mask are required per sample");
  }
  std::vector<Tensor> image_terms, text_terms, gv, gt;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const Tensor masked_v = vision_.encode(s.patches, image_masks[b]);
    image_terms.push_back(masked_patch_mse(pixel_head_(masked_v), s.patches, image_masks[b]));

    text::TokenSequence corrupted = s.tokens;
    for (auto m : text_masks[b]) corrupted.at(m) = text::kMask;
    const Tensor masked_t = text_.encode(corrupted);
    text_terms.push_back(masked_token_loss(token_head_(masked_t), s.tokens, text_masks[b]));

    const Pooled pooled = project_and_pool(vision_.encode(s.patches), text_.encode(s.tokens), proj_);
    gv.push_back(pooled.global_vision);
    gt.push_back(pooled.global_text);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  AlignLosses out;
  out.image = ad::scale(ad::sum(ad::concat_rows(image_terms)), inv);
  out.text = ad::scale(ad::sum(ad::concat_rows(text_terms)), inv);
  out.contrastive = contrastive_bidirectional(gv, gt, config_.tau, config_.lambda_vision_to_text,
                                              config_.lambda_text_to_vision)
                        .total;
  out.total = ad::add(ad::add(ad::scale(out.image, config_.lambda_image),
                              ad::scale(out.text, config_.lambda_text)),
                      ad::scale(out.contrastive, config_.lambda_bi));
  return out;
}

Tensor IdentificationNetwork::local_features(const Tensor& patches) const {
  return proj_.vision(vision_.encode(patches));
}

SaliencyMap IdentificationNetwork::saliency_map(const ImageGrid& image) const {
  return saliency_map(patchify(image, config_.patch_size));
}

SaliencyMap IdentificationNetwork::saliency_map(const Tensor& patches) const {
  return to_saliency_map(saliency_scores(local_features(patches)));
}

std::vector<AlignEpochLog> train_identification(IdentificationNetwork& net,
                                                std::span<const AlignSample> samples,
                                                const AlignTrainOptions& options) {
  if (samples.empty()) throw ContractError("identification training needs samples");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  optim::Adam adam(net.params(), options.adam);
  Rng rng(options.seed);
  io::TensorBundle last_good = net.params().to_bundle();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<AlignEpochLog> logs;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    AlignEpochLog log;
    log.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      // A trailing single pair has no negatives; skip it.
      if (end - start < 2 && order.size() >= 2) break;
      std::vector<AlignSample> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);
      ad::Tape tape;
      AlignLosses l;
      {
        ad::TapeScope scope(tape);
        l = net.losses(batch, rng);
      }
      const double total = l.total.item();
      if (!std::isfinite(total)) {
        net.params().load(last_good);
        throw DivergenceError("identification loss became non-finite in epoch " +
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
      log.text += l.text.item();
      log.contrastive += l.contrastive.item();
      log.total += total;
      ++batches;
    }
    if (batches > 0) {
      const double inv = 1.0 / static_cast<double>(batches);
      log.image *= inv;
      log.text *= inv;
      log.contrastive *= inv;
      log.total *= inv;
    }
    last_good = net.params().to_bundle();
    logs.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
  }
  return logs;
}

}  // namespace sisr::align
