#include "sisr/encoders.hpp"

#include "sisr/error.hpp"
#include "sisr/ops.hpp"

namespace sisr::nn {

namespace {
constexpr double kEmbedStd = 0.02;
constexpr double kTokenStd = 0.1;
}  // namespace

VisionEncoder::VisionEncoder(ParameterSet& params, const std::string& name,
                             std::size_t patch_dim, std::size_t num_patches,
                             const EncoderConfig& config, Rng& rng)
    : embed_(params, name + ".patch_embed", patch_dim, config.width, rng),
      width_(config.width),
      num_patches_(num_patches) {
  positions_ = params.add(name + ".pos", normal_init({num_patches, config.width}, kEmbedStd, rng));
  mask_token_ = params.add(name + ".mask_token", normal_init({config.width}, kEmbedStd, rng));
  for (std::size_t l = 0; l < config.depth; ++l) {
    blocks_.emplace_back(params, name + ".block" + std::to_string(l), config.width, config.heads,
                         config.width * config.ffn_mult, rng);
  }
  final_ = LayerNorm(params, name + ".final_ln", config.width);
}

ad::Tensor VisionEncoder::encode(const ad::Tensor& patches, std::span<const std::size_t> masked,
                                 std::vector<ad::Tensor>* attention) const {
  if (patches.rank() != 2 || patches.dim(1) != patch_dim() || patches.dim(0) != num_patches_) {
    throw ShapeError("vision encoder expects patches [" + std::to_string(num_patches_) + "x" +
                     std::to_string(patch_dim()) + "], got " + shape_string(patches.shape()));
  }
  ad::Tensor x = embed_(patches);
  if (!masked.empty()) x = ad::replace_rows(x, masked, mask_token_);
  x = ad::add(x, positions_);
  for (const auto& block : blocks_) x = block(x, nullptr, attention);
  return final_(x);
}

TextEncoder::TextEncoder(ParameterSet& params, const std::string& name, std::size_t vocab_size,
                         std::size_t max_tokens, const EncoderConfig& config, Rng& rng)
    : width_(config.width), vocab_size_(vocab_size) {
  embedding_ = params.add(name + ".embed", normal_init({vocab_size, config.width}, kTokenStd, rng));
  positions_ = params.add(name + ".pos", normal_init({max_tokens, config.width}, kEmbedStd, rng));
  for (std::size_t l = 0; l < config.depth; ++l) {
    blocks_.emplace_back(params, name + ".block" + std::to_string(l), config.width, config.heads,
                         config.width * config.ffn_mult, rng);
  }
  final_ = LayerNorm(params, name + ".final_ln", config.width);
}

ad::Tensor TextEncoder::encode(const text::TokenSequence& ids,
                               std::vector<ad::Tensor>* attention) const {
  const std::size_t n = ids.size();
  if (n == 0 || n > max_tokens()) {
    throw ShapeError("text encoder accepts 1.." + std::to_string(max_tokens()) + " tokens, got " +
                     std::to_string(n));
  }
  for (auto id : ids) {
    if (id >= vocab_size_) throw ShapeError("token id " + std::to_string(id) + " out of range");
  }
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  ad::Tensor x = ad::add(ad::gather_rows(embedding_, ids), ad::gather_rows(positions_, pos));

  ad::Tensor mask;
  bool any_pad = false;
  for (auto id : ids) any_pad = any_pad || id == text::kPad;
  if (any_pad) {
    mask = ad::Tensor({n, n}, 0.0);
    auto d = mask.mutable_data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (ids[j] == text::kPad) d[i * n + j] = kMaskedScore;
  }
  for (const auto& block : blocks_) x = block(x, any_pad ? &mask : nullptr, attention);
  return final_(x);
}

TextDecoder::TextDecoder(ParameterSet& params, const std::string& name, std::size_t vocab_size,
                         std::size_t max_tokens, std::size_t memory_width,
                         const EncoderConfig& config, Rng& rng)
    : memory_proj_(params, name + ".memory_proj", memory_width, config.width, rng),
      vocab_size_(vocab_size) {
  embedding_ = params.add(name + ".embed", normal_init({vocab_size, config.width}, kTokenStd, rng));
  positions_ = params.add(name + ".pos", normal_init({max_tokens, config.width}, kEmbedStd, rng));
  for (std::size_t l = 0; l < config.depth; ++l) {
    blocks_.emplace_back(params, name + ".block" + std::to_string(l), config.width, config.heads,
                         config.width * config.ffn_mult, rng);
  }
  final_ = LayerNorm(params, name + ".final_ln", config.width);
  output_ = Linear(params, name + ".output", config.width, vocab_size, rng);
}

TextDecoder::Context TextDecoder::prepare(const ad::Tensor& memory) const {
  const ad::Tensor projected = memory_proj_(memory);
  Context ctx;
  ctx.layers.reserve(blocks_.size());
  for (const auto& block : blocks_) ctx.layers.push_back(block.project_memory(projected));
  return ctx;
}

ad::Tensor TextDecoder::logits(const text::TokenSequence& inputs, const Context& context) const {
  const std::size_t n = inputs.size();
  if (n == 0 || n > max_tokens()) {
    throw ShapeError("decoder accepts 1.." + std::to_string(max_tokens()) + " tokens, got " +
                     std::to_string(n));
  }
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  ad::Tensor x = ad::add(ad::gather_rows(embedding_, inputs), ad::gather_rows(positions_, pos));
  const ad::Tensor mask = causal_mask(n);
  for (std::size_t l = 0; l < blocks_.size(); ++l) x = blocks_[l](x, context.layers[l], mask);
  return output_(final_(x));
}

}  // namespace sisr::nn
