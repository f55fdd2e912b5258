#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sisr/layers.hpp"
#include "sisr/vocab.hpp"

namespace sisr::nn {

struct EncoderConfig {
  std::size_t width = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  // Feed-forward hidden width as a multiple of `width`.
  std::size_t ffn_mult = 2;
};

// Patch-embedding transformer encoder with learned additive positional
// embeddings and a learned mask embedding for masked image modeling.
class VisionEncoder {
 public:
  VisionEncoder(ParameterSet& params, const std::string& name, std::size_t patch_dim,
                std::size_t num_patches, const EncoderConfig& config, Rng& rng);

  // patches: [N_v, patch_dim]. Rows listed in `masked` have their patch
  // embedding replaced by the mask embedding. Returns [N_v, width].
  ad::Tensor encode(const ad::Tensor& patches, std::span<const std::size_t> masked = {},
                    std::vector<ad::Tensor>* attention = nullptr) const;

  std::size_t width() const { return width_; }
  std::size_t num_patches() const { return num_patches_; }
  std::size_t patch_dim() const { return embed_.in_features(); }
  const ad::Tensor& positions() const { return positions_; }

 private:
  Linear embed_;
  ad::Tensor positions_;
  ad::Tensor mask_token_;
  std::vector<EncoderBlock> blocks_;
  LayerNorm final_;
  std::size_t width_;
  std::size_t num_patches_;
};

// Token-embedding transformer encoder. PAD positions are excluded as
// attention keys.
class TextEncoder {
 public:
  TextEncoder(ParameterSet& params, const std::string& name, std::size_t vocab_size,
              std::size_t max_tokens, const EncoderConfig& config, Rng& rng);

  // Returns [N_t, width].
  ad::Tensor encode(const text::TokenSequence& ids,
                    std::vector<ad::Tensor>* attention = nullptr) const;

  std::size_t width() const { return width_; }
  std::size_t max_tokens() const { return positions_.dim(0); }

 private:
  ad::Tensor embedding_;
  ad::Tensor positions_;
  std::vector<EncoderBlock> blocks_;
  LayerNorm final_;
  std::size_t width_;
  std::size_t vocab_size_;
};

// Autoregressive transformer decoder over a memory sequence.
class TextDecoder {
 public:
  TextDecoder(ParameterSet& params, const std::string& name, std::size_t vocab_size,
              std::size_t max_tokens, std::size_t memory_width, const EncoderConfig& config,
              Rng& rng);

  // Memory projected to the decoder width with per-layer cross-attention
  // keys/values, reusable across decoding steps.
  struct Context {
    std::vector<KeyValue> layers;
  };
  Context prepare(const ad::Tensor& memory) const;

  // Teacher-forced logits [inputs.size(), V] with causal self-attention.
  ad::Tensor logits(const text::TokenSequence& inputs, const Context& context) const;

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t max_tokens() const { return positions_.dim(0); }

 private:
  ad::Tensor embedding_;
  ad::Tensor positions_;
  Linear memory_proj_;
  std::vector<DecoderBlock> blocks_;
  LayerNorm final_;
  Linear output_;
  std::size_t vocab_size_;
};

}  // namespace sisr::nn
