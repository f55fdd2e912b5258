#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sisr/params.hpp"
#include "sisr/rng.hpp"
#include "sisr/tensor.hpp"

namespace sisr::nn {

// Additive attention-mask value for excluded keys; exp() of it underflows to
// exactly zero after max subtraction.
inline constexpr double kMaskedScore = -1e9;

struct Linear {
  ad::Tensor weight;  // [in, out]
  ad::Tensor bias;    // [out]

  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  ad::Tensor operator()(const ad::Tensor& x) const;
};

struct LayerNorm {
  ad::Tensor gain;
  ad::Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, std::size_t width);
  ad::Tensor operator()(const ad::Tensor& x) const;
};

// Pre-computed keys and values of an attention source.
struct KeyValue {
  ad::Tensor keys;
  ad::Tensor values;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& name, std::size_t width,
                     std::size_t heads, Rng& rng);

  KeyValue project(const ad::Tensor& source) const;
  // `mask` is an optional additive [queries x keys] tensor. When `weights`
  // is given, the per-head attention probabilities are appended to it.
  ad::Tensor attend(const ad::Tensor& queries, const KeyValue& kv, const ad::Tensor* mask,
                    std::vector<ad::Tensor>* weights = nullptr) const;
  ad::Tensor operator()(const ad::Tensor& queries, const ad::Tensor& source,
                        const ad::Tensor* mask, std::vector<ad::Tensor>* weights = nullptr) const {
    return attend(queries, project(source), mask, weights);
  }

 private:
  Linear q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

struct FeedForward {
  Linear up;
  Linear down;

  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& name, std::size_t width,
              std::size_t hidden, Rng& rng);
  ad::Tensor operator()(const ad::Tensor& x) const;
};

// Pre-norm self-attention block.
class EncoderBlock {
 public:
  EncoderBlock(ParameterSet& params, const std::string& name, std::size_t width,
               std::size_t heads, std::size_t hidden, Rng& rng);
  ad::Tensor operator()(const ad::Tensor& x, const ad::Tensor* mask,
                        std::vector<ad::Tensor>* weights = nullptr) const;

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
};

// Pre-norm block with causal self-attention followed by cross-attention.
class DecoderBlock {
 public:
  DecoderBlock(ParameterSet& params, const std::string& name, std::size_t width,
               std::size_t heads, std::size_t hidden, Rng& rng);
  KeyValue project_memory(const ad::Tensor& memory) const;
  ad::Tensor operator()(const ad::Tensor& x, const KeyValue& memory,
                        const ad::Tensor& causal_mask) const;

 private:
  LayerNorm ln1_, ln2_, ln3_;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward ffn_;
};

// Additive mask with kMaskedScore above the diagonal.
ad::Tensor causal_mask(std::size_t length);
// N(0, stddev^2) initialized tensor.
ad::Tensor normal_init(ad::Shape shape, double stddev, Rng& rng);

}  // namespace sisr::nn
