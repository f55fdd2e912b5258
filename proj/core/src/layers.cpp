#include "sisr/layers.hpp"

#include <cmath>

#include "sisr/error.hpp"
#include "sisr/ops.hpp"

namespace sisr::nn {

ad::Tensor normal_init(ad::Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return ad::Tensor(std::move(shape), std::move(v));
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng) {
  // Glorot uniform.
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& x : w) x = rng.uniform(-a, a);
  weight = params.add(name + ".weight", ad::Tensor({in, out}, std::move(w)));
  bias = params.add(name + ".bias", ad::Tensor({out}, 0.0));
}

ad::Tensor Linear::operator()(const ad::Tensor& x) const {
  return ad::add_bias(ad::matmul(x, weight), bias);
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t width) {
  gain = params.add(name + ".gain", ad::Tensor({width}, 1.0));
  bias = params.add(name + ".bias", ad::Tensor({width}, 0.0));
}

ad::Tensor LayerNorm::operator()(const ad::Tensor& x) const {
  return ad::layer_norm(x, gain, bias);
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& name,
                                       std::size_t width, std::size_t heads, Rng& rng)
    : q_(params, name + ".q", width, width, rng),
      k_(params, name + ".k", width, width, rng),
      v_(params, name + ".v", width, width, rng),
      o_(params, name + ".o", width, width, rng),
      heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

KeyValue MultiHeadAttention::project(const ad::Tensor& source) const {
  return {k_(source), v_(source)};
}

ad::Tensor MultiHeadAttention::attend(const ad::Tensor& queries, const KeyValue& kv,
                                      const ad::Tensor* mask,
                                      std::vector<ad::Tensor>* weights) const {
  const ad::Tensor q = q_(queries);
  const std::size_t width = q.dim(1);
  const std::size_t dk = width / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<ad::Tensor> outs;
  outs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const ad::Tensor qh = heads_ == 1 ? q : ad::slice_cols(q, h * dk, dk);
    const ad::Tensor kh = heads_ == 1 ? kv.keys : ad::slice_cols(kv.keys, h * dk, dk);
    const ad::Tensor vh = heads_ == 1 ? kv.values : ad::slice_cols(kv.values, h * dk, dk);
    ad::Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (mask != nullptr) scores = ad::add(scores, *mask);
    ad::Tensor probs = ad::softmax(scores, 1);
    if (weights != nullptr) weights->push_back(probs);
    outs.push_back(ad::matmul(probs, vh));
  }
  return o_(heads_ == 1 ? outs[0] : ad::concat_cols(outs));
}

FeedForward::FeedForward(ParameterSet& params, const std::string& name, std::size_t width,
                         std::size_t hidden, Rng& rng)
    : up(params, name + ".up", width, hidden, rng), down(params, name + ".down", hidden, width, rng) {}

ad::Tensor FeedForward::operator()(const ad::Tensor& x) const { return down(ad::gelu(up(x))); }

EncoderBlock::EncoderBlock(ParameterSet& params, const std::string& name, std::size_t width,
                           std::size_t heads, std::size_t hidden, Rng& rng)
    : ln1_(params, name + ".ln1", width),
      ln2_(params, name + ".ln2", width),
      attn_(params, name + ".attn", width, heads, rng),
      ffn_(params, name + ".ffn", width, hidden, rng) {}

ad::Tensor EncoderBlock::operator()(const ad::Tensor& x, const ad::Tensor* mask,
                                    std::vector<ad::Tensor>* weights) const {
  const ad::Tensor h = ln1_(x);
  ad::Tensor y = ad::add(x, attn_(h, h, mask, weights));
  return ad::add(y, ffn_(ln2_(y)));
}

DecoderBlock::DecoderBlock(ParameterSet& params, const std::string& name, std::size_t width,
                           std::size_t heads, std::size_t hidden, Rng& rng)
    : ln1_(params, name + ".ln1", width),
      ln2_(params, name + ".ln2", width),
      ln3_(params, name + ".ln3", width),
      self_attn_(params, name + ".self_attn", width, heads, rng),
      cross_attn_(params, name + ".cross_attn", width, heads, rng),
      ffn_(params, name + ".ffn", width, hidden, rng) {}

KeyValue DecoderBlock::project_memory(const ad::Tensor& memory) const {
  return cross_attn_.project(memory);
}

ad::Tensor DecoderBlock::operator()(const ad::Tensor& x, const KeyValue& memory,
                                    const ad::Tensor& causal) const {
  const ad::Tensor h = ln1_(x);
  ad::Tensor y = ad::add(x, self_attn_(h, h, &causal));
  y = ad::add(y, cross_attn_.attend(ln2_(y), memory, nullptr));
  return ad::add(y, ffn_(ln3_(y)));
}

ad::Tensor causal_mask(std::size_t length) {
  ad::Tensor m({length, length}, 0.0);
  auto d = m.mutable_data();
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = i + 1; j < length; ++j) d[i * length + j] = kMaskedScore;
  return m;
}

}  // namespace sisr::nn
