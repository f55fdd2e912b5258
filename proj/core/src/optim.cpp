#include "sisr/optim.hpp"

#include <cmath>

#include "sisr/error.hpp"

namespace sisr {

namespace nn {

ad::Tensor ParameterSet::add(std::string name, ad::Tensor tensor) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  items_.push_back({std::move(name), tensor});
  return tensor;
}

void ParameterSet::append(const ParameterSet& other) {
  for (const auto& [name, t] : other.items_) add(name, t);
}

const ad::Tensor* ParameterSet::find(std::string_view name) const {
  for (const auto& it : items_)
    if (it.name == name) return &it.tensor;
  return nullptr;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& it : items_) it.tensor.zero_grad();
}

double ParameterSet::grad_norm() const {
  double s = 0.0;
  for (const auto& it : items_)
    for (double g : it.tensor.grad()) s += g * g;
  return std::sqrt(s);
}

io::TensorBundle ParameterSet::to_bundle() const {
  io::TensorBundle b;
  for (const auto& it : items_) b.tensors.push_back({it.name, it.tensor.detach()});
  return b;
}

void ParameterSet::load(const io::TensorBundle& bundle) {
  for (auto& it : items_) {
    const ad::Tensor* src = bundle.find(it.name);
    if (src == nullptr) throw IoError("checkpoint is missing parameter '" + it.name + "'");
    if (src->shape() != it.tensor.shape()) {
      throw IoError("parameter '" + it.name + "' has shape " + shape_string(src->shape()) +
                    " in checkpoint, expected " + shape_string(it.tensor.shape()));
    }
    auto dst = it.tensor.mutable_data();
    std::copy(src->data().begin(), src->data().end(), dst.begin());
  }
}

}  // namespace nn

namespace optim {

Adam::Adam(nn::ParameterSet params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& it : params_.items()) {
    m_.emplace_back(it.tensor.numel(), 0.0);
    v_.emplace_back(it.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double factor = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = params_.grad_norm();
    if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
    if (norm > config_.clip_norm) factor = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto& items = params_.items();
  for (std::size_t p = 0; p < items.size(); ++p) {
    ad::Tensor t = items[p].tensor;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * factor;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= config_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
    }
  }
}

}  // namespace optim

}  // namespace sisr
