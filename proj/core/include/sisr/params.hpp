#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sisr/serialize.hpp"
#include "sisr/tensor.hpp"

namespace sisr::nn {

// Ordered, named collection of trainable leaves. Tensors are shared with the
// owning modules, so in-place updates are visible to them.
class ParameterSet {
 public:
  // Marks `tensor` as requiring grad and registers it. Names must be unique.
  ad::Tensor add(std::string name, ad::Tensor tensor);
  void append(const ParameterSet& other);

  const std::vector<io::NamedTensor>& items() const { return items_; }
  const ad::Tensor* find(std::string_view name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Global L2 norm of the accumulated gradients.
  double grad_norm() const;

  // Snapshot of current values, detached from the graph.
  io::TensorBundle to_bundle() const;
  // Copies values from `bundle`; every parameter must be present with the
  // same shape.
  void load(const io::TensorBundle& bundle);

 private:
  std::vector<io::NamedTensor> items_;
};

}  // namespace sisr::nn
