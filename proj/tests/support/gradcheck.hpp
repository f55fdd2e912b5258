#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sisr/params.hpp"
#include "sisr/tensor.hpp"

namespace sisr::testing {

struct Leaf {
  std::string name;
  ad::Tensor tensor;
};

struct GradCheck {
  // Largest per-tensor ||analytic - numeric|| / max(||analytic||, ||numeric||).
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t entries_checked = 0;
};

// Compares reverse-mode gradients of `loss` with central differences.
// `loss` must rebuild the graph from the current leaf values. When
// `max_entries` is non-zero, that many random entries per leaf are probed.
GradCheck check_gradients(const std::vector<Leaf>& leaves, const std::function<ad::Tensor()>& loss,
                          double step = 1e-5, std::size_t max_entries = 0,
                          std::uint64_t seed = 1);

std::vector<Leaf> leaves_of(const nn::ParameterSet& params);

}  // namespace sisr::testing
