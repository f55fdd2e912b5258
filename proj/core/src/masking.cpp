#include "sisr/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sisr/error.hpp"
#include "sisr/rng.hpp"

namespace sisr::rrg {

std::size_t masked_count(std::size_t num_patches, double target_rate) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw ConfigError("mask rate must lie in (0, 1), got " + std::to_string(target_rate));
  }
  const auto count =
      static_cast<std::size_t>(std::llround(target_rate * static_cast<double>(num_patches)));
  if (count == 0 || count >= num_patches) {
    throw ContractError("degenerate mask plan: rate " + std::to_string(target_rate) + " masks " +
                        std::to_string(count) + " of " + std::to_string(num_patches) + " patches");
  }
  return count;
}

MaskPlan masking_plan_from_draws(const align::SalientRegionSet& salient,
                                 std::span<const double> draws, double phi, double target_rate) {
  if (!(phi >= 0.0)) throw ConfigError("phi must be non-negative, got " + std::to_string(phi));
  const std::size_t n = draws.size();
  const std::size_t count = masked_count(n, target_rate);
  MaskPlan plan;
  plan.target_rate = target_rate;
  plan.probabilities.assign(draws.begin(), draws.end());
  for (auto i : salient.indices) {
    if (i >= n) {
      throw ShapeError("salient patch " + std::to_string(i) + " outside " + std::to_string(n) +
                       " patches");
    }
    plan.probabilities[i] += phi;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return plan.probabilities[a] > plan.probabilities[b];
  });
  order.resize(count);
  std::sort(order.begin(), order.end());
  plan.masked = std::move(order);
  return plan;
}

MaskPlan masking_plan(const align::SalientRegionSet& salient, std::size_t num_patches, double phi,
                      double target_rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> draws(num_patches);
  for (auto& d : draws) d = rng.uniform();
  return masking_plan_from_draws(salient, draws, phi, target_rate);
}

}  // namespace sisr::rrg
