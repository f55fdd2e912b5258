#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sisr/align.hpp"

namespace sisr::rrg {

struct MaskPlan {
  std::vector<double> probabilities;      // U(0,1) draw plus phi on salient patches
  std::vector<std::size_t> masked;        // strictly increasing
  double target_rate = 0.0;
};

// round(rate * n); throws ContractError when that is 0 or n.
std::size_t masked_count(std::size_t num_patches, double target_rate);

// Masks the round(rate * N_v) patches with the largest p_i, ties to the lower
// index. Draws come from Rng(seed), one per patch in order.
MaskPlan masking_plan(const align::SalientRegionSet& salient, std::size_t num_patches, double phi,
                      double target_rate, std::uint64_t seed);
// Same selection from caller-supplied base draws.
MaskPlan masking_plan_from_draws(const align::SalientRegionSet& salient,
                                 std::span<const double> draws, double phi, double target_rate);

}  // namespace sisr::rrg
