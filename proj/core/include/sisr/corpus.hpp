#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sisr/image.hpp"

namespace sisr::corpus {

inline constexpr std::size_t kKindCount = 8;

enum class LesionKind : std::uint8_t {
  kOpacity,
  kEffusion,
  kNodule,
  kMass,
  kDevice,
  kConsolidation,
  kAtelectasis,
  kCalcification,
};

enum class Severity : std::uint8_t { kMild, kModerate, kSevere };

std::string_view kind_name(LesionKind kind);
std::string_view severity_name(Severity severity);

// One planted abnormality. The center is in pixel coordinates and lies inside
// the patch-grid cell (cell_row, cell_col).
struct LesionSpec {
  LesionKind kind = LesionKind::kOpacity;
  Severity severity = Severity::kMild;
  std::size_t cell_row = 0;
  std::size_t cell_col = 0;
  double center_y = 0.0;
  double center_x = 0.0;
  // Derived from severity; strictly increasing from mild to severe.
  double radius = 0.0;
  double contrast = 0.0;

  // Whether the pixel centered at (y + 0.5, x + 0.5) belongs to the lesion.
  bool covers(std::size_t y, std::size_t x) const;
  // Signed intensity added at that pixel; 0 outside the footprint.
  double intensity(std::size_t y, std::size_t x) const;
};

// Builds a lesion at a cell, with the center offset (in pixels, each in
// [0, patch_size)) from the cell's top-left corner.
LesionSpec make_lesion(LesionKind kind, Severity severity, std::size_t cell_row,
                       std::size_t cell_col, double offset_y, double offset_x,
                       std::size_t patch_size);

// Presence flag per observation kind, indexed by LesionKind.
using ObservationLabelSet = std::bitset<kKindCount>;

struct PairedSample {
  std::string id;
  ImageGrid image;
  std::string report;
  std::vector<LesionSpec> lesions;
  // Sorted patch indices overlapping a rendered lesion.
  std::vector<std::size_t> lesion_patches;
  ObservationLabelSet labels;

  bool normal() const { return labels.none(); }
};

struct CorpusSpec {
  std::size_t num_samples = 512;
  double normal_ratio = 0.7;
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t max_lesions = 3;
  // Kinds drawn from the first `num_kinds` entries of LesionKind.
  std::size_t num_kinds = kKindCount;
  double noise = 0.02;
  std::uint64_t seed = 0;
};

// Throws ConfigError for out-of-range ratios or geometry.
void validate(const CorpusSpec& spec);

std::vector<PairedSample> generate_corpus(const CorpusSpec& spec);

// Renders background plus lesions and fills report, labels and
// lesion_patches.
PairedSample make_sample(std::string id, std::vector<LesionSpec> lesions, const CorpusSpec& spec,
                         std::uint64_t noise_seed);

std::string location_phrase(std::size_t cell_row, std::size_t cell_col, std::size_t grid);
std::string render_report(const std::vector<LesionSpec>& lesions, std::size_t grid);

// Patches whose area overlaps a rendered lesion in more than 10% of pixels.
std::vector<std::size_t> ground_truth_saliency(const PairedSample& sample, std::size_t patch_size);
std::vector<std::size_t> lesion_patches(const std::vector<LesionSpec>& lesions,
                                        std::size_t image_size, std::size_t patch_size);

ObservationLabelSet labels_of(const std::vector<LesionSpec>& lesions);
// Keyword parse: a kind is present iff its name appears in a sentence that
// does not start with "no".
ObservationLabelSet extract_labels(std::string_view report);

}  // namespace sisr::corpus
