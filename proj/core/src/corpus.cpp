#include "sisr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sisr/error.hpp"
#include "sisr/rng.hpp"
#include "sisr/vocab.hpp"

namespace sisr::corpus {

namespace {

constexpr std::array<std::string_view, kKindCount> kKindNames = {
    "opacity", "effusion", "nodule", "mass", "device", "consolidation", "atelectasis",
    "calcification"};
constexpr std::array<std::string_view, 3> kSeverityNames = {"mild", "moderate", "severe"};

// Support radius (pixels) and peak contrast by severity.
constexpr std::array<double, 3> kRadius = {3.0, 4.5, 6.0};
constexpr std::array<double, 3> kContrast = {0.22, 0.32, 0.42};

constexpr std::string_view kNormalOpening = "no acute findings .";
constexpr std::string_view kNormalSentences =
    "the mediastinum is unremarkable . the osseous structures are intact .";

// Minimum Chebyshev distance between lesion cells in one image.
constexpr std::size_t kCellSpacing = 3;

double background(std::size_t y, std::size_t x, std::size_t size) {
  const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
  const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
  return 0.42 + 0.08 * std::sin(std::numbers::pi * fy) + 0.06 * std::cos(2.0 * std::numbers::pi * fx);
}

}  // namespace

std::string_view kind_name(LesionKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::string_view severity_name(Severity severity) {
  return kSeverityNames[static_cast<std::size_t>(severity)];
}

bool LesionSpec::covers(std::size_t y, std::size_t x) const {
  const double dy = static_cast<double>(y) + 0.5 - center_y;
  const double dx = static_cast<double>(x) + 0.5 - center_x;
  const double d = std::hypot(dy, dx);
  switch (kind) {
    case LesionKind::kEffusion: {
      // Wide, flat band.
      const double ey = dy / (0.6 * radius), ex = dx / (1.5 * radius);
      return ey * ey + ex * ex <= 1.0;
    }
    case LesionKind::kNodule:
      return d <= 0.6 * radius;
    case LesionKind::kDevice:
      return std::abs(dx) <= 1.0 && std::abs(dy) <= radius;
    case LesionKind::kCalcification:
      return d <= radius && d >= 0.55 * radius;
    default:
      return d <= radius;
  }
}

double LesionSpec::intensity(std::size_t y, std::size_t x) const {
  if (!covers(y, x)) return 0.0;
  const double dy = static_cast<double>(y) + 0.5 - center_y;
  const double dx = static_cast<double>(x) + 0.5 - center_x;
  const double r2 = (dy * dy + dx * dx) / (radius * radius);
  switch (kind) {
    case LesionKind::kOpacity: {
      const double b = 1.0 - r2;
      return contrast * (0.3 + 0.7 * b * b);
    }
    case LesionKind::kEffusion:
      return 0.9 * contrast;
    case LesionKind::kNodule:
      return 1.3 * contrast;
    case LesionKind::kMass:
      return contrast;
    case LesionKind::kDevice:
      return 1.4 * contrast;
    case LesionKind::kConsolidation:
      return ((y / 2 + x / 2) % 2 == 0) ? contrast : 0.35 * contrast;
    case LesionKind::kAtelectasis:
      return -contrast;
    case LesionKind::kCalcification:
      return 1.2 * contrast;
  }
  return 0.0;
}

LesionSpec make_lesion(LesionKind kind, Severity severity, std::size_t cell_row,
                       std::size_t cell_col, double offset_y, double offset_x,
                       std::size_t patch_size) {
  LesionSpec l;
  l.kind = kind;
  l.severity = severity;
  l.cell_row = cell_row;
  l.cell_col = cell_col;
  l.center_y = static_cast<double>(cell_row * patch_size) + offset_y;
  l.center_x = static_cast<double>(cell_col * patch_size) + offset_x;
  l.radius = kRadius[static_cast<std::size_t>(severity)];
  l.contrast = kContrast[static_cast<std::size_t>(severity)];
  return l;
}

void validate(const CorpusSpec& spec) {
  if (!(spec.normal_ratio >= 0.0 && spec.normal_ratio <= 1.0)) {
    throw ConfigError("normal_ratio must lie in [0, 1], got " + std::to_string(spec.normal_ratio));
  }
  if (spec.num_samples == 0) throw ConfigError("corpus must contain at least one sample");
  if (spec.num_kinds == 0 || spec.num_kinds > kKindCount) {
    throw ConfigError("num_kinds must lie in [1, " + std::to_string(kKindCount) + "]");
  }
  if (spec.max_lesions == 0 || spec.max_lesions > spec.num_kinds) {
    throw ConfigError("max_lesions must lie in [1, num_kinds]");
  }
  if (spec.noise < 0.0) throw ConfigError("noise must be non-negative");
  try {
    patch_count(spec.image_size, spec.image_size, spec.patch_size);
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
}

std::string location_phrase(std::size_t cell_row, std::size_t cell_col, std::size_t grid) {
  const char* side = cell_col * 2 < grid ? "left" : "right";
  const char* level = cell_row * 3 < grid ? "upper" : (cell_row * 3 < 2 * grid ? "middle" : "lower");
  return std::string("the ") + side + " " + level + " zone";
}

std::string render_report(const std::vector<LesionSpec>& lesions, std::size_t grid) {
  std::vector<const LesionSpec*> order;
  for (const auto& l : lesions) order.push_back(&l);
  std::stable_sort(order.begin(), order.end(),
                   [](const LesionSpec* a, const LesionSpec* b) { return a->kind < b->kind; });
  std::string report;
  if (order.empty()) {
    report = kNormalOpening;
  } else {
    for (const auto* l : order) {
      if (!report.empty()) report += ' ';
      report += "there is a ";
      report += severity_name(l->severity);
      report += ' ';
      report += kind_name(l->kind);
      report += " in ";
      report += location_phrase(l->cell_row, l->cell_col, grid);
      report += " .";
    }
  }
  report += ' ';
  report += kNormalSentences;
  return report;
}

std::vector<std::size_t> lesion_patches(const std::vector<LesionSpec>& lesions,
                                        std::size_t image_size, std::size_t patch_size) {
  const std::size_t grid = image_size / patch_size;
  std::vector<std::size_t> coverage(grid * grid, 0);
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const bool hit = std::any_of(lesions.begin(), lesions.end(),
                                   [&](const LesionSpec& l) { return l.covers(y, x); });
      if (hit) ++coverage[(y / patch_size) * grid + x / patch_size];
    }
  }
  std::vector<std::size_t> out;
  const double threshold = 0.1 * static_cast<double>(patch_size * patch_size);
  for (std::size_t k = 0; k < coverage.size(); ++k)
    if (static_cast<double>(coverage[k]) > threshold) out.push_back(k);
  return out;
}

std::vector<std::size_t> ground_truth_saliency(const PairedSample& sample, std::size_t patch_size) {
  if (sample.lesions.empty()) return sample.lesion_patches;
  return lesion_patches(sample.lesions, sample.image.height, patch_size);
}

ObservationLabelSet labels_of(const std::vector<LesionSpec>& lesions) {
  ObservationLabelSet labels;
  for (const auto& l : lesions) labels.set(static_cast<std::size_t>(l.kind));
  return labels;
}

ObservationLabelSet extract_labels(std::string_view report) {
  ObservationLabelSet labels;
  std::vector<std::string> sentence;
  auto flush = [&]() {
    if (!sentence.empty() && sentence.front() != "no") {
      for (const auto& w : sentence)
        for (std::size_t k = 0; k < kKindCount; ++k)
          if (w == kKindNames[k]) labels.set(k);
    }
    sentence.clear();
  };
  for (auto& w : text::split_words(report)) {
    if (w == ".") {
      flush();
    } else {
      sentence.push_back(std::move(w));
    }
  }
  flush();
  return labels;
}

PairedSample make_sample(std::string id, std::vector<LesionSpec> lesions, const CorpusSpec& spec,
                         std::uint64_t noise_seed) {
  const std::size_t size = spec.image_size;
  Rng rng(noise_seed);
  PairedSample s;
  s.id = std::move(id);
  s.image = ImageGrid(size, size, 1);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double v = background(y, x, size) + spec.noise * rng.normal();
      for (const auto& l : lesions) v += l.intensity(y, x);
      s.image.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  const std::size_t grid = size / spec.patch_size;
  s.report = render_report(lesions, grid);
  s.labels = labels_of(lesions);
  s.lesion_patches = lesion_patches(lesions, size, spec.patch_size);
  s.lesions = std::move(lesions);
  return s;
}

std::vector<PairedSample> generate_corpus(const CorpusSpec& spec) {
  validate(spec);
  const std::size_t grid = spec.image_size / spec.patch_size;
  std::vector<PairedSample> out;
  out.reserve(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    Rng rng(Rng::mix(spec.seed, i));
    std::vector<LesionSpec> lesions;
    if (!rng.bernoulli(spec.normal_ratio)) {
      const std::size_t count = 1 + rng.below(spec.max_lesions);
      std::vector<std::size_t> kinds(spec.num_kinds);
      for (std::size_t k = 0; k < kinds.size(); ++k) kinds[k] = k;
      rng.shuffle(kinds);
      for (std::size_t n = 0; n < count; ++n) {
        std::size_t row = 0, col = 0;
        // Rejection-sample a cell away from earlier lesions; the grid is
        // large enough that this terminates quickly for <= 3 lesions.
        for (int attempt = 0; attempt < 1000; ++attempt) {
          row = rng.below(grid);
          col = rng.below(grid);
          const bool clear = std::all_of(lesions.begin(), lesions.end(), [&](const LesionSpec& l) {
            const auto dr = row > l.cell_row ? row - l.cell_row : l.cell_row - row;
            const auto dc = col > l.cell_col ? col - l.cell_col : l.cell_col - col;
            return std::max(dr, dc) >= kCellSpacing;
          });
          if (clear) break;
        }
        const auto severity = static_cast<Severity>(rng.below(3));
        const double oy = rng.uniform(0.0, static_cast<double>(spec.patch_size));
        const double ox = rng.uniform(0.0, static_cast<double>(spec.patch_size));
        lesions.push_back(make_lesion(static_cast<LesionKind>(kinds[n]), severity, row, col, oy, ox,
                                      spec.patch_size));
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "s%05zu", i);
    out.push_back(make_sample(id, std::move(lesions), spec, rng.below(~0ULL)));
  }
  return out;
}

}  // namespace sisr::corpus
