#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sisr/align.hpp"
#include "sisr/corpus.hpp"
#include "sisr/optim.hpp"
#include "sisr/rrg.hpp"

namespace sisr::app {

// Every tunable of the two-stage pipeline. Serialized as one flat JSON
// object whose keys are the field names below.
struct RunConfig {
  // corpus
  std::size_t num_samples = 512;
  std::size_t heldout = 128;
  double normal_ratio = 0.7;
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t max_lesions = 3;
  std::size_t num_kinds = 8;
  double noise = 0.02;

  // backbones
  std::size_t width = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 2;
  std::size_t common_width = 64;
  std::size_t decoder_width = 64;
  std::size_t decoder_depth = 2;
  std::size_t decoder_heads = 4;
  std::size_t max_tokens = 64;

  // identification
  double tau = 0.07;
  double k_percent = 0.2;
  double image_mask_ratio = 0.5;
  double text_mask_ratio = 0.15;
  double lambda_vt = 0.75;
  double lambda_tv = 0.25;
  double lambda_v = 1.0;
  double lambda_t = 1.0;
  double lambda_bi = 0.1;

  // report generation
  double phi = 0.35;
  double mask_rate = 0.75;
  double lambda_i = 1.0;
  double lambda_r = 0.1;
  bool sisr_masking = true;
  bool sisr_lm = true;
  std::string mim_distance = "mse";  // "mse" or "norm"
  std::size_t beam_width = 0;        // 0 decodes greedily
  std::vector<double> phi_grid = {0.0, 0.25, 0.3, 0.35, 0.4, 0.5};

  // optimization
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t batch_size = 16;
  std::size_t align_epochs = 30;
  std::size_t rrg_epochs = 30;

  std::uint64_t seed = 7;

  // paths, used when the matching command-line argument is omitted
  std::string corpus_dir;
  std::string ident_checkpoint;
};

// Throws ConfigError naming the first offending field.
void validate(const RunConfig& config);

std::string to_json(const RunConfig& config);
// Starts from `base` and overrides the keys present; unknown keys are errors.
RunConfig config_from_json(std::string_view json, const RunConfig& base = {});
RunConfig load_config(const std::string& path, const RunConfig& base = {});

// Named starting points: "toy" (defaults) and "large" (3-layer, 8-head, 512-wide decoder
// on 224 x 224 images with 16 x 16 patches).
RunConfig preset(std::string_view name);

// Applies SISR_SEED when set. Throws ConfigError if it does not parse.
void apply_environment(RunConfig& config);

corpus::CorpusSpec corpus_spec(const RunConfig& config);
align::AlignConfig align_config(const RunConfig& config);
rrg::RrgConfig rrg_config(const RunConfig& config);
optim::AdamConfig adam_config(const RunConfig& config);

}  // namespace sisr::app
