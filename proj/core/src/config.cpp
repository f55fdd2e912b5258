#include "sisr/config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "sisr/error.hpp"
#include "sisr/serialize.hpp"

namespace sisr::app {

namespace {

using nlohmann::json;

template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("num_samples", c.num_samples);
  f("heldout", c.heldout);
  f("normal_ratio", c.normal_ratio);
  f("image_size", c.image_size);
  f("patch_size", c.patch_size);
  f("max_lesions", c.max_lesions);
  f("num_kinds", c.num_kinds);
  f("noise", c.noise);
  f("width", c.width);
  f("depth", c.depth);
  f("heads", c.heads);
  f("ffn_mult", c.ffn_mult);
  f("common_width", c.common_width);
  f("decoder_width", c.decoder_width);
  f("decoder_depth", c.decoder_depth);
  f("decoder_heads", c.decoder_heads);
  f("max_tokens", c.max_tokens);
  f("tau", c.tau);
  f("k_percent", c.k_percent);
  f("image_mask_ratio", c.image_mask_ratio);
  f("text_mask_ratio", c.text_mask_ratio);
  f("lambda_vt", c.lambda_vt);
  f("lambda_tv", c.lambda_tv);
  f("lambda_v", c.lambda_v);
  f("lambda_t", c.lambda_t);
  f("lambda_bi", c.lambda_bi);
  f("phi", c.phi);
  f("mask_rate", c.mask_rate);
  f("lambda_i", c.lambda_i);
  f("lambda_r", c.lambda_r);
  f("sisr_masking", c.sisr_masking);
  f("sisr_lm", c.sisr_lm);
  f("mim_distance", c.mim_distance);
  f("beam_width", c.beam_width);
  f("phi_grid", c.phi_grid);
  f("lr", c.lr);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("adam_eps", c.adam_eps);
  f("clip_norm", c.clip_norm);
  f("batch_size", c.batch_size);
  f("align_epochs", c.align_epochs);
  f("rrg_epochs", c.rrg_epochs);
  f("seed", c.seed);
  f("corpus_dir", c.corpus_dir);
  f("ident_checkpoint", c.ident_checkpoint);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void require_open_unit(double v, const char* name) {
  require(v > 0.0 && v < 1.0, std::string(name) + " must lie in (0, 1), got " + std::to_string(v));
}

void require_non_negative(double v, const char* name) {
  require(v >= 0.0 && std::isfinite(v),
          std::string(name) + " must be finite and non-negative, got " + std::to_string(v));
}

}  // namespace

void validate(const RunConfig& c) {
  corpus::validate(corpus_spec(c));
  require(c.heldout < c.num_samples, "heldout must be smaller than num_samples");
  require(c.num_samples - c.heldout >= 2, "training split needs at least two samples");
  for (auto [v, name] : {std::pair{c.width, "width"}, {c.depth, "depth"}, {c.heads, "heads"},
                         {c.ffn_mult, "ffn_mult"}, {c.common_width, "common_width"},
                         {c.decoder_width, "decoder_width"}, {c.decoder_depth, "decoder_depth"},
                         {c.decoder_heads, "decoder_heads"}, {c.max_tokens, "max_tokens"},
                         {c.batch_size, "batch_size"}}) {
    require(v > 0, std::string(name) + " must be positive");
  }
  require(c.width % c.heads == 0, "heads must divide width");
  require(c.decoder_width % c.decoder_heads == 0, "decoder_heads must divide decoder_width");
  require(c.width >= 2 && c.decoder_width >= 2, "layer norm needs widths of at least 2");
  require(c.tau > 0.0, "tau must be positive");
  require(c.k_percent > 0.0 && c.k_percent <= 1.0, "k_percent must lie in (0, 1]");
  require_open_unit(c.image_mask_ratio, "image_mask_ratio");
  require_open_unit(c.text_mask_ratio, "text_mask_ratio");
  require_open_unit(c.mask_rate, "mask_rate");
  require_non_negative(c.phi, "phi");
  for (double p : c.phi_grid) require_non_negative(p, "phi_grid entry");
  require(!c.phi_grid.empty(), "phi_grid must not be empty");
  require_non_negative(c.lambda_vt, "lambda_vt");
  require_non_negative(c.lambda_tv, "lambda_tv");
  require_non_negative(c.lambda_v, "lambda_v");
  require_non_negative(c.lambda_t, "lambda_t");
  require_non_negative(c.lambda_bi, "lambda_bi");
  require_non_negative(c.lambda_i, "lambda_i");
  require_non_negative(c.lambda_r, "lambda_r");
  require(c.mim_distance == "mse" || c.mim_distance == "norm",
          "mim_distance must be \"mse\" or \"norm\", got \"" + c.mim_distance + "\"");
  require(c.lr > 0.0, "lr must be positive");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(c.adam_eps > 0.0, "adam_eps must be positive");
  require_non_negative(c.clip_norm, "clip_norm");
}

std::string to_json(const RunConfig& config) {
  json j = json::object();
  visit_fields(config, [&](const char* name, const auto& field) { j[name] = field; });
  return j.dump(2) + "\n";
}

RunConfig config_from_json(std::string_view text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c = base;
  std::set<std::string> known;
  visit_fields(c, [&](const char* name, auto& field) {
    known.insert(name);
    if (!j.contains(name)) return;
    try {
      field = j.at(name).get<std::decay_t<decltype(field)>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config field ") + name + " has the wrong type: " + e.what());
    }
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config field \"" + key + "\"");
  }
  return c;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  return config_from_json(io::read_file(path), base);
}

RunConfig preset(std::string_view name) {
  RunConfig c;
  if (name == "toy") return c;
  if (name == "large") {
    c.image_size = 224;
    c.patch_size = 16;
    c.decoder_depth = 3;
    c.decoder_heads = 8;
    c.decoder_width = 512;
    return c;
  }
  throw ConfigError("unknown preset \"" + std::string(name) + "\"");
}

void apply_environment(RunConfig& config) {
  const char* env = std::getenv("SISR_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || *env == '-') {
    throw ConfigError(std::string("SISR_SEED is not an unsigned integer: ") + env);
  }
  config.seed = v;
}

corpus::CorpusSpec corpus_spec(const RunConfig& c) {
  corpus::CorpusSpec s;
  s.num_samples = c.num_samples;
  s.normal_ratio = c.normal_ratio;
  s.image_size = c.image_size;
  s.patch_size = c.patch_size;
  s.max_lesions = c.max_lesions;
  s.num_kinds = c.num_kinds;
  s.noise = c.noise;
  s.seed = c.seed;
  return s;
}

align::AlignConfig align_config(const RunConfig& c) {
  align::AlignConfig a;
  a.vision = {c.width, c.depth, c.heads, c.ffn_mult};
  a.text = a.vision;
  a.common_width = c.common_width;
  a.image_size = c.image_size;
  a.patch_size = c.patch_size;
  a.max_tokens = c.max_tokens;
  a.tau = c.tau;
  a.lambda_vision_to_text = c.lambda_vt;
  a.lambda_text_to_vision = c.lambda_tv;
  a.lambda_image = c.lambda_v;
  a.lambda_text = c.lambda_t;
  a.lambda_bi = c.lambda_bi;
  a.image_mask_ratio = c.image_mask_ratio;
  a.text_mask_ratio = c.text_mask_ratio;
  return a;
}

rrg::RrgConfig rrg_config(const RunConfig& c) {
  rrg::RrgConfig r;
  r.vision = {c.width, c.depth, c.heads, c.ffn_mult};
  r.decoder = {c.decoder_width, c.decoder_depth, c.decoder_heads, c.ffn_mult};
  r.image_size = c.image_size;
  r.patch_size = c.patch_size;
  r.max_tokens = c.max_tokens;
  r.k_percent = c.k_percent;
  r.phi = c.sisr_masking ? c.phi : 0.0;
  r.mask_rate = c.mask_rate;
  r.lambda_image = c.lambda_i;
  r.lambda_report = c.lambda_r;
  r.use_saliency_token = c.sisr_lm;
  r.distance = c.mim_distance == "norm" ? rrg::MimDistance::kPatchNorm : rrg::MimDistance::kPixelMse;
  return r;
}

optim::AdamConfig adam_config(const RunConfig& c) {
  return {c.lr, c.beta1, c.beta2, c.adam_eps, c.clip_norm};
}

}  // namespace sisr::app
