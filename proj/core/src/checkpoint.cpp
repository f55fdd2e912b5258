#include "sisr/checkpoint.hpp"

#include <json.hpp>

#include "sisr/error.hpp"

namespace sisr::app {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const RunConfig& config, const text::Vocabulary& vocab,
                     const nn::ParameterSet& params) {
  io::TensorBundle bundle = params.to_bundle();
  json meta;
  meta["kind"] = kind;
  meta["config"] = json::parse(to_json(config));
  meta["vocab"] = vocab.tokens();
  bundle.metadata_json = meta.dump();
  io::write_bundle(path, bundle);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  if (!std::filesystem::exists(path)) {
    throw IoError("checkpoint not found: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.params = io::read_bundle(path);
  json meta;
  try {
    meta = json::parse(ckpt.params.metadata_json);
    ckpt.kind = meta.at("kind").get<std::string>();
    ckpt.config = config_from_json(meta.at("config").dump());
    ckpt.vocab = text::Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + " has malformed metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw IoError("checkpoint " + path.string() + " has an invalid config: " + e.what());
  }
  if (!expected_kind.empty() && ckpt.kind != expected_kind) {
    throw IoError("checkpoint " + path.string() + " holds a " + ckpt.kind + " network, expected " +
                  expected_kind);
  }
  return ckpt;
}

std::unique_ptr<align::IdentificationNetwork> restore_identification(const Checkpoint& ckpt) {
  auto net = std::make_unique<align::IdentificationNetwork>(align_config(ckpt.config),
                                                            ckpt.vocab.size(), ckpt.config.seed);
  net->params().load(ckpt.params);
  return net;
}

std::unique_ptr<rrg::RrgNetwork> restore_rrg(const Checkpoint& ckpt) {
  auto net = std::make_unique<rrg::RrgNetwork>(rrg_config(ckpt.config), ckpt.vocab.size(),
                                               ckpt.config.seed);
  net->params().load(ckpt.params);
  return net;
}

}  // namespace sisr::app
