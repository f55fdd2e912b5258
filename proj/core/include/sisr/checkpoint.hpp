#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "sisr/align.hpp"
#include "sisr/config.hpp"
#include "sisr/rrg.hpp"
#include "sisr/serialize.hpp"
#include "sisr/vocab.hpp"

namespace sisr::app {

inline constexpr const char* kIdentKind = "identification";
inline constexpr const char* kRrgKind = "report_generation";

// Parameters plus the resolved config and vocabulary they were trained with.
struct Checkpoint {
  std::string kind;
  RunConfig config;
  text::Vocabulary vocab;
  io::TensorBundle params;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const RunConfig& config, const text::Vocabulary& vocab,
                     const nn::ParameterSet& params);
// Throws IoError for a missing or malformed file, or when `expected_kind` is
// non-empty and differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "");

std::unique_ptr<align::IdentificationNetwork> restore_identification(const Checkpoint& ckpt);
std::unique_ptr<rrg::RrgNetwork> restore_rrg(const Checkpoint& ckpt);

}  // namespace sisr::app
