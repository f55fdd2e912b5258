#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "sisr/corpus.hpp"

namespace sisr::corpus {

// Corpus directory layout:
//   manifest.tsv   one line per sample:
//                  image file <TAB> report file <TAB> label bitmask <TAB>
//                  comma-separated lesion patches ("-" when none)
//   images/<id>.sisr   tensor container holding "image" with dims [H, W, C]
//   reports/<id>.txt   UTF-8 report text
void write_corpus(const std::filesystem::path& dir, const std::vector<PairedSample>& samples);
// Loaded samples carry lesion_patches and labels but no LesionSpec list.
std::vector<PairedSample> read_corpus(const std::filesystem::path& dir);

std::string manifest_line(const PairedSample& sample);

struct CorpusStats {
  std::size_t samples = 0;
  std::size_t abnormal = 0;
  std::size_t lesions = 0;
  std::array<std::size_t, kKindCount> per_kind{};
  double mean_lesion_patches = 0.0;
};
CorpusStats corpus_stats(const std::vector<PairedSample>& samples);
std::string format_stats(const CorpusStats& stats);

}  // namespace sisr::corpus
