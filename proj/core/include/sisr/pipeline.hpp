#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sisr/align.hpp"
#include "sisr/config.hpp"
#include "sisr/corpus.hpp"
#include "sisr/corpus_io.hpp"
#include "sisr/generate.hpp"
#include "sisr/metrics.hpp"
#include "sisr/rrg.hpp"
#include "sisr/vocab.hpp"

// The two-stage protocol as in-memory building blocks plus the file-based
// commands exposed by the command-line tool.
namespace sisr::app {

namespace fs = std::filesystem;

struct Split {
  std::vector<corpus::PairedSample> train;
  std::vector<corpus::PairedSample> heldout;
};
// The last `heldout` samples are held out.
Split split_corpus(std::vector<corpus::PairedSample> samples, std::size_t heldout);

text::Vocabulary build_vocab(const std::vector<corpus::PairedSample>& samples);

std::vector<align::AlignSample> align_samples(const std::vector<corpus::PairedSample>& samples,
                                              const text::Vocabulary& vocab,
                                              const RunConfig& config);
// Attaches frozen saliency maps and salient sets.
std::vector<rrg::RrgSample> rrg_samples(const std::vector<corpus::PairedSample>& samples,
                                        const text::Vocabulary& vocab,
                                        const align::IdentificationNetwork& ident,
                                        const RunConfig& config);

struct Stage1 {
  text::Vocabulary vocab;
  std::unique_ptr<align::IdentificationNetwork> ident;
  std::vector<align::AlignEpochLog> logs;
};
// Vocabulary from `train` plus a freshly initialized network.
Stage1 make_stage1(const RunConfig& config, const std::vector<corpus::PairedSample>& train);
// Appends one log row per finished epoch. On divergence the parameters hold
// the last good epoch when DivergenceError propagates.
void train_stage1(Stage1& stage, const RunConfig& config,
                  const std::vector<corpus::PairedSample>& train);
Stage1 run_stage1(const RunConfig& config, const std::vector<corpus::PairedSample>& train);

struct Stage2 {
  std::unique_ptr<rrg::RrgNetwork> net;
  std::vector<rrg::RrgEpochLog> logs;
};
Stage2 make_stage2(const RunConfig& config, const text::Vocabulary& vocab);
void train_stage2(Stage2& stage, const RunConfig& config, const text::Vocabulary& vocab,
                  const align::IdentificationNetwork& ident,
                  const std::vector<corpus::PairedSample>& train);
Stage2 run_stage2(const RunConfig& config, const text::Vocabulary& vocab,
                  const align::IdentificationNetwork& ident,
                  const std::vector<corpus::PairedSample>& train);

rrg::DecodeOptions decode_options(const RunConfig& config);
std::vector<std::string> generate_reports(const align::IdentificationNetwork& ident,
                                          const rrg::RrgNetwork& net,
                                          const text::Vocabulary& vocab,
                                          const std::vector<corpus::PairedSample>& samples,
                                          const rrg::DecodeOptions& options);

// Micro CE of generated reports against the samples' planted labels.
metrics::MicroCe clinical_efficacy(const align::IdentificationNetwork& ident,
                                   const rrg::RrgNetwork& net, const text::Vocabulary& vocab,
                                   const std::vector<corpus::PairedSample>& samples,
                                   const rrg::DecodeOptions& options);

// Mean recall and precision of the top-k salient sets against the lesion
// patches, over samples whose lesion set is non-empty.
metrics::Localization mean_localization(const align::IdentificationNetwork& ident,
                                        const std::vector<corpus::PairedSample>& samples,
                                        double k_percent);

// ---- file-based commands ----

inline constexpr const char* kConfigEcho = "config.json";
inline constexpr const char* kIdentFile = "ident.ckpt";
inline constexpr const char* kRrgFile = "rrg.ckpt";

corpus::CorpusStats cmd_gen_data(const RunConfig& config, const fs::path& out_dir);

// Writes ident.ckpt, vocab.txt, align_loss.csv and config.json.
std::vector<align::AlignEpochLog> cmd_train_align(const RunConfig& config,
                                                  const fs::path& corpus_dir,
                                                  const fs::path& out_dir);

// Writes rrg.ckpt, rrg_loss.csv and config.json. Backbone and vocabulary
// settings come from the identification checkpoint.
std::vector<rrg::RrgEpochLog> cmd_train_rrg(const RunConfig& config, const fs::path& corpus_dir,
                                            const fs::path& ident_ckpt, const fs::path& out_dir);

// Writes saliency.sisr (one [N_v] tensor per image id), saliency.csv
// (image_id, patch_index, score) and salient.csv (image_id, patch_index).
void cmd_extract_saliency(const fs::path& ident_ckpt, const fs::path& corpus_dir,
                          const fs::path& out_dir, std::optional<double> k_percent = {});

enum class SplitChoice { kAll, kTrain, kHeldout };
SplitChoice parse_split(const std::string& name);

// One "id<TAB>report" line per sample.
void cmd_generate(const fs::path& ident_ckpt, const fs::path& rrg_ckpt,
                  const fs::path& corpus_dir, const fs::path& out_file,
                  const rrg::DecodeOptions& options, SplitChoice split);

// Scores a reports file against the corpus references. Localization is
// filled when a salient.csv is given.
metrics::MetricReport cmd_evaluate(const fs::path& reports_file, const fs::path& corpus_dir,
                                   const std::optional<fs::path>& salient_csv = {});

struct PhiRow {
  double phi = 0.0;
  metrics::MicroCe ce;
};
// Header "phi,precision,recall,f1" and one line per row.
std::string phi_sweep_csv(const std::vector<PhiRow>& rows);
// One stage-2 run per phi in config.phi_grid with a shared stage-1
// checkpoint; held-out CE per run. Writes phi_sweep.csv and config.json.
std::vector<PhiRow> cmd_ablate_phi(const RunConfig& config, const fs::path& corpus_dir,
                                   const fs::path& ident_ckpt, const fs::path& out_dir);

// Reads "id<TAB>report" lines.
std::vector<std::pair<std::string, std::string>> read_reports(const fs::path& path);

}  // namespace sisr::app
