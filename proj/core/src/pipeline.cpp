#include "sisr/pipeline.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "sisr/checkpoint.hpp"
#include "sisr/error.hpp"
#include "sisr/image.hpp"
#include "sisr/serialize.hpp"

namespace sisr::app {

namespace {

// Salts separating the random streams of the two stages.
constexpr std::uint64_t kIdentInitSalt = 11;
constexpr std::uint64_t kIdentTrainSalt = 12;
constexpr std::uint64_t kRrgInitSalt = 21;
constexpr std::uint64_t kRrgTrainSalt = 22;

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void echo_config(const RunConfig& config, const fs::path& out_dir) {
  io::write_file(out_dir / kConfigEcho, to_json(config));
}

std::vector<corpus::PairedSample> select(std::vector<corpus::PairedSample> samples,
                                         std::size_t heldout, SplitChoice choice) {
  if (choice == SplitChoice::kAll) return samples;
  auto split = split_corpus(std::move(samples), heldout);
  return choice == SplitChoice::kTrain ? std::move(split.train) : std::move(split.heldout);
}

}  // namespace

Split split_corpus(std::vector<corpus::PairedSample> samples, std::size_t heldout) {
  if (heldout >= samples.size()) {
    throw ConfigError("held-out split of " + std::to_string(heldout) + " leaves no training data in " +
                      std::to_string(samples.size()) + " samples");
  }
  Split s;
  const auto cut = samples.begin() + static_cast<std::ptrdiff_t>(samples.size() - heldout);
  s.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(cut));
  s.heldout.assign(std::make_move_iterator(cut), std::make_move_iterator(samples.end()));
  return s;
}

text::Vocabulary build_vocab(const std::vector<corpus::PairedSample>& samples) {
  std::vector<std::string> reports;
  reports.reserve(samples.size());
  for (const auto& s : samples) reports.push_back(s.report);
  return text::Vocabulary::build(reports);
}

std::vector<align::AlignSample> align_samples(const std::vector<corpus::PairedSample>& samples,
                                              const text::Vocabulary& vocab,
                                              const RunConfig& config) {
  std::vector<align::AlignSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto ids = text::tokenize(s.report, vocab);
    if (ids.size() > config.max_tokens) {
      throw ConfigError("report " + s.id + " has " + std::to_string(ids.size()) +
                        " tokens, above max_tokens = " + std::to_string(config.max_tokens));
    }
    out.push_back({patchify(s.image, config.patch_size), std::move(ids)});
  }
  return out;
}

std::vector<rrg::RrgSample> rrg_samples(const std::vector<corpus::PairedSample>& samples,
                                        const text::Vocabulary& vocab,
                                        const align::IdentificationNetwork& ident,
                                        const RunConfig& config) {
  std::vector<rrg::RrgSample> out;
  out.reserve(samples.size());
  for (auto& a : align_samples(samples, vocab, config)) {
    auto map = ident.saliency_map(a.patches);
    auto salient = align::select_salient(map, config.k_percent);
    out.push_back({std::move(a.patches), std::move(a.tokens), std::move(map), std::move(salient)});
  }
  return out;
}

Stage1 make_stage1(const RunConfig& config, const std::vector<corpus::PairedSample>& train) {
  validate(config);
  Stage1 s;
  s.vocab = build_vocab(train);
  s.ident = std::make_unique<align::IdentificationNetwork>(
      align_config(config), s.vocab.size(), Rng::mix(config.seed, kIdentInitSalt));
  return s;
}

void train_stage1(Stage1& stage, const RunConfig& config,
                  const std::vector<corpus::PairedSample>& train) {
  const auto samples = align_samples(train, stage.vocab, config);
  align::AlignTrainOptions opt;
  opt.epochs = config.align_epochs;
  opt.batch_size = config.batch_size;
  opt.adam = adam_config(config);
  opt.seed = Rng::mix(config.seed, kIdentTrainSalt);
  opt.on_epoch = [&](const align::AlignEpochLog& log) { stage.logs.push_back(log); };
  align::train_identification(*stage.ident, samples, opt);
}

Stage1 run_stage1(const RunConfig& config, const std::vector<corpus::PairedSample>& train) {
  Stage1 s = make_stage1(config, train);
  train_stage1(s, config, train);
  return s;
}

Stage2 make_stage2(const RunConfig& config, const text::Vocabulary& vocab) {
  validate(config);
  Stage2 s;
  s.net = std::make_unique<rrg::RrgNetwork>(rrg_config(config), vocab.size(),
                                            Rng::mix(config.seed, kRrgInitSalt));
  return s;
}

void train_stage2(Stage2& stage, const RunConfig& config, const text::Vocabulary& vocab,
                  const align::IdentificationNetwork& ident,
                  const std::vector<corpus::PairedSample>& train) {
  const auto samples = rrg_samples(train, vocab, ident, config);
  rrg::RrgTrainOptions opt;
  opt.epochs = config.rrg_epochs;
  opt.batch_size = config.batch_size;
  opt.adam = adam_config(config);
  opt.seed = Rng::mix(config.seed, kRrgTrainSalt);
  opt.on_epoch = [&](const rrg::RrgEpochLog& log) { stage.logs.push_back(log); };
  rrg::train_rrg(*stage.net, samples, opt);
}

Stage2 run_stage2(const RunConfig& config, const text::Vocabulary& vocab,
                  const align::IdentificationNetwork& ident,
                  const std::vector<corpus::PairedSample>& train) {
  Stage2 s = make_stage2(config, vocab);
  train_stage2(s, config, vocab, ident, train);
  return s;
}

rrg::DecodeOptions decode_options(const RunConfig& config) {
  rrg::DecodeOptions o;
  if (config.beam_width > 0) {
    o.mode = rrg::DecodeMode::kBeam;
    o.beam_width = config.beam_width;
  }
  return o;
}

std::vector<std::string> generate_reports(const align::IdentificationNetwork& ident,
                                          const rrg::RrgNetwork& net,
                                          const text::Vocabulary& vocab,
                                          const std::vector<corpus::PairedSample>& samples,
                                          const rrg::DecodeOptions& options) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(text::detokenize(rrg::generate(ident, net, s.image, options).ids, vocab));
  }
  return out;
}

metrics::MicroCe clinical_efficacy(const align::IdentificationNetwork& ident,
                                   const rrg::RrgNetwork& net, const text::Vocabulary& vocab,
                                   const std::vector<corpus::PairedSample>& samples,
                                   const rrg::DecodeOptions& options) {
  const auto reports = generate_reports(ident, net, vocab, samples, options);
  std::vector<corpus::ObservationLabelSet> predicted, truth;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    predicted.push_back(corpus::extract_labels(reports[i]));
    truth.push_back(samples[i].labels);
  }
  return metrics::micro_ce(predicted, truth);
}

metrics::Localization mean_localization(const align::IdentificationNetwork& ident,
                                        const std::vector<corpus::PairedSample>& samples,
                                        double k_percent) {
  double recall = 0.0, precision = 0.0;
  std::size_t counted = 0;
  for (const auto& s : samples) {
    if (s.lesion_patches.empty()) continue;
    const auto set = align::select_salient(ident.saliency_map(s.image), k_percent);
    const auto loc = metrics::saliency_localization(set.indices, s.lesion_patches);
    recall += *loc.recall;
    precision += loc.precision;
    ++counted;
  }
  metrics::Localization out;
  if (counted > 0) {
    out.recall = recall / static_cast<double>(counted);
    out.precision = precision / static_cast<double>(counted);
  }
  return out;
}

corpus::CorpusStats cmd_gen_data(const RunConfig& config, const fs::path& out_dir) {
  validate(config);
  const auto samples = corpus::generate_corpus(corpus_spec(config));
  corpus::write_corpus(out_dir, samples);
  echo_config(config, out_dir);
  return corpus::corpus_stats(samples);
}

std::vector<align::AlignEpochLog> cmd_train_align(const RunConfig& config,
                                                  const fs::path& corpus_dir,
                                                  const fs::path& out_dir) {
  validate(config);
  auto split = split_corpus(corpus::read_corpus(corpus_dir), config.heldout);
  Stage1 stage = make_stage1(config, split.train);
  echo_config(config, out_dir);
  io::write_file(out_dir / "vocab.txt", stage.vocab.serialize());
  auto write_outputs = [&]() {
    std::string csv = "epoch,L_v,L_t,L_bi,L1\n";
    for (const auto& l : stage.logs) {
      csv += std::to_string(l.epoch) + "," + format_double(l.image) + "," + format_double(l.text) +
             "," + format_double(l.contrastive) + "," + format_double(l.total) + "\n";
    }
    io::write_file(out_dir / "align_loss.csv", csv);
    save_checkpoint(out_dir / kIdentFile, kIdentKind, config, stage.vocab, stage.ident->params());
  };
  try {
    train_stage1(stage, config, split.train);
  } catch (const DivergenceError&) {
    write_outputs();
    throw;
  }
  write_outputs();
  return stage.logs;
}

std::vector<rrg::RrgEpochLog> cmd_train_rrg(const RunConfig& config, const fs::path& corpus_dir,
                                            const fs::path& ident_ckpt, const fs::path& out_dir) {
  validate(config);
  const Checkpoint ident_ck = load_checkpoint(ident_ckpt, kIdentKind);
  if (ident_ck.config.image_size != config.image_size ||
      ident_ck.config.patch_size != config.patch_size) {
    throw ConfigError("identification checkpoint was trained on " +
                      std::to_string(ident_ck.config.image_size) + "px images with " +
                      std::to_string(ident_ck.config.patch_size) + "px patches");
  }
  const auto ident = restore_identification(ident_ck);
  auto split = split_corpus(corpus::read_corpus(corpus_dir), config.heldout);
  Stage2 stage = make_stage2(config, ident_ck.vocab);
  echo_config(config, out_dir);
  auto write_outputs = [&]() {
    std::string csv = "epoch,L_I,L_R,L2\n";
    for (const auto& l : stage.logs) {
      csv += std::to_string(l.epoch) + "," + format_double(l.image) + "," +
             format_double(l.report) + "," + format_double(l.total) + "\n";
    }
    io::write_file(out_dir / "rrg_loss.csv", csv);
    save_checkpoint(out_dir / kRrgFile, kRrgKind, config, ident_ck.vocab, stage.net->params());
  };
  try {
    train_stage2(stage, config, ident_ck.vocab, *ident, split.train);
  } catch (const DivergenceError&) {
    write_outputs();
    throw;
  }
  write_outputs();
  return stage.logs;
}

void cmd_extract_saliency(const fs::path& ident_ckpt, const fs::path& corpus_dir,
                          const fs::path& out_dir, std::optional<double> k_percent) {
  const Checkpoint ck = load_checkpoint(ident_ckpt, kIdentKind);
  const auto ident = restore_identification(ck);
  const double k = k_percent.value_or(ck.config.k_percent);
  const auto samples = corpus::read_corpus(corpus_dir);
  io::TensorBundle bundle;
  std::string scores_csv = "image_id,patch_index,score\n";
  std::string salient_csv = "image_id,patch_index\n";
  for (const auto& s : samples) {
    const auto map = ident->saliency_map(s.image);
    bundle.tensors.push_back({s.id, ad::Tensor::vector(map.scores)});
    for (std::size_t i = 0; i < map.size(); ++i)
      scores_csv += s.id + "," + std::to_string(i) + "," + format_double(map.scores[i]) + "\n";
    for (auto i : align::select_salient(map, k).indices)
      salient_csv += s.id + "," + std::to_string(i) + "\n";
  }
  io::write_bundle(out_dir / "saliency.sisr", bundle);
  io::write_file(out_dir / "saliency.csv", scores_csv);
  io::write_file(out_dir / "salient.csv", salient_csv);
}

SplitChoice parse_split(const std::string& name) {
  if (name == "all") return SplitChoice::kAll;
  if (name == "train") return SplitChoice::kTrain;
  if (name == "heldout") return SplitChoice::kHeldout;
  throw ConfigError("split must be all, train or heldout, got \"" + name + "\"");
}

void cmd_generate(const fs::path& ident_ckpt, const fs::path& rrg_ckpt,
                  const fs::path& corpus_dir, const fs::path& out_file,
                  const rrg::DecodeOptions& options, SplitChoice split) {
  const Checkpoint ident_ck = load_checkpoint(ident_ckpt, kIdentKind);
  const Checkpoint rrg_ck = load_checkpoint(rrg_ckpt, kRrgKind);
  if (!(ident_ck.vocab == rrg_ck.vocab)) {
    throw ConfigError("checkpoints were trained with different vocabularies");
  }
  const auto ident = restore_identification(ident_ck);
  const auto net = restore_rrg(rrg_ck);
  const auto samples = select(corpus::read_corpus(corpus_dir), rrg_ck.config.heldout, split);
  std::string out;
  for (const auto& s : samples) {
    const auto report = rrg::generate(*ident, *net, s.image, options);
    out += s.id + "\t" + text::detokenize(report.ids, rrg_ck.vocab) + "\n";
  }
  io::write_file(out_file, out);
}

std::vector<std::pair<std::string, std::string>> read_reports(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": expected id<TAB>report");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

metrics::MetricReport cmd_evaluate(const fs::path& reports_file, const fs::path& corpus_dir,
                                   const std::optional<fs::path>& salient_csv) {
  const auto reports = read_reports(reports_file);
  const auto samples = corpus::read_corpus(corpus_dir);
  std::map<std::string, const corpus::PairedSample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  std::vector<std::string> candidates, references;
  for (const auto& [id, text] : reports) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw IoError("report for unknown sample id " + id);
    candidates.push_back(text);
    references.push_back(it->second->report);
  }
  auto result = metrics::evaluate_reports(candidates, references);
  if (salient_csv) {
    std::map<std::string, std::vector<std::size_t>> predicted;
    std::istringstream in(io::read_file(*salient_csv));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw IoError("malformed salient set line: " + line);
      predicted[line.substr(0, comma)].push_back(std::stoul(line.substr(comma + 1)));
    }
    double recall = 0.0, precision = 0.0;
    std::size_t counted = 0;
    for (const auto& [id, text] : reports) {
      const auto& truth = by_id.at(id)->lesion_patches;
      if (truth.empty()) continue;
      const auto loc = metrics::saliency_localization(predicted[id], truth);
      recall += *loc.recall;
      precision += loc.precision;
      ++counted;
    }
    if (counted > 0) {
      result.sal_recall = recall / static_cast<double>(counted);
      result.sal_precision = precision / static_cast<double>(counted);
    }
  }
  return result;
}

std::string phi_sweep_csv(const std::vector<PhiRow>& rows) {
  std::string csv = "phi,precision,recall,f1\n";
  for (const auto& r : rows) {
    csv += format_double(r.phi) + "," + format_double(r.ce.precision) + "," +
           format_double(r.ce.recall) + "," + format_double(r.ce.f1) + "\n";
  }
  return csv;
}

std::vector<PhiRow> cmd_ablate_phi(const RunConfig& config, const fs::path& corpus_dir,
                                   const fs::path& ident_ckpt, const fs::path& out_dir) {
  validate(config);
  const Checkpoint ident_ck = load_checkpoint(ident_ckpt, kIdentKind);
  const auto ident = restore_identification(ident_ck);
  auto split = split_corpus(corpus::read_corpus(corpus_dir), config.heldout);
  echo_config(config, out_dir);
  std::vector<PhiRow> rows;
  for (double phi : config.phi_grid) {
    RunConfig c = config;
    c.phi = phi;
    c.sisr_masking = true;
    const Stage2 stage = run_stage2(c, ident_ck.vocab, *ident, split.train);
    rows.push_back({phi, clinical_efficacy(*ident, *stage.net, ident_ck.vocab, split.heldout,
                                           decode_options(c))});
    io::write_file(out_dir / "phi_sweep.csv", phi_sweep_csv(rows));
  }
  return rows;
}

}  // namespace sisr::app
