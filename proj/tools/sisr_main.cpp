// Command-line front end for the two-stage pipeline.
//
//   sisr gen-data --out data
//   sisr train-align --corpus data --out runs/align
//   sisr train-rrg --corpus data --ident runs/align/ident.ckpt --out runs/rrg
//   sisr generate --ident ... --rrg ... --corpus data --out reports.tsv
//   sisr evaluate --reports reports.tsv --corpus data
//
// Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
// 4 I/O error, 1 anything else.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sisr/config.hpp"
#include "sisr/error.hpp"
#include "sisr/pipeline.hpp"

namespace {

using sisr::app::RunConfig;

struct ConfigFlags {
  std::string preset = "toy";
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--preset", flags.preset, "Starting preset (toy, large)");
  cmd->add_option("--config", flags.file, "JSON config file");
  cmd->add_option("--set", flags.sets, "Override a config field, key=value")->take_all();
  cmd->add_option("--seed", flags.seed, "Run seed (overrides SISR_SEED)");
}

// preset < config file < SISR_SEED < --set < --seed
RunConfig resolve(const ConfigFlags& flags) {
  RunConfig c = sisr::app::preset(flags.preset);
  if (!flags.file.empty()) c = sisr::app::load_config(flags.file, c);
  sisr::app::apply_environment(c);
  if (!flags.sets.empty()) {
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& kv : flags.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw sisr::ConfigError("--set expects key=value, got \"" + kv + "\"");
      }
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      auto parsed = nlohmann::json::parse(value, nullptr, false);
      overrides[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
    }
    c = sisr::app::config_from_json(overrides.dump(), c);
  }
  if (flags.seed) c.seed = *flags.seed;
  sisr::app::validate(c);
  return c;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw sisr::ConfigError("bad phi grid entry \"" + item + "\"");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return grid;
}

int run(int argc, char** argv) {
  CLI::App app{"Saliency-guided report generation on a synthetic paired corpus"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::string out, corpus, ident, rrg_ckpt, reports, salient, split = "heldout", grid;
  std::optional<double> k;
  std::optional<std::size_t> beam;
  bool no_masking = false, no_lm = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  add_config_flags(gen, flags);
  gen->add_option("--out", out, "Output directory")->required();

  auto* align = app.add_subcommand("train-align", "Stage 1: train the identification network");
  add_config_flags(align, flags);
  align->add_option("--corpus", corpus, "Corpus directory");
  align->add_option("--out", out, "Output directory")->required();

  auto* train_rrg = app.add_subcommand("train-rrg", "Stage 2: train the report generator");
  add_config_flags(train_rrg, flags);
  train_rrg->add_option("--corpus", corpus, "Corpus directory");
  train_rrg->add_option("--ident", ident, "Identification checkpoint");
  train_rrg->add_option("--out", out, "Output directory")->required();
  train_rrg->add_flag("--no-sisr-masking", no_masking, "Random masking (phi = 0)");
  train_rrg->add_flag("--no-sisr-lm", no_lm, "Replace the saliency token by zeros");

  auto* extract = app.add_subcommand("extract-saliency", "Export saliency maps and salient sets");
  extract->add_option("--ident", ident, "Identification checkpoint")->required();
  extract->add_option("--corpus", corpus, "Corpus directory")->required();
  extract->add_option("--out", out, "Output directory")->required();
  extract->add_option("--k", k, "Salient share of patches");

  auto* generate = app.add_subcommand("generate", "Generate reports");
  generate->add_option("--ident", ident, "Identification checkpoint")->required();
  generate->add_option("--rrg", rrg_ckpt, "Report generation checkpoint")->required();
  generate->add_option("--corpus", corpus, "Corpus directory")->required();
  generate->add_option("--out", out, "Reports file")->required();
  generate->add_option("--beam", beam, "Beam search width (greedy when omitted)");
  generate->add_option("--split", split, "all, train or heldout");

  auto* evaluate = app.add_subcommand("evaluate", "Score a reports file");
  evaluate->add_option("--reports", reports, "Reports file")->required();
  evaluate->add_option("--corpus", corpus, "Corpus directory")->required();
  evaluate->add_option("--salient", salient, "salient.csv from extract-saliency");
  evaluate->add_option("--out", out, "Write the JSON here as well as to stdout");

  auto* ablate = app.add_subcommand("ablate-phi", "Sweep the saliency masking increment");
  add_config_flags(ablate, flags);
  ablate->add_option("--corpus", corpus, "Corpus directory");
  ablate->add_option("--ident", ident, "Identification checkpoint");
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--grid", grid, "Comma-separated phi values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto corpus_of = [&](const RunConfig& c) {
    const std::string dir = corpus.empty() ? c.corpus_dir : corpus;
    if (dir.empty()) throw sisr::ConfigError("no corpus directory given");
    return dir;
  };
  auto ident_of = [&](const RunConfig& c) {
    const std::string path = ident.empty() ? c.ident_checkpoint : ident;
    if (path.empty()) throw sisr::ConfigError("no identification checkpoint given");
    return path;
  };

  if (gen->parsed()) {
    const auto stats = sisr::app::cmd_gen_data(resolve(flags), out);
    std::cout << sisr::corpus::format_stats(stats);
  } else if (align->parsed()) {
    const auto c = resolve(flags);
    for (const auto& l : sisr::app::cmd_train_align(c, corpus_of(c), out)) {
      std::printf("epoch %zu  L_v %.6f  L_t %.6f  L_bi %.6f  L1 %.6f\n", l.epoch, l.image, l.text,
                  l.contrastive, l.total);
    }
  } else if (train_rrg->parsed()) {
    auto c = resolve(flags);
    if (no_masking) c.sisr_masking = false;
    if (no_lm) c.sisr_lm = false;
    for (const auto& l : sisr::app::cmd_train_rrg(c, corpus_of(c), ident_of(c), out)) {
      std::printf("epoch %zu  L_I %.6f  L_R %.6f  L2 %.6f\n", l.epoch, l.image, l.report, l.total);
    }
  } else if (extract->parsed()) {
    sisr::app::cmd_extract_saliency(ident, corpus, out, k);
  } else if (generate->parsed()) {
    sisr::rrg::DecodeOptions opt;
    if (beam) {
      if (*beam == 0) throw sisr::ConfigError("--beam must be positive");
      opt.mode = sisr::rrg::DecodeMode::kBeam;
      opt.beam_width = *beam;
    }
    sisr::app::cmd_generate(ident, rrg_ckpt, corpus, out, opt, sisr::app::parse_split(split));
  } else if (evaluate->parsed()) {
    std::optional<std::filesystem::path> sal;
    if (!salient.empty()) sal = salient;
    const auto json = sisr::metrics::to_json(sisr::app::cmd_evaluate(reports, corpus, sal));
    if (!out.empty()) sisr::io::write_file(out, json);
    std::cout << json;
  } else if (ablate->parsed()) {
    auto c = resolve(flags);
    if (!grid.empty()) c.phi_grid = parse_grid(grid);
    sisr::app::validate(c);
    std::printf("phi,precision,recall,f1\n");
    for (const auto& row : sisr::app::cmd_ablate_phi(c, corpus_of(c), ident_of(c), out)) {
      std::printf("%g,%.6f,%.6f,%.6f\n", row.phi, row.ce.precision, row.ce.recall, row.ce.f1);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sisr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sisr::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const sisr::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
