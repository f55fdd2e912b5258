#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sisr/checkpoint.hpp"
#include "sisr/error.hpp"
#include "sisr/pipeline.hpp"
#include "sisr/serialize.hpp"
#include "test_util.hpp"
#include "tiny_config.hpp"

namespace sisr::app {
namespace {

std::vector<std::string> lines_of(const fs::path& p) {
  std::istringstream in(io::read_file(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(Pipeline, SplitAndVocab) {
  const auto c = testing::tiny_run_config();
  auto split = split_corpus(corpus::generate_corpus(corpus_spec(c)), c.heldout);
  EXPECT_EQ(split.train.size(), 18u);
  EXPECT_EQ(split.heldout.size(), 6u);
  EXPECT_EQ(split.heldout.back().id, "s00023");
  EXPECT_THROW(split_corpus(corpus::generate_corpus(corpus_spec(c)), 24), ConfigError);
  auto tight = c;
  tight.max_tokens = 4;
  EXPECT_THROW(align_samples(split.train, build_vocab(split.train), tight), ConfigError);
}

class FilePipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = new testing::TempDir("pipe");
    config = testing::tiny_run_config();
    cmd_gen_data(config, *dir / "data");
    cmd_train_align(config, *dir / "data", *dir / "align");
    cmd_train_rrg(config, *dir / "data", *dir / "align" / kIdentFile, *dir / "rrg");
  }
  static void TearDownTestSuite() { delete dir; }
  static fs::path p(const std::string& rel) { return dir->path() / rel; }
  static testing::TempDir* dir;
  static RunConfig config;
};
testing::TempDir* FilePipeline::dir = nullptr;
RunConfig FilePipeline::config;

TEST_F(FilePipeline, OutputsAndConfigEcho) {
  for (const char* f : {"data/manifest.tsv", "data/config.json", "align/ident.ckpt", "align/vocab.txt",
                        "align/align_loss.csv", "align/config.json", "rrg/rrg.ckpt",
                        "rrg/rrg_loss.csv", "rrg/config.json"}) {
    EXPECT_TRUE(fs::exists(p(f))) << f;
  }
  EXPECT_EQ(io::read_file(p("align/config.json")), to_json(config));
  const auto align_csv = lines_of(p("align/align_loss.csv"));
  ASSERT_EQ(align_csv.size(), 1 + config.align_epochs);
  EXPECT_EQ(align_csv[0], "epoch,L_v,L_t,L_bi,L1");
  EXPECT_EQ(lines_of(p("rrg/rrg_loss.csv"))[0], "epoch,L_I,L_R,L2");
}

TEST_F(FilePipeline, StageTwoLeavesIdentificationUntouched) {
  const std::string before = io::read_file(p("align/ident.ckpt"));
  cmd_train_rrg(config, p("data"), p("align/ident.ckpt"), p("rrg_again"));
  EXPECT_EQ(io::read_file(p("align/ident.ckpt")), before);
  EXPECT_EQ(io::read_file(p("rrg_again/rrg.ckpt")), io::read_file(p("rrg/rrg.ckpt")));
}

TEST_F(FilePipeline, TrainingIsBitReproducible) {
  cmd_train_align(config, p("data"), p("align_again"));
  EXPECT_EQ(io::read_file(p("align_again/ident.ckpt")), io::read_file(p("align/ident.ckpt")));
  EXPECT_EQ(io::read_file(p("align_again/align_loss.csv")), io::read_file(p("align/align_loss.csv")));
}

TEST_F(FilePipeline, GenerateEvaluateAndSaliency) {
  cmd_generate(p("align/ident.ckpt"), p("rrg/rrg.ckpt"), p("data"), p("greedy.tsv"), {},
               SplitChoice::kHeldout);
  cmd_generate(p("align/ident.ckpt"), p("rrg/rrg.ckpt"), p("data"), p("beam1.tsv"),
               {rrg::DecodeMode::kBeam, 1}, SplitChoice::kHeldout);
  EXPECT_EQ(io::read_file(p("greedy.tsv")), io::read_file(p("beam1.tsv")));
  const auto reports = read_reports(p("greedy.tsv"));
  ASSERT_EQ(reports.size(), config.heldout);
  EXPECT_EQ(reports.front().first, "s00018");

  cmd_extract_saliency(p("align/ident.ckpt"), p("data"), p("sal"));
  const auto salient = lines_of(p("sal/salient.csv"));
  // 16 patches at k = 0.2 gives 3 per image.
  EXPECT_EQ(salient.size(), 1 + 3 * config.num_samples);
  EXPECT_EQ(lines_of(p("sal/saliency.csv")).size(), 1 + 16 * config.num_samples);
  EXPECT_EQ(io::read_bundle(p("sal/saliency.sisr")).tensors.size(), config.num_samples);

  const auto m = cmd_evaluate(p("greedy.tsv"), p("data"), p("sal/salient.csv"));
  EXPECT_EQ(m.n_samples, config.heldout);
  EXPECT_GE(m.bleu[0], 0.0);
  EXPECT_LE(m.bleu[0], 1.0);
  ASSERT_TRUE(m.sal_recall.has_value());
  EXPECT_GE(*m.sal_recall, 0.0);
}

TEST_F(FilePipeline, EvaluateRejectsUnknownIds) {
  io::write_file(p("bad.tsv"), "nope\tno acute findings .\n");
  EXPECT_THROW(cmd_evaluate(p("bad.tsv"), p("data")), IoError);
  io::write_file(p("bad2.tsv"), "no tab here\n");
  EXPECT_THROW(cmd_evaluate(p("bad2.tsv"), p("data")), IoError);
}

TEST_F(FilePipeline, TrainRrgRejectsMismatchedGeometry) {
  auto c = config;
  c.patch_size = 8;
  EXPECT_THROW(cmd_train_rrg(c, p("data"), p("align/ident.ckpt"), p("rrg_bad")), ConfigError);
  EXPECT_THROW(cmd_train_rrg(config, p("data"), p("rrg/rrg.ckpt"), p("rrg_bad")), IoError);
}

TEST_F(FilePipeline, PhiSweepWritesOneRowPerGridPoint) {
  auto c = config;
  c.rrg_epochs = 1;
  const auto rows = cmd_ablate_phi(c, p("data"), p("align/ident.ckpt"), p("phi"));
  ASSERT_EQ(rows.size(), 2u);
  const auto csv = lines_of(p("phi/phi_sweep.csv"));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[0], "phi,precision,recall,f1");
  EXPECT_EQ(csv[1].rfind("0,", 0), 0u);
  EXPECT_EQ(csv[2].rfind("0.35,", 0), 0u);
}

}  // namespace
}  // namespace sisr::app
