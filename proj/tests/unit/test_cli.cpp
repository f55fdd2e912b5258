#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "sisr/config.hpp"
#include "sisr/metrics.hpp"
#include "sisr/serialize.hpp"
#include "test_util.hpp"
#include "tiny_config.hpp"

#ifdef SISR_CLI_PATH

namespace sisr::app {
namespace {

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + SISR_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  Cli() : dir("cli") {
    io::write_file(dir / "tiny.json", to_json(testing::tiny_run_config()));
    cfg = " --config " + (dir / "tiny.json").string();
  }
  std::string at(const std::string& rel) const { return (dir / rel).string(); }
  testing::TempDir dir;
  std::string cfg;
};

TEST_F(Cli, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("gen-data"), 2);
  EXPECT_EQ(run_cli("gen-data --out " + at("d") + " --set bogus=1"), 2);
  EXPECT_EQ(run_cli("gen-data --out " + at("d") + " --set mask_rate=1.5"), 2);
  EXPECT_EQ(run_cli("gen-data --out " + at("d") + " --preset nope"), 2);
  EXPECT_EQ(run_cli("gen-data --out " + at("d"), "SISR_SEED=abc"), 2);
}

TEST_F(Cli, MissingFilesAreIoErrors) {
  EXPECT_EQ(run_cli("evaluate --reports " + at("none.tsv") + " --corpus " + at("none")), 4);
  EXPECT_EQ(run_cli("generate --ident " + at("x.ckpt") + " --rrg " + at("y.ckpt") + " --corpus " +
                    at("none") + " --out " + at("r.tsv")),
            4);
  EXPECT_EQ(run_cli("train-align" + cfg + " --corpus " + at("none") + " --out " + at("a")), 4);
}

TEST_F(Cli, SeedPrecedenceInConfigEcho) {
  ASSERT_EQ(run_cli("gen-data" + cfg + " --out " + at("d1"), "SISR_SEED=41"), 0);
  EXPECT_EQ(config_from_json(io::read_file(dir / "d1" / "config.json")).seed, 41u);
  ASSERT_EQ(run_cli("gen-data" + cfg + " --seed 42 --out " + at("d2"), "SISR_SEED=41"), 0);
  EXPECT_EQ(config_from_json(io::read_file(dir / "d2" / "config.json")).seed, 42u);
  ASSERT_EQ(run_cli("gen-data" + cfg + " --set seed=43 --out " + at("d3"), "SISR_SEED=41"), 0);
  EXPECT_EQ(config_from_json(io::read_file(dir / "d3" / "config.json")).seed, 43u);
  ASSERT_EQ(run_cli("gen-data" + cfg + " --seed 41 --out " + at("d4")), 0);
  EXPECT_EQ(io::read_file(dir / "d1" / "manifest.tsv"), io::read_file(dir / "d4" / "manifest.tsv"));
  EXPECT_NE(io::read_file(dir / "d1" / "manifest.tsv"), io::read_file(dir / "d2" / "manifest.tsv"));
}

TEST_F(Cli, DivergenceExitsWithThreeAndKeepsCheckpoint) {
  ASSERT_EQ(run_cli("gen-data" + cfg + " --out " + at("d")), 0);
  EXPECT_EQ(run_cli("train-align" + cfg + " --set lr=1e300 --corpus " + at("d") + " --out " + at("a")), 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "ident.ckpt"));
}

TEST_F(Cli, EndToEnd) {
  ASSERT_EQ(run_cli("gen-data" + cfg + " --out " + at("d")), 0);
  ASSERT_EQ(run_cli("train-align" + cfg + " --corpus " + at("d") + " --out " + at("a")), 0);
  ASSERT_EQ(run_cli("train-rrg" + cfg + " --no-sisr-lm --corpus " + at("d") + " --ident " +
                    at("a/ident.ckpt") + " --out " + at("r")),
            0);
  EXPECT_FALSE(config_from_json(io::read_file(dir / "r" / "config.json")).sisr_lm);
  ASSERT_EQ(run_cli("extract-saliency --ident " + at("a/ident.ckpt") + " --corpus " + at("d") +
                    " --out " + at("s") + " --k 0.25"),
            0);
  ASSERT_EQ(run_cli("generate --ident " + at("a/ident.ckpt") + " --rrg " + at("r/rrg.ckpt") +
                    " --corpus " + at("d") + " --out " + at("g.tsv") + " --beam 2"),
            0);
  ASSERT_EQ(run_cli("evaluate --reports " + at("g.tsv") + " --corpus " + at("d") + " --salient " +
                    at("s/salient.csv") + " --out " + at("m.json")),
            0);
  const auto m = metrics::report_from_json(io::read_file(dir / "m.json"));
  EXPECT_EQ(m.n_samples, 6u);
  EXPECT_TRUE(m.sal_recall.has_value());
  EXPECT_EQ(run_cli("ablate-phi" + cfg + " --grid 0,0.5 --set rrg_epochs=1 --corpus " + at("d") +
                    " --ident " + at("a/ident.ckpt") + " --out " + at("phi")),
            0);
  EXPECT_EQ(run_cli("ablate-phi" + cfg + " --grid 0,x --corpus " + at("d") + " --ident " +
                    at("a/ident.ckpt") + " --out " + at("phi")),
            2);
}

}  // namespace
}  // namespace sisr::app

#endif
