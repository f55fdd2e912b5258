#include <benchmark/benchmark.h>

#include <vector>

#include "sisr/align.hpp"
#include "sisr/config.hpp"
#include "sisr/corpus.hpp"
#include "sisr/generate.hpp"
#include "sisr/image.hpp"
#include "sisr/metrics.hpp"
#include "sisr/ops.hpp"
#include "sisr/rng.hpp"
#include "sisr/rrg.hpp"
#include "sisr/vocab.hpp"

namespace {

using namespace sisr;

ad::Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return ad::Tensor::matrix(rows, cols, std::move(v));
}

// Default toy configuration with a 16-sample corpus.
struct Fixture {
  app::RunConfig config;
  std::vector<corpus::PairedSample> corpus;
  text::Vocabulary vocab;
  std::vector<align::AlignSample> align_samples;

  Fixture() {
    config.num_samples = 16;
    corpus = corpus::generate_corpus(app::corpus_spec(config));
    std::vector<std::string> reports;
    for (const auto& s : corpus) reports.push_back(s.report);
    vocab = text::Vocabulary::build(reports);
    for (const auto& s : corpus) {
      align_samples.push_back(
          {patchify(s.image, config.patch_size), text::tokenize(s.report, vocab)});
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_IdentificationStep(benchmark::State& state) {
  const auto& f = fixture();
  align::IdentificationNetwork net(app::align_config(f.config), f.vocab.size(), 1);
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  std::span<const align::AlignSample> batch(f.align_samples.data(), batch_size);
  Rng rng(2);
  for (auto _ : state) {
    ad::Tape tape;
    align::AlignLosses l;
    {
      ad::TapeScope scope(tape);
      l = net.losses(batch, rng);
    }
    tape.backward(l.total);
    net.params().zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch_size));
}
BENCHMARK(BM_IdentificationStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_SaliencyMap(benchmark::State& state) {
  const auto& f = fixture();
  align::IdentificationNetwork net(app::align_config(f.config), f.vocab.size(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(net.saliency_map(f.align_samples[0].patches));
}
BENCHMARK(BM_SaliencyMap)->Unit(benchmark::kMicrosecond);

std::vector<rrg::RrgSample> rrg_samples(const Fixture& f, const align::IdentificationNetwork& ident) {
  std::vector<rrg::RrgSample> out;
  for (const auto& a : f.align_samples) {
    auto map = ident.saliency_map(a.patches);
    auto salient = align::select_salient(map, f.config.k_percent);
    out.push_back({a.patches, a.tokens, std::move(map), std::move(salient)});
  }
  return out;
}

void BM_RrgStep(benchmark::State& state) {
  const auto& f = fixture();
  align::IdentificationNetwork ident(app::align_config(f.config), f.vocab.size(), 1);
  rrg::RrgNetwork net(app::rrg_config(f.config), f.vocab.size(), 2);
  const auto samples = rrg_samples(f, ident);
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  std::span<const rrg::RrgSample> batch(samples.data(), batch_size);
  std::vector<rrg::MaskPlan> plans;
  for (std::size_t i = 0; i < batch_size; ++i) plans.push_back(net.plan_for(batch[i], i));
  for (auto _ : state) {
    ad::Tape tape;
    rrg::RrgLosses l;
    {
      ad::TapeScope scope(tape);
      l = net.losses(batch, plans);
    }
    tape.backward(l.total);
    net.params().zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch_size));
}
BENCHMARK(BM_RrgStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  const auto& f = fixture();
  align::IdentificationNetwork ident(app::align_config(f.config), f.vocab.size(), 1);
  rrg::RrgNetwork net(app::rrg_config(f.config), f.vocab.size(), 2);
  const auto samples = rrg_samples(f, ident);
  rrg::DecodeOptions opt;
  if (state.range(0) > 1) {
    opt.mode = rrg::DecodeMode::kBeam;
    opt.beam_width = static_cast<std::size_t>(state.range(0));
  }
  opt.max_length = 32;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rrg::generate(net, samples[0].patches, samples[0].saliency, opt));
  }
}
BENCHMARK(BM_Generate)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_CorpusBleu(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<metrics::Words> refs, cands;
  for (const auto& s : f.corpus) refs.push_back(text::split_words(s.report));
  cands.assign(refs.rbegin(), refs.rend());
  for (auto _ : state) benchmark::DoNotOptimize(metrics::corpus_bleu(cands, refs));
}
BENCHMARK(BM_CorpusBleu);

}  // namespace

BENCHMARK_MAIN();
