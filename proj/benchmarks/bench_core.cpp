#include <benchmark/benchmark.h>

#include "srtk/ctc_decode.hpp"
#include "srtk/experiment.hpp"
#include "srtk/kmeans.hpp"
#include "srtk/ngram.hpp"
#include "srtk/synth_encoder.hpp"
#include "srtk/transformer.hpp"
#include "srtk/wer.hpp"

using namespace srtk;

namespace {

FeatureMatrix random_frames(int t, int d, uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix m;
  m.frames = MatF(t, d);
  for (auto& v : m.frames.v) v = static_cast<float>(rng.gaussian());
  return m;
}

void BM_KMeansTrain(benchmark::State& state) {
  FeatureMatrix data = random_frames(static_cast<int>(state.range(0)), 16, 1);
  for (auto _ : state) {
    Codebook cb = train_kmeans({data}, 16, {.seed = 7});
    benchmark::DoNotOptimize(cb.train_meta.final_inertia);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KMeansTrain)->Range(256, 4096)->Complexity()->Unit(benchmark::kMillisecond);

void BM_Quantize(benchmark::State& state) {
  FeatureMatrix data = random_frames(1024, 16, 2);
  Codebook cb = train_kmeans({data}, static_cast<int>(state.range(0)), {.seed = 1});
  for (auto _ : state) {
    DiscreteTokenSeq seq = quantize(cb, data);
    benchmark::DoNotOptimize(seq.tokens.data());
  }
}
BENCHMARK(BM_Quantize)->Arg(8)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_PrefixBeam(benchmark::State& state) {
  SynthOptions so;
  so.seed = 3;
  so.noise_sigma = 1.2;
  CtcLattice lat = synth_encode_ctc("THE QUICK BROWN FOX JUMPS", so);
  auto sents = make_task_sentences(40, 9);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& s : sents) corpus.push_back(char_tokens(s));
  NGramModel lm = train_ngram(corpus, 4, SmoothingSpec::witten_bell());
  BeamOptions bo;
  bo.beam = static_cast<int>(state.range(0));
  bo.nbest = 1;
  bo.lm_weight = 0.8;
  for (auto _ : state) {
    NBestList out = prefix_beam_decode(lat, &lm, bo);
    benchmark::DoNotOptimize(out.hyps[0].total_log_score);
  }
}
BENCHMARK(BM_PrefixBeam)->Arg(1)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  int seq = static_cast<int>(state.range(0));
  LmConfig cfg;
  cfg.vocab_size = 50;
  cfg.input_dim = 16;
  cfg.max_seq = seq + 48;
  cfg.feedback_mode = FeedbackMode::Continuous;
  cfg.front_end = FrontEndKind::ContinuousAdapter;
  cfg.alpha = 10.0;
  ToyLmF lm(cfg, 1);
  Rng rng(2);
  LmExample ex;
  ex.prompt.kind = FrontEndKind::ContinuousAdapter;
  ex.prompt.features = random_frames(seq, 16, 5).frames;
  for (int i = 0; i < 40; ++i) ex.targets.push_back(4 + static_cast<int>(rng.uniform_int(40)));
  std::vector<LmExample> batch{ex, ex, ex, ex};
  for (auto _ : state) {
    TrainMetrics tm = lm.train_step(batch, 0.01);
    benchmark::DoNotOptimize(tm.loss.total);
  }
  state.SetComplexityN(seq);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  LmConfig cfg;
  cfg.vocab_size = 50;
  cfg.input_dim = 16;
  cfg.max_seq = 192;
  cfg.feedback_mode = FeedbackMode::Continuous;
  cfg.front_end = FrontEndKind::ContinuousAdapter;
  ToyLmF lm(cfg, 1);
  MatF feats = random_frames(96, 16, 7).frames;
  for (auto _ : state) {
    std::vector<int> out = lm.generate_continuous(feats, static_cast<int>(state.range(0)), TextVocab::kEos);
    benchmark::DoNotOptimize(out.size());
  }
}
BENCHMARK(BM_Generate)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Wer(benchmark::State& state) {
  auto sents = make_task_sentences(2, 4);
  for (auto _ : state) {
    WerReport r = wer(sents[0], sents[1]);
    benchmark::DoNotOptimize(r.wer);
  }
}
BENCHMARK(BM_Wer);

void BM_NgramScore(benchmark::State& state) {
  auto sents = make_task_sentences(60, 9);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& s : sents) corpus.push_back(char_tokens(s));
  NGramModel lm = train_ngram(corpus, 4, SmoothingSpec::witten_bell());
  auto probe = char_tokens(sents[0]);
  for (auto _ : state) {
    double s = lm.score_sequence(probe);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_NgramScore);

}  // namespace

BENCHMARK_MAIN();
