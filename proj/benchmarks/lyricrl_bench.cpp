#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "lyricrl/metrics/phoneme_metrics.hpp"
#include "lyricrl/model/model.hpp"
#include "lyricrl/numcore/adam.hpp"
#include "lyricrl/numcore/autodiff.hpp"
#include "lyricrl/task/toy_task.hpp"
#include "lyricrl/train/losses.hpp"

namespace {

using namespace lyricrl;

const Vocabulary kVocab{};

ModelConfig task_config() { return ModelConfig{}; }

PhonemeSeq random_phonemes(Rng& rng, int n) {
  PhonemeSeq s(static_cast<std::size_t>(n));
  for (int& x : s) x = static_cast<int>(rng.uniform_int(0, 23));
  return s;
}

void BM_Align(benchmark::State& state) {
  Rng rng(Seed{1});
  const int n = static_cast<int>(state.range(0));
  const auto ref = random_phonemes(rng, n);
  auto hyp = ref;
  for (std::size_t i = 0; i < hyp.size(); i += 7) hyp[i] = (hyp[i] + 1) % 24;
  hyp.insert(hyp.begin() + n / 2, 5, 3);
  for (auto _ : state) benchmark::DoNotOptimize(align(ref, hyp));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Align)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

struct Song {
  TokenSeq prompt;
  TokenSeq tokens;
};

Song reference_song(Seed seed) {
  const auto p = gen_prompts(1, seed)[0];
  return {prompt_tokens(p, kVocab), reference_trajectory(p, kVocab, seed)};
}

void BM_SequenceLogprobs(benchmark::State& state) {
  const auto m = init_model(task_config(), Seed{2});
  const auto s = reference_song(Seed{3});
  for (auto _ : state) benchmark::DoNotOptimize(sequence_logprobs(m, s.prompt, s.tokens));
  state.counters["tokens"] = static_cast<double>(s.tokens.size());
}
BENCHMARK(BM_SequenceLogprobs)->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State& state) {
  auto m = init_model(task_config(), Seed{4});
  std::vector<SftExample> batch;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(state.range(0)); ++i) {
    const auto s = reference_song(Seed{10 + i});
    batch.push_back({s.prompt, s.tokens});
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(eval_with_gradients(m.params, [&](Tape& t) { return rs_loss(t, m, batch); }));
  state.counters["params"] = static_cast<double>(m.params.total_values());
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SampleSong(benchmark::State& state) {
  const auto m = init_model(task_config(), Seed{5});
  const auto s = reference_song(Seed{6});
  std::uint64_t k = 0;
  std::size_t tokens = 0;
  for (auto _ : state) {
    const auto out = sample_sequence(m, s.prompt, 100, 1.0, Seed{k++});
    tokens += out.size();
    benchmark::DoNotOptimize(out);
  }
  state.counters["tokens/s"] = benchmark::Counter(static_cast<double>(tokens), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_SampleSong)->Unit(benchmark::kMicrosecond);

void BM_AdamStep(benchmark::State& state) {
  auto m = init_model(task_config(), Seed{7});
  Rng rng(Seed{8});
  for (auto& e : m.params)
    for (Eigen::Index i = 0; i < e.grad.size(); ++i) e.grad.data()[i] = rng.normal();
  Adam opt;
  for (auto _ : state) benchmark::DoNotOptimize(opt.step(m.params));
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
