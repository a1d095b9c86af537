// Transform and filterbank throughput on clip lengths the lab actually uses.
#include <benchmark/benchmark.h>

#include "wmlab/dsp.hpp"
#include "wmlab/rng.hpp"
#include "wmlab/synth.hpp"

using namespace wmlab;

namespace {

AudioClip clip_of_seconds(double s) {
  Rng rng(7);
  return synth::make_clip(synth::Kind::kNoise, s, kSampleRate, rng);
}

void bm_stft(benchmark::State& state) {
  const auto clip = clip_of_seconds(static_cast<double>(state.range(0)));
  const dsp::StftConfig cfg;
  for (auto _ : state) {
    auto spec = dsp::stft(clip, cfg);
    benchmark::DoNotOptimize(spec.values.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(clip.samples.size()));
}

void bm_stft_roundtrip(benchmark::State& state) {
  const auto clip = clip_of_seconds(static_cast<double>(state.range(0)));
  const dsp::StftConfig cfg;
  for (auto _ : state) {
    auto back = dsp::istft(dsp::stft(clip, cfg));
    benchmark::DoNotOptimize(back.samples.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(clip.samples.size()));
}

void bm_mel_energies(benchmark::State& state) {
  const auto clip = clip_of_seconds(static_cast<double>(state.range(0)));
  const auto spec = dsp::stft(clip, dsp::StftConfig{});
  const auto fb =
      dsp::mel_filterbank(64, 200.0, 8000.0, 2048, kSampleRate);
  for (auto _ : state) {
    auto e = dsp::mel_band_energies(spec, fb);
    benchmark::DoNotOptimize(e.v.data());
  }
}

}  // namespace

BENCHMARK(bm_stft)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_stft_roundtrip)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_mel_energies)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
