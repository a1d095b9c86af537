// Model inference and training-step cost; these bound the attack latency
// and the wall time of the training recipes.
#include <benchmark/benchmark.h>

#include "wmlab/attacks.hpp"
#include "wmlab/eval.hpp"
#include "wmlab/removal.hpp"
#include "wmlab/synth.hpp"
#include "wmlab/watermark.hpp"

using namespace wmlab;

namespace {

wm::Victim toy_victim() {
  wm::Victim v;
  v.key = {41, wm::Scheme::kZeroBitSsw};
  v.strength = 0.1;
  v.detector = {0.5, 10.0, 3.0};
  return v;
}

void bm_generator_forward(benchmark::State& state) {
  removal::GeneratorModel<float> gen;
  removal::DiscriminatorModel<float> disc;
  removal::init_models(1, gen, disc);
  Rng rng(7);
  const auto clip = synth::make_clip(synth::Kind::kNoise,
                                     static_cast<double>(state.range(0)),
                                     kSampleRate, rng);
  for (auto _ : state) {
    auto out = removal::generator_apply(gen, clip);
    benchmark::DoNotOptimize(out.samples.data());
  }
}

void bm_discriminator_forward(benchmark::State& state) {
  removal::GeneratorModel<float> gen;
  removal::DiscriminatorModel<float> disc;
  removal::init_models(1, gen, disc);
  Rng rng(7);
  const auto clip = synth::make_clip(synth::Kind::kNoise,
                                     static_cast<double>(state.range(0)),
                                     kSampleRate, rng);
  for (auto _ : state) {
    auto d = removal::discriminator_apply(disc, clip);
    benchmark::DoNotOptimize(d);
  }
}

// one full optimization step (generator + discriminator) at the default
// batch and crop sizes, amortized over a single-epoch run
void bm_train_step(benchmark::State& state) {
  const auto v = toy_victim();
  const int batch = static_cast<int>(state.range(0));
  const auto clean = synth::make_dataset(synth::Kind::kNoise, batch, 1.0, 1000);
  const auto pairs = eval::embed_pairs(clean, v, 555);

  attack::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = batch;
  cfg.crop_len = 4096;
  cfg.seed = 1;

  for (auto _ : state) {
    removal::GeneratorModel<float> gen;
    removal::DiscriminatorModel<float> disc;
    removal::init_models(1, gen, disc);
    auto log = attack::train(gen, disc, pairs, v, cfg);
    benchmark::DoNotOptimize(log.data());
  }
}

}  // namespace

BENCHMARK(bm_generator_forward)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_discriminator_forward)
    ->Arg(1)
    ->Arg(5)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_train_step)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
