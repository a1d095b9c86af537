#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "wmlab/dsp.hpp"
#include "wmlab/fft.hpp"
#include "wmlab/rng.hpp"
#include "wmlab/synth.hpp"

using namespace wmlab;

namespace {

// quadratic-time reference transform
std::vector<std::complex<double>> direct_dft(
    const std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t f = 0; f < n; ++f) {
    std::complex<double> acc{0.0, 0.0};
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(f * t % n) /
                         static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
  return out;
}

std::vector<std::complex<double>> random_signal(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::complex<double>> x(n);
  for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return x;
}

}  // namespace

TEST_CASE("fft matches the direct dft") {
  for (size_t n : {8, 64, 256}) {
    auto x = random_signal(n, 0x1234 + n);
    auto got = x;
    dsp::fft(got.data(), n, false);
    auto want = direct_dft(x);
    double worst = 0.0;
    for (size_t f = 0; f < n; ++f) worst = std::max(worst, std::abs(got[f] - want[f]));
    CHECK(worst < 1e-9 * static_cast<double>(n));
  }
}

TEST_CASE("fft rejects non-power-of-two sizes") {
  std::vector<std::complex<double>> x(24);
  CHECK_THROWS_AS(dsp::fft(x.data(), x.size(), false), std::invalid_argument);
}

TEST_CASE("inverse fft is unnormalized") {
  const size_t n = 128;
  auto x = random_signal(n, 7);
  auto y = x;
  dsp::fft(y.data(), n, false);
  dsp::fft(y.data(), n, true);
  for (size_t i = 0; i < n; ++i) {
    CHECK(std::abs(y[i] - x[i] * static_cast<double>(n)) < 1e-9);
  }
}

TEST_CASE("fft preserves energy (parseval)") {
  const size_t n = 512;
  auto x = random_signal(n, 99);
  auto X = x;
  dsp::fft(X.data(), n, false);
  double et = 0.0, ef = 0.0;
  for (size_t i = 0; i < n; ++i) {
    et += std::norm(x[i]);
    ef += std::norm(X[i]);
  }
  CHECK(ef == doctest::Approx(et * static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("periodic hann window hits the quarter points") {
  const auto w = dsp::hann_window(2048);
  REQUIRE(w.size() == 2048);
  CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(w[512] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1024] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[1536] == doctest::Approx(0.5).epsilon(1e-12));
  // periodic form: w[n] == w[N-n] off the ends
  for (int i = 1; i < 2048; ++i) {
    CHECK(w[i] == doctest::Approx(w[2048 - i]).epsilon(1e-12));
  }
}

TEST_CASE("stft frame equals the windowed direct transform") {
  Rng rng(21);
  AudioClip clip;
  clip.samples.resize(2048 + 3 * 512 + 77);
  for (double& s : clip.samples) s = rng.uniform(-1.0, 1.0);

  const dsp::StftConfig cfg;
  const auto spec = dsp::stft(clip, cfg);
  REQUIRE(spec.frames == cfg.frames_for(clip.size()));

  const auto w = dsp::hann_window(cfg.fft_size);
  const int t = 2;
  std::vector<std::complex<double>> frame(cfg.fft_size);
  for (int i = 0; i < cfg.fft_size; ++i) {
    frame[i] = clip.samples[t * cfg.hop + i] * w[i];
  }
  const auto want = direct_dft(frame);
  double worst = 0.0;
  for (int f = 0; f < spec.bins(); ++f) {
    worst = std::max(worst, std::abs(spec.at(t, f) - want[f]));
  }
  CHECK(worst < 1e-9 * cfg.fft_size);
}

TEST_CASE("stft frame counts") {
  const dsp::StftConfig cfg;
  CHECK(cfg.frames_for(2047) == 0);
  CHECK(cfg.frames_for(2048) == 1);
  CHECK(cfg.frames_for(2048 + 511) == 1);
  CHECK(cfg.frames_for(2048 + 512) == 2);
}

TEST_CASE("stft config validation") {
  CHECK_THROWS_AS(dsp::StftConfig(1000, 250), std::invalid_argument);
  CHECK_THROWS_AS(dsp::StftConfig(2048, 500), std::invalid_argument);
  CHECK_NOTHROW(dsp::StftConfig(1024, 256));
}

TEST_CASE("istft reconstructs the interior of a random clip") {
  Rng rng(5);
  AudioClip clip;
  clip.samples.resize(16000);
  for (double& s : clip.samples) s = rng.uniform(-0.8, 0.8);

  const dsp::StftConfig cfg;
  const auto spec = dsp::stft(clip, cfg);
  const AudioClip back = dsp::istft(spec);
  REQUIRE(back.size() ==
          static_cast<size_t>((spec.frames - 1) * cfg.hop + cfg.fft_size));

  double acc = 0.0;
  size_t n = 0;
  for (size_t i = cfg.fft_size; i + cfg.fft_size < back.size(); ++i) {
    const double d = back.samples[i] - clip.samples[i];
    acc += d * d;
    ++n;
  }
  REQUIRE(n > 0);
  CHECK(std::sqrt(acc / static_cast<double>(n)) <= 1e-4);
}

TEST_CASE("istft requires the cola hop") {
  AudioClip clip;
  clip.samples.assign(4096, 0.1);
  const auto spec = dsp::stft(clip, dsp::StftConfig(2048, 1024));
  CHECK_THROWS_AS(dsp::istft(spec), std::invalid_argument);
}

TEST_CASE("mel scale round trip") {
  for (double hz : {200.0, 1000.0, 4000.0, 8000.0}) {
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
  }
  CHECK(dsp::hz_to_mel(1000.0) ==
        doctest::Approx(2595.0 * std::log10(1.0 + 1000.0 / 700.0)));
}

TEST_CASE("mel filterbank structure") {
  const auto fb = dsp::mel_filterbank(64, 200.0, 8000.0, 2048, 16000.0);
  REQUIRE(fb.weights.rows == 64);
  REQUIRE(fb.weights.cols == 1025);
  for (int m = 0; m < 64; ++m) {
    CHECK(fb.center_hz[m] > 200.0);
    CHECK(fb.center_hz[m] < 8000.0);
    if (m > 0) CHECK(fb.center_hz[m] > fb.center_hz[m - 1]);
    double row_sum = 0.0;
    for (int f = 0; f < 1025; ++f) {
      const double v = fb.weights.at(m, f);
      CHECK(v >= 0.0);
      if (v > 0.0) {
        CHECK(f >= fb.band_lo[m]);
        CHECK(f < fb.band_hi[m]);
      }
      row_sum += v;
    }
    CHECK(row_sum > 0.0);
  }
}

TEST_CASE("mel band energies match a dense oracle") {
  Rng rng(3);
  AudioClip clip;
  clip.samples.resize(2048 + 4 * 512);
  for (double& s : clip.samples) s = rng.uniform(-1.0, 1.0);

  const dsp::StftConfig cfg;
  const auto spec = dsp::stft(clip, cfg);
  const auto fb = dsp::mel_filterbank(64, 200.0, 8000.0, cfg.fft_size, 16000.0);
  const Mat got = dsp::mel_band_energies(spec, fb);
  REQUIRE(got.rows == spec.frames);
  REQUIRE(got.cols == 64);

  double scale = 0.0;
  for (int t = 0; t < spec.frames; ++t) {
    for (int m = 0; m < 64; ++m) {
      double acc = 0.0;
      for (int f = 0; f < spec.bins(); ++f) {
        acc += fb.weights.at(m, f) * std::norm(spec.at(t, f));
      }
      scale = std::max(scale, std::abs(acc));
      CHECK(std::abs(got.at(t, m) - acc) <= 1e-9 * std::max(1.0, scale));
    }
  }
}

TEST_CASE("to_db normalizes to peak and clamps at the floor") {
  Mat p(1, 4);
  p.at(0, 0) = 4.0;
  p.at(0, 1) = 0.4;
  p.at(0, 2) = 4e-9;
  p.at(0, 3) = 0.0;
  const Mat db = dsp::to_db(p);
  CHECK(db.at(0, 0) == doctest::Approx(0.0));
  CHECK(db.at(0, 1) == doctest::Approx(-10.0).epsilon(1e-12));
  CHECK(db.at(0, 2) == doctest::Approx(-80.0));  // clamped below -90
  CHECK(db.at(0, 3) == doctest::Approx(-80.0));
  for (double v : db.v) {
    CHECK(v <= 0.0);
    CHECK(v >= -80.0);
  }
}

TEST_CASE("tone clips concentrate spectral energy in few bins") {
  Rng rng(11);
  const AudioClip clip = synth::make_clip(synth::Kind::kTones, 1.0, 16000, rng);
  const auto spec = dsp::stft(clip, dsp::StftConfig());

  // accumulate power per bin over time, then check the top 5% of bins
  std::vector<double> bin_power(spec.bins(), 0.0);
  double total = 0.0;
  for (int t = 0; t < spec.frames; ++t) {
    for (int f = 0; f < spec.bins(); ++f) {
      const double p = std::norm(spec.at(t, f));
      bin_power[f] += p;
      total += p;
    }
  }
  std::sort(bin_power.begin(), bin_power.end(), std::greater<>());
  double top = 0.0;
  const size_t k = bin_power.size() / 20;
  for (size_t i = 0; i < k; ++i) top += bin_power[i];
  CHECK(top / total >= 0.8);
}

TEST_CASE("dataset generation is order-independent and seeded") {
  const auto a = synth::make_dataset(synth::Kind::kSpeechlike, 4, 0.5, 42);
  const auto b = synth::make_dataset(synth::Kind::kSpeechlike, 4, 0.5, 42);
  const auto c = synth::make_dataset(synth::Kind::kSpeechlike, 4, 0.5, 43);
  REQUIRE(a.size() == 4);
  CHECK(a[2].samples == b[2].samples);
  CHECK(a[0].samples != c[0].samples);
  for (const auto& clip : a) {
    REQUIRE(clip.size() == 8000);
    for (double s : clip.samples) {
      CHECK(s <= 1.0);
      CHECK(s >= -1.0);
    }
  }
}
