#include "wmlab/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wmlab/fft.hpp"

namespace wmlab::dsp {

std::vector<double> hann_window(int n) {
  if (n <= 0) throw std::invalid_argument("hann_window: n must be positive");
  std::vector<double> w(n);
  const double pi = 3.14159265358979323846264338327950288;
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * pi * i / n));
  }
  return w;
}

StftConfig::StftConfig(int fft, int h) : fft_size(fft), hop(h) {
  if (fft <= 0 || !is_pow2(static_cast<size_t>(fft))) {
    throw std::invalid_argument("StftConfig: fft_size must be a power of two");
  }
  if (h <= 0 || fft % h != 0) {
    throw std::invalid_argument("StftConfig: hop must divide fft_size");
  }
}

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  if (clip.samples.size() < static_cast<size_t>(cfg.fft_size)) {
    throw std::invalid_argument("stft: clip shorter than one frame");
  }
  const int n = cfg.fft_size;
  const int nbins = cfg.bins();
  const int frames = cfg.frames_for(clip.samples.size());
  std::vector<double> win = hann_window(n);

  Spectrogram spec;
  spec.config = cfg;
  spec.frames = frames;
  spec.sample_rate = clip.sample_rate;
  spec.values.resize(static_cast<size_t>(frames) * nbins);

  std::vector<std::complex<double>> buf(n);
  for (int t = 0; t < frames; ++t) {
    const double* x = clip.samples.data() + static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < n; ++i) buf[i] = {win[i] * x[i], 0.0};
    fft(buf.data(), n);
    for (int f = 0; f < nbins; ++f) spec.at(t, f) = buf[f];
  }
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config;
  if (cfg.hop * 4 != cfg.fft_size) {
    throw std::invalid_argument("istft: requires hop == fft_size/4 (COLA)");
  }
  if (spec.frames <= 0) throw std::invalid_argument("istft: empty spectrogram");
  const int n = cfg.fft_size;
  const int nbins = cfg.bins();
  std::vector<double> win = hann_window(n);

  const size_t out_len = static_cast<size_t>(spec.frames - 1) * cfg.hop + n;
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> norm(out_len, 0.0);

  std::vector<std::complex<double>> buf(n);
  for (int t = 0; t < spec.frames; ++t) {
    // rebuild the full spectrum from the one-sided half (real signal)
    for (int f = 0; f < nbins; ++f) buf[f] = spec.at(t, f);
    for (int f = nbins; f < n; ++f) buf[f] = std::conj(spec.at(t, n - f));
    fft(buf.data(), n, /*inverse=*/true);
    const size_t off = static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < n; ++i) {
      double sample = buf[i].real() / n;
      acc[off + i] += win[i] * sample;
      norm[off + i] += win[i] * win[i];
    }
  }

  AudioClip out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(out_len);
  for (size_t i = 0; i < out_len; ++i) {
    out.samples[i] = acc[i] / std::max(norm[i], 1e-8);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFilterbank mel_filterbank(int bands, double f_lo_hz, double f_hi_hz,
                             int fft_size, double sample_rate) {
  if (bands < 1) throw std::invalid_argument("mel_filterbank: bands < 1");
  if (!(f_lo_hz >= 0.0) || !(f_hi_hz > f_lo_hz) ||
      f_hi_hz > sample_rate / 2.0) {
    throw std::invalid_argument("mel_filterbank: bad frequency range");
  }
  const int nbins = fft_size / 2 + 1;

  MelFilterbank fb;
  fb.bands = bands;
  fb.bins = nbins;
  fb.f_lo = f_lo_hz;
  fb.f_hi = f_hi_hz;
  fb.weights = Mat(bands, nbins);
  fb.center_hz.resize(bands);
  fb.band_lo.assign(bands, nbins);
  fb.band_hi.assign(bands, 0);

  // bands+2 mel points; triangle m spans [pt[m], pt[m+2]], peak at pt[m+1]
  const double mel_lo = hz_to_mel(f_lo_hz);
  const double mel_hi = hz_to_mel(f_hi_hz);
  std::vector<double> pt(bands + 2);
  for (int i = 0; i < bands + 2; ++i) {
    pt[i] = mel_lo + (mel_hi - mel_lo) * i / (bands + 1);
  }

  const double hz_per_bin = sample_rate / fft_size;
  for (int m = 0; m < bands; ++m) {
    fb.center_hz[m] = mel_to_hz(pt[m + 1]);
    for (int f = 0; f < nbins; ++f) {
      double mel = hz_to_mel(f * hz_per_bin);
      double w = 0.0;
      if (mel > pt[m] && mel < pt[m + 2]) {
        w = mel <= pt[m + 1] ? (mel - pt[m]) / (pt[m + 1] - pt[m])
                             : (pt[m + 2] - mel) / (pt[m + 2] - pt[m + 1]);
      }
      fb.weights.at(m, f) = w;
      if (w > 0.0) {
        fb.band_lo[m] = std::min(fb.band_lo[m], f);
        fb.band_hi[m] = std::max(fb.band_hi[m], f + 1);
      }
    }
    if (fb.band_lo[m] >= fb.band_hi[m]) {
      throw std::invalid_argument(
          "mel_filterbank: band with no bins (fft_size too small for range)");
    }
  }
  return fb;
}

Mat mel_band_energies(const Spectrogram& spec, const MelFilterbank& fb) {
  if (fb.bins != spec.bins()) {
    throw std::invalid_argument("mel_band_energies: filterbank/spec bin mismatch");
  }
  Mat e(spec.frames, fb.bands);
  for (int t = 0; t < spec.frames; ++t) {
    for (int m = 0; m < fb.bands; ++m) {
      double acc = 0.0;
      for (int f = fb.band_lo[m]; f < fb.band_hi[m]; ++f) {
        acc += fb.weights.at(m, f) * std::norm(spec.at(t, f));
      }
      e.at(t, m) = acc;
    }
  }
  return e;
}

Mat to_db(const Mat& power) {
  Mat db(power.rows, power.cols);
  double peak = -1e300;
  for (size_t i = 0; i < power.v.size(); ++i) {
    db.v[i] = 10.0 * std::log10(std::max(power.v[i], kDbFloor));
    peak = std::max(peak, db.v[i]);
  }
  for (double& d : db.v) {
    d -= peak;
    if (d < -80.0) d = -80.0;
    if (d > 0.0) d = 0.0;
  }
  return db;
}

}  // namespace wmlab::dsp
