#pragma once

#include <complex>
#include <vector>

#include "wmlab/audio.hpp"

namespace wmlab::dsp {

// Periodic Hann window (COLA with hop = n/4).
std::vector<double> hann_window(int n);

struct StftConfig {
  int fft_size = 2048;
  int hop = 512;

  StftConfig() = default;
  StftConfig(int fft, int h);  // validates: power of two, hop divides fft
  int bins() const { return fft_size / 2 + 1; }
  // frames fully contained in `len` samples; tail samples are dropped
  int frames_for(size_t len) const {
    if (len < static_cast<size_t>(fft_size)) return 0;
    return static_cast<int>((len - fft_size) / hop) + 1;
  }
};

// One-sided complex spectrogram, frame-major: values[t * bins + f].
struct Spectrogram {
  StftConfig config;
  int frames = 0;
  int sample_rate = kSampleRate;
  std::vector<std::complex<double>> values;

  int bins() const { return config.bins(); }
  std::complex<double>& at(int t, int f) {
    return values[static_cast<size_t>(t) * config.bins() + f];
  }
  std::complex<double> at(int t, int f) const {
    return values[static_cast<size_t>(t) * config.bins() + f];
  }
};

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg);

// Weighted overlap-add inverse. Requires hop == fft_size / 4 (Hann COLA).
// Output length is (frames-1)*hop + fft_size.
AudioClip istft(const Spectrogram& spec);

// 2595 * log10(1 + f / 700)
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters, 50% overlap, centers uniform on the mel scale.
// weights is [bands x bins]; band_lo/band_hi bound each row's nonzero span.
struct MelFilterbank {
  int bands = 0;
  int bins = 0;
  double f_lo = 0.0;
  double f_hi = 0.0;
  std::vector<double> center_hz;  // per band
  Mat weights;
  std::vector<int> band_lo, band_hi;  // half-open [lo, hi) bin spans
};

MelFilterbank mel_filterbank(int bands, double f_lo_hz, double f_hi_hz,
                             int fft_size, double sample_rate);

// E[t][m] = sum_f weights[m][f] * |S[t][f]|^2
Mat mel_band_energies(const Spectrogram& spec, const MelFilterbank& fb);

// 10*log10(max(p, 1e-10)), peak-normalized, clamped to [-80, 0].
Mat to_db(const Mat& power);

inline constexpr double kDbFloor = 1e-10;

}  // namespace wmlab::dsp
