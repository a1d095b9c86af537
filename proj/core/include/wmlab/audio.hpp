#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wmlab {

inline constexpr int kSampleRate = 16000;

// Mono waveform, samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

inline double clamp_sample(double s) {
  return s > 1.0 ? 1.0 : (s < -1.0 ? -1.0 : s);
}

inline void clamp_samples(AudioClip& clip) {
  for (double& s : clip.samples) s = clamp_sample(s);
}

inline double rms(const double* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

inline void require_nonempty(const AudioClip& clip, const char* who) {
  if (clip.samples.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty clip");
  }
}

// Row-major real matrix; used for band energies, dB maps, mel weights.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return v[static_cast<size_t>(r) * cols + c];
  }
};

}  // namespace wmlab
