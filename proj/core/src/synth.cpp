#include "wmlab/synth.hpp"

#include <cmath>
#include <stdexcept>

namespace wmlab::synth {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

void fade_edges(AudioClip& clip, int fade_samples) {
  const int n = static_cast<int>(clip.samples.size());
  const int f = std::min(fade_samples, n / 2);
  for (int i = 0; i < f; ++i) {
    double g = 0.5 * (1.0 - std::cos(kPi * i / f));
    clip.samples[i] *= g;
    clip.samples[n - 1 - i] *= g;
  }
}

void normalize_rms(std::vector<double>& x, double target) {
  double r = rms(x.data(), x.size());
  if (r < 1e-12) return;
  double g = target / r;
  for (double& s : x) s *= g;
}

// lowpassed Gaussian noise
AudioClip make_noise(int n, int sr, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.resize(n);
  const double fc = rng.uniform(1500.0, 3500.0);
  const double a = std::exp(-2.0 * kPi * fc / sr);
  double y = 0.0;
  for (int i = 0; i < n; ++i) {
    y = a * y + (1.0 - a) * rng.normal();
    clip.samples[i] = y;
  }
  normalize_rms(clip.samples, rng.uniform(0.1, 0.3));
  return clip;
}

// Harmonic stack (2-5 partials, 1/h amplitudes) over a low broadband floor.
// The floor keeps every mel band energized the way recorded music is; pure
// sinusoid stacks would leave inter-harmonic bands at the dB floor.
AudioClip make_tones(int n, int sr, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.assign(n, 0.0);

  const double f0 = rng.uniform(110.0, 400.0);
  const int partials = 2 + static_cast<int>(rng.uniform_index(4));
  for (int h = 1; h <= partials; ++h) {
    const double amp = 1.0 / h;
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double w = 2.0 * kPi * f0 * h / sr;
    for (int i = 0; i < n; ++i) {
      clip.samples[i] += amp * std::sin(w * i + phase);
    }
  }
  normalize_rms(clip.samples, 1.0);
  for (int i = 0; i < n; ++i) clip.samples[i] += 0.14 * rng.normal();
  normalize_rms(clip.samples, rng.uniform(0.15, 0.3));
  return clip;
}

// Formant-filtered noise with a syllabic amplitude envelope.
AudioClip make_speechlike(int n, int sr, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.resize(n);

  const double f1 = rng.uniform(300.0, 800.0);
  const double f2 = rng.uniform(1000.0, 2200.0);
  const double syl = rng.uniform(3.0, 8.0);
  const double syl_phase = rng.uniform(0.0, 2.0 * kPi);
  const double r = 0.98;
  double y1a = 0, y1b = 0, y2a = 0, y2b = 0;
  const double c1 = 2.0 * r * std::cos(2.0 * kPi * f1 / sr);
  const double c2 = 2.0 * r * std::cos(2.0 * kPi * f2 / sr);
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    const double y1 = c1 * y1a - r * r * y1b + x;
    y1b = y1a;
    y1a = y1;
    const double y2 = c2 * y2a - r * r * y2b + x;
    y2b = y2a;
    y2a = y2;
    double env = 0.5 * (1.0 - std::cos(2.0 * kPi * syl * i / sr + syl_phase));
    env = 0.25 + 0.75 * env;  // never fully silent
    clip.samples[i] = env * (y1 + 0.7 * y2);
  }
  normalize_rms(clip.samples, rng.uniform(0.1, 0.25));
  return clip;
}

}  // namespace

Kind kind_from_string(const std::string& s) {
  if (s == "noise") return Kind::kNoise;
  if (s == "tones") return Kind::kTones;
  if (s == "speechlike") return Kind::kSpeechlike;
  throw std::invalid_argument("unknown synth kind: " + s);
}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::kNoise: return "noise";
    case Kind::kTones: return "tones";
    case Kind::kSpeechlike: return "speechlike";
  }
  return "?";
}

AudioClip make_clip(Kind kind, double duration_s, int sample_rate, Rng& rng) {
  const int n = static_cast<int>(std::llround(duration_s * sample_rate));
  if (n <= 0) throw std::invalid_argument("make_clip: duration too short");
  AudioClip clip;
  switch (kind) {
    case Kind::kNoise: clip = make_noise(n, sample_rate, rng); break;
    case Kind::kTones: clip = make_tones(n, sample_rate, rng); break;
    case Kind::kSpeechlike: clip = make_speechlike(n, sample_rate, rng); break;
  }
  fade_edges(clip, sample_rate / 100);
  clamp_samples(clip);
  return clip;
}

std::vector<AudioClip> make_dataset(Kind kind, int n, double duration_s,
                                    uint64_t seed, int sample_rate) {
  if (n < 0) throw std::invalid_argument("make_dataset: n < 0");
  std::vector<AudioClip> out;
  out.reserve(n);
  Rng base(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = base.fork(static_cast<uint64_t>(i));
    out.push_back(make_clip(kind, duration_s, sample_rate, rng));
  }
  return out;
}

}  // namespace wmlab::synth
