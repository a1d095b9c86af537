#include "wmlab/losses.hpp"

#include <algorithm>
#include <cmath>

namespace wmlab::loss {

void validate(const LossWeights& w) {
  const double vals[] = {w.alpha_r, w.alpha_p, w.alpha_wd, w.alpha_a,
                         w.alpha_d};
  for (double v : vals) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("loss weights must be finite and >= 0");
    }
  }
}

std::vector<double> softmax(const std::vector<double>& e) {
  if (e.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(e.begin(), e.end());
  std::vector<double> w(e.size());
  double denom = 0.0;
  for (size_t i = 0; i < e.size(); ++i) {
    w[i] = std::exp(e[i] - mx);
    denom += w[i];
  }
  for (double& v : w) v /= denom;
  return w;
}

double recon_loss(const std::vector<double>& x_unwm,
                  const std::vector<double>& x_clean) {
  if (x_unwm.size() != x_clean.size() || x_unwm.empty()) {
    throw std::invalid_argument("recon_loss: length mismatch");
  }
  double l1 = 0.0, l2 = 0.0;
  for (size_t i = 0; i < x_unwm.size(); ++i) {
    const double d = x_unwm[i] - x_clean[i];
    l1 += std::fabs(d);
    l2 += d * d;
  }
  const double n = static_cast<double>(x_unwm.size());
  return l1 / n + 0.1 * (l2 / n);
}

namespace {

// per-band temporal mean of mel power, [M]
std::vector<double> mel_profile(const AudioClip& x,
                                const dsp::MelFilterbank& fb,
                                const dsp::StftConfig& cfg) {
  const dsp::Spectrogram spec = dsp::stft(x, cfg);
  const Mat e = dsp::mel_band_energies(spec, fb);
  std::vector<double> out(static_cast<size_t>(fb.bands), 0.0);
  for (int m = 0; m < fb.bands; ++m) {
    double acc = 0.0;
    for (int t = 0; t < e.rows; ++t) acc += e.at(t, m);
    out[static_cast<size_t>(m)] = acc / e.rows;
  }
  return out;
}

}  // namespace

MelBandStats psycho_stats(const AudioClip& x_clean, const AudioClip& x_wm,
                          const AudioClip& x_unwm) {
  if (x_clean.size() != x_wm.size() || x_clean.size() != x_unwm.size()) {
    throw std::invalid_argument("psycho_stats: length mismatch");
  }
  const dsp::StftConfig cfg;
  if (x_clean.size() < static_cast<size_t>(cfg.fft_size)) {
    throw std::invalid_argument("psycho_stats: clips shorter than one frame");
  }
  const dsp::MelFilterbank fb =
      dsp::mel_filterbank(kMelBands, kMelLoHz, kMelHiHz, cfg.fft_size,
                          kSampleRate);
  const std::vector<double> p_clean = mel_profile(x_clean, fb, cfg);
  const std::vector<double> p_wm = mel_profile(x_wm, fb, cfg);
  const std::vector<double> p_unwm = mel_profile(x_unwm, fb, cfg);

  MelBandStats s;
  s.e.resize(p_clean.size());
  s.r.resize(p_clean.size());
  for (size_t m = 0; m < p_clean.size(); ++m) {
    s.e[m] = p_wm[m] - p_clean[m];
    s.r[m] = p_unwm[m] - p_clean[m];
  }
  s.w = softmax(s.e);
  return s;
}

double psycho_loss(const MelBandStats& stats) {
  if (stats.w.size() != stats.r.size() || stats.w.empty()) {
    throw std::invalid_argument("psycho_loss: invalid stats");
  }
  double acc = 0.0;
  for (size_t m = 0; m < stats.w.size(); ++m) acc += stats.w[m] * stats.r[m];
  return acc;
}

double decorr_loss(const std::vector<double>& x_unwm,
                   const std::vector<double>& x_wm,
                   const std::vector<double>& x_clean) {
  if (x_unwm.size() != x_wm.size() || x_unwm.size() != x_clean.size() ||
      x_unwm.empty()) {
    throw std::invalid_argument("decorr_loss: length mismatch");
  }
  double dot = 0.0, np = 0.0, nw = 0.0;
  for (size_t i = 0; i < x_unwm.size(); ++i) {
    const double dp = x_unwm[i] - x_clean[i];
    const double dw = x_wm[i] - x_clean[i];
    dot += dp * dw;
    np += dp * dp;
    nw += dw * dw;
  }
  const double cos = (np < 1e-24 || nw < 1e-24)
                         ? 0.0
                         : dot / (std::sqrt(np) * std::sqrt(nw));
  return 0.5 * (1.0 + cos);
}

namespace {

double bce(double p, double target) {
  const double lo = 1e-7;
  p = std::clamp(p, lo, 1.0 - lo);
  return target == 1.0 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

double adv_loss(double disc_out) { return bce(disc_out, 1.0); }

double gen_total_loss(const GenLossComponents& c, const LossWeights& w) {
  validate(w);
  double total = w.alpha_r * c.recon + w.alpha_p * c.psycho +
                 w.alpha_wd * c.decorr + w.alpha_a * c.adv;
  if (w.alpha_d > 0.0) total += w.alpha_d * c.victim_conf;
  return total;
}

double disc_loss(double d_clean, double d_unwm) {
  return 0.5 * (bce(d_clean, 1.0) + bce(d_unwm, 0.0));
}

}  // namespace wmlab::loss
