#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "wmlab/audio.hpp"
#include "wmlab/dsp.hpp"
#include "wmlab/tensor.hpp"

namespace wmlab::loss {

// mel analysis used by the psychoacoustic term and the quality proxy
inline constexpr int kMelBands = 64;
inline constexpr double kMelLoHz = 200.0;
inline constexpr double kMelHiHz = 8000.0;

struct LossWeights {
  double alpha_r = 0.1;    // reconstruction
  double alpha_p = 0.001;  // psychoacoustic
  double alpha_wd = 0.1;   // watermark decorrelation
  double alpha_a = 0.5;    // adversarial
  double alpha_d = 0.0;    // detector guidance (only the -D variants)
};

void validate(const LossWeights& w);  // all finite and >= 0

struct MelBandStats {
  std::vector<double> e;  // per-band watermark energy
  std::vector<double> w;  // softmax attention weights, sums to 1
  std::vector<double> r;  // per-band residual energy (signed)
};

std::vector<double> softmax(const std::vector<double>& e);

// mean|d| + 0.1*mean(d^2)
double recon_loss(const std::vector<double>& x_unwm,
                  const std::vector<double>& x_clean);

// e_m = mean_t(mel_m|STFT(x_wm)|^2 - mel_m|STFT(x_clean)|^2); w = softmax(e);
// r analogous with x_unwm. Signed throughout; overshoot below the clean
// energy shows up as negative r.
MelBandStats psycho_stats(const AudioClip& x_clean, const AudioClip& x_wm,
                          const AudioClip& x_unwm);

double psycho_loss(const MelBandStats& stats);  // sum_m w_m * r_m

// (1 + cos(d_proc, d_wm)) / 2 with d_proc = x_unwm - x_clean,
// d_wm = x_wm - x_clean; zero-vector cosine defined as 0.
double decorr_loss(const std::vector<double>& x_unwm,
                   const std::vector<double>& x_wm,
                   const std::vector<double>& x_clean);

double adv_loss(double disc_out);  // BCE against the "clean" label

struct GenLossComponents {
  double recon = 0.0;
  double psycho = 0.0;
  double decorr = 0.0;
  double adv = 0.0;
  double victim_conf = 0.0;  // used only when alpha_d > 0
};

double gen_total_loss(const GenLossComponents& c, const LossWeights& w);

double disc_loss(double d_clean, double d_unwm);

// ---------------------------------------------------------------------------
// Graph-side builders: same formulas through the autograd tape. Waveform
// nodes are [N,1,L]; discriminator outputs are [N,1].
// ---------------------------------------------------------------------------

template <typename T>
typename tensor::Graph<T>::NodeId recon_loss_node(
    tensor::Graph<T>& g, typename tensor::Graph<T>::NodeId x_unwm,
    typename tensor::Graph<T>::NodeId x_clean) {
  auto l1 = g.l1_distance(x_unwm, x_clean);
  auto l2 = g.l2_distance(x_unwm, x_clean);
  return g.add(l1, g.scalar_mul(l2, T(0.1)));
}

template <typename T>
typename tensor::Graph<T>::NodeId decorr_loss_node(
    tensor::Graph<T>& g, typename tensor::Graph<T>::NodeId x_unwm,
    typename tensor::Graph<T>::NodeId x_wm,
    typename tensor::Graph<T>::NodeId x_clean) {
  auto d_proc = g.sub(x_unwm, x_clean);
  auto d_wm = g.sub(x_wm, x_clean);
  auto cos = g.cosine_similarity(d_proc, d_wm);  // [N]
  auto one = g.constant(tensor::Tensor<T>::scalar(T(1)));
  return g.scalar_mul(g.add(g.mean(cos), one), T(0.5));
}

// clean_power: constant [N,Tf,F] power spectrogram of x_clean;
// w: constant [N,M] softmax weights from psycho_stats;
// mel_t: constant [F,M] transposed mel filterbank weights.
template <typename T>
typename tensor::Graph<T>::NodeId psycho_loss_node(
    tensor::Graph<T>& g, typename tensor::Graph<T>::NodeId x_unwm,
    typename tensor::Graph<T>::NodeId clean_power,
    typename tensor::Graph<T>::NodeId w,
    typename tensor::Graph<T>::NodeId mel_t,
    const tensor::PowerSpecConfig& cfg) {
  auto p = g.power_spec(x_unwm, cfg);
  auto d = g.sub(p, clean_power);
  // temporal mean first: the mel projection is linear, so the order is free
  auto dm = g.mean_axis1(d);      // [N,F]
  auto r = g.matmul(dm, mel_t);   // [N,M]
  return g.mean(g.row_sum(g.mul(w, r)));
}

template <typename T>
typename tensor::Graph<T>::NodeId adv_loss_node(
    tensor::Graph<T>& g, typename tensor::Graph<T>::NodeId disc_out) {
  return g.mean(g.bce(disc_out, T(1)));
}

template <typename T>
typename tensor::Graph<T>::NodeId disc_loss_node(
    tensor::Graph<T>& g, typename tensor::Graph<T>::NodeId d_clean,
    typename tensor::Graph<T>::NodeId d_unwm) {
  auto real = g.mean(g.bce(d_clean, T(1)));
  auto fake = g.mean(g.bce(d_unwm, T(0)));
  return g.scalar_mul(g.add(real, fake), T(0.5));
}

// Differentiable replica of the zero-bit detector for the -D variants:
// z = <x, p> / ||x||, confidence = sigmoid(a (z - b)), averaged over batch.
// pn: constant [N,1,L] carrier.
template <typename T>
typename tensor::Graph<T>::NodeId victim_conf_node(
    tensor::Graph<T>& g, typename tensor::Graph<T>::NodeId x_unwm,
    typename tensor::Graph<T>::NodeId pn, T det_a, T det_b) {
  const auto& shape = g.val(x_unwm).shape;
  const T len = static_cast<T>(shape.back());
  // <x,p>/||x|| == cos(x, p) * sqrt(L) since ||p|| = sqrt(L) exactly
  auto z = g.scalar_mul(g.cosine_similarity(x_unwm, pn), std::sqrt(len));
  const int n = shape[0];
  auto b = g.constant(tensor::Tensor<T>::full({n}, det_b));
  auto conf = g.sigmoid(g.scalar_mul(g.sub(z, b), det_a));
  return g.mean(conf);
}

template <typename T>
typename tensor::Graph<T>::NodeId gen_total_loss_node(
    tensor::Graph<T>& g, const LossWeights& w,
    typename tensor::Graph<T>::NodeId recon,
    typename tensor::Graph<T>::NodeId psycho,
    typename tensor::Graph<T>::NodeId decorr,
    typename tensor::Graph<T>::NodeId adv,
    typename tensor::Graph<T>::NodeId victim_conf = -1) {
  validate(w);
  auto total = g.scalar_mul(recon, static_cast<T>(w.alpha_r));
  total = g.add(total, g.scalar_mul(psycho, static_cast<T>(w.alpha_p)));
  total = g.add(total, g.scalar_mul(decorr, static_cast<T>(w.alpha_wd)));
  total = g.add(total, g.scalar_mul(adv, static_cast<T>(w.alpha_a)));
  if (w.alpha_d > 0.0) {
    if (victim_conf < 0) {
      throw std::invalid_argument(
          "gen_total_loss_node: alpha_d > 0 needs a victim confidence node");
    }
    total = g.add(total, g.scalar_mul(victim_conf, static_cast<T>(w.alpha_d)));
  }
  return total;
}

}  // namespace wmlab::loss
