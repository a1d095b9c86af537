#include "wmlab/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>

#include "wmlab/checkpoint.hpp"
#include "wmlab/dsp.hpp"
#include "wmlab/optim.hpp"
#include "wmlab/rng.hpp"

namespace wmlab::attack {

namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_of(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

std::string TrainConfig::digest() const {
  std::string s;
  s += "epochs=" + std::to_string(epochs);
  s += ";batch=" + std::to_string(batch_size);
  s += ";lr_g=" + fmt_g(lr_g);
  s += ";lr_d=" + fmt_g(lr_d);
  s += ";seed=" + std::to_string(seed);
  s += ";crop=" + std::to_string(crop_len);
  s += ";ar=" + fmt_g(weights.alpha_r);
  s += ";ap=" + fmt_g(weights.alpha_p);
  s += ";awd=" + fmt_g(weights.alpha_wd);
  s += ";aa=" + fmt_g(weights.alpha_a);
  s += ";ad=" + fmt_g(weights.alpha_d);
  s += ";victim=" + victim_id;
  s += ";data=" + dataset_id;
  return io::hex64(io::fnv1a64(s));
}

std::string to_csv_row(const TrainLogRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.step,
                r.epoch, r.recon, r.psycho, r.decorr, r.adv, r.total, r.disc,
                r.d_clean, r.d_unwm);
  return buf;
}

std::vector<TrainLogRow> train(removal::GeneratorModel<float>& gen,
                               removal::DiscriminatorModel<float>& disc,
                               const std::vector<ClipPair>& data,
                               const wm::Victim& victim, const TrainConfig& cfg,
                               std::ostream* csv) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train: batch_size must be >= 1");
  }
  loss::validate(cfg.weights);
  const bool guided = cfg.weights.alpha_d > 0.0;
  if (guided && victim.key.scheme != wm::Scheme::kZeroBitSsw) {
    throw std::invalid_argument(
        "train: detector-guided loss is only defined for the zero-bit victim");
  }
  size_t min_len = data[0].clean.size(), max_len = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].clean.size() != data[i].wm.size() ||
        data[i].clean.size() == 0) {
      throw std::invalid_argument("train: pair " + std::to_string(i) +
                                  " is misaligned");
    }
    min_len = std::min(min_len, data[i].clean.size());
    max_len = std::max(max_len, data[i].clean.size());
  }
  const int crop =
      static_cast<int>(std::min<size_t>(cfg.crop_len, min_len));
  if (crop < removal::kGenFftSize) {
    throw std::invalid_argument("train: shortest usable crop is " +
                                std::to_string(removal::kGenFftSize) +
                                " samples");
  }

  const int n = static_cast<int>(data.size());
  const int batch = std::min(cfg.batch_size, n);
  const int steps_per_epoch = std::max(1, n / batch);

  tensor::Adam<float> adam_g(gen.trainable_parameters(),
                             static_cast<float>(cfg.lr_g));
  tensor::Adam<float> adam_d(disc.trainable_parameters(),
                             static_cast<float>(cfg.lr_d));

  // mel projection, transposed to [bins x bands] for the graph-side matmul
  const auto fb =
      dsp::mel_filterbank(loss::kMelBands, loss::kMelLoHz, loss::kMelHiHz,
                          removal::kGenFftSize, kSampleRate);
  const int bins = fb.weights.cols, bands = fb.weights.rows;
  auto mel_t = tensor::Tensor<float>::zeros({bins, bands});
  for (int m = 0; m < bands; ++m) {
    for (int f = 0; f < bins; ++f) {
      mel_t.data[static_cast<size_t>(f) * bands + m] =
          static_cast<float>(fb.weights.at(m, f));
    }
  }

  std::vector<double> pn;  // position-aligned carrier for the guided term
  if (guided) pn = wm::pn_sequence(victim.key, max_len);

  const tensor::PowerSpecConfig pcfg{removal::kGenFftSize, removal::kGenHop};
  Rng rng(cfg.seed);
  std::vector<TrainLogRow> log;
  if (csv) (*csv) << kTrainCsvHeader << '\n';

  AudioClip wm_crop, cl_crop;
  wm_crop.samples.resize(crop);
  cl_crop.samples.resize(crop);

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s) {
      ++step;

      auto wm_t = tensor::Tensor<float>::zeros({batch, 1, crop});
      auto cl_t = tensor::Tensor<float>::zeros({batch, 1, crop});
      auto w_t = tensor::Tensor<float>::zeros({batch, bands});
      tensor::Tensor<float> pn_t;
      if (guided) pn_t = tensor::Tensor<float>::zeros({batch, 1, crop});
      for (int bi = 0; bi < batch; ++bi) {
        const auto& pair = data[rng.uniform_index(static_cast<uint64_t>(n))];
        const size_t span = pair.clean.size() - static_cast<size_t>(crop);
        const size_t off = span == 0 ? 0 : rng.uniform_index(span + 1);
        const size_t dst = static_cast<size_t>(bi) * crop;
        for (int i = 0; i < crop; ++i) {
          const double wv = pair.wm.samples[off + i];
          const double cv = pair.clean.samples[off + i];
          wm_t.data[dst + i] = static_cast<float>(wv);
          cl_t.data[dst + i] = static_cast<float>(cv);
          wm_crop.samples[i] = wv;
          cl_crop.samples[i] = cv;
          if (guided) pn_t.data[dst + i] = static_cast<float>(pn[off + i]);
        }
        const auto stats = loss::psycho_stats(cl_crop, wm_crop, wm_crop);
        for (int m = 0; m < bands; ++m) {
          w_t.data[static_cast<size_t>(bi) * bands + m] =
              static_cast<float>(stats.w[m]);
        }
      }

      // one generator forward per batch
      tensor::Graph<float> g;
      auto x_wm_n = g.constant(wm_t);
      auto fwd = removal::generator_forward(g, gen, x_wm_n, true);

      // discriminator step on the detached generator output
      tensor::Graph<float> gd;
      auto d_real = removal::discriminator_forward(gd, disc, gd.constant(cl_t));
      auto d_fake = removal::discriminator_forward(
          gd, disc, gd.constant(g.val(fwd.x_unwm)));
      auto dl = loss::disc_loss_node(gd, d_real, d_fake);
      const double disc_v = gd.val(dl).data[0];
      const double d_clean_mean = mean_of(gd.val(d_real).data);
      const double d_unwm_mean = mean_of(gd.val(d_fake).data);
      gd.backward(dl);
      adam_d.step();

      // generator step against the updated discriminator
      auto x_cl_n = g.constant(cl_t);
      auto recon = loss::recon_loss_node(g, fwd.x_unwm, x_cl_n);
      auto decorr = loss::decorr_loss_node(g, fwd.x_unwm, x_wm_n, x_cl_n);
      auto psycho = loss::psycho_loss_node(g, fwd.x_unwm,
                                           g.power_spec(x_cl_n, pcfg),
                                           g.constant(w_t),
                                           g.constant(mel_t), pcfg);
      auto adv =
          loss::adv_loss_node(g, removal::discriminator_forward(g, disc,
                                                                fwd.x_unwm));
      tensor::Graph<float>::NodeId victim_node = -1;
      if (guided) {
        victim_node = loss::victim_conf_node(
            g, fwd.x_unwm, g.constant(pn_t),
            static_cast<float>(victim.detector.a),
            static_cast<float>(victim.detector.b));
      }
      auto total = loss::gen_total_loss_node(g, cfg.weights, recon, psycho,
                                             decorr, adv, victim_node);
      const double total_v = g.val(total).data[0];
      if (!std::isfinite(total_v) || !std::isfinite(disc_v)) {
        throw std::runtime_error("train: non-finite loss at step " +
                                 std::to_string(step));
      }
      g.backward(total);
      adam_g.step();
      // the adversarial term leased the discriminator's tensors; drop the
      // gradients that landed there so the next D step starts clean
      for (auto* p : disc.trainable_parameters()) p->grad.clear();

      TrainLogRow row;
      row.step = step;
      row.epoch = epoch;
      row.recon = g.val(recon).data[0];
      row.psycho = g.val(psycho).data[0];
      row.decorr = g.val(decorr).data[0];
      row.adv = g.val(adv).data[0];
      row.total = total_v;
      row.disc = disc_v;
      row.d_clean = d_clean_mean;
      row.d_unwm = d_unwm_mean;
      log.push_back(row);
      if (csv) (*csv) << to_csv_row(row) << '\n';
    }
  }
  return log;
}

RemovalOutcome remove(removal::GeneratorModel<float>& gen,
                      wm::VictimSession& session, const AudioClip& x_wm) {
  if (x_wm.size() < static_cast<size_t>(removal::kGenFftSize)) {
    throw std::invalid_argument("remove: clip shorter than " +
                                std::to_string(removal::kGenFftSize) +
                                " samples");
  }
  RemovalOutcome out;
  const uint64_t q0 = session.queries();
  const auto before = session.detect(x_wm);
  out.conf_before = before.confidence;
  out.x_out = removal::generator_apply(gen, x_wm);
  const auto after = session.detect(out.x_out);
  out.conf_after = after.confidence;
  out.success = !session.watermarked(after);
  out.queries = static_cast<int>(session.queries() - q0);
  return out;
}

SquareAttackResult square_attack(wm::VictimSession& session,
                                 const AudioClip& x_wm,
                                 const SquareAttackConfig& cfg) {
  if (cfg.max_queries < 1) {
    throw std::invalid_argument("square_attack: query budget must be >= 1");
  }
  if (!(cfg.eps > 0.0) || cfg.eps > 1.0) {
    throw std::invalid_argument("square_attack: eps must be in (0, 1]");
  }
  require_nonempty(x_wm, "square_attack");
  const auto t0 = std::chrono::steady_clock::now();
  const int len = static_cast<int>(x_wm.size());

  SquareAttackResult res;
  res.x_adv = x_wm;

  auto first = session.detect(res.x_adv);
  res.queries = 1;
  double best_ag = session.agreement(first);
  res.trace.push_back(best_ag);
  if (!session.watermarked(first)) {
    res.success = true;
    res.elapsed_s = elapsed_since(t0);
    return res;
  }

  Rng rng(cfg.seed);
  double frac = cfg.init_frac;
  const int stall_window = std::max(1, cfg.max_queries / 5);
  int stall = 0;
  std::vector<double> delta(len, 0.0), cand_delta(len);
  AudioClip cand = x_wm;

  while (res.queries < cfg.max_queries) {
    int wlen = std::max(1, static_cast<int>(std::llround(frac * len)));
    wlen = std::min(wlen, len);
    const int start =
        static_cast<int>(rng.uniform_index(static_cast<uint64_t>(len - wlen + 1)));
    const double c = rng.uniform(-cfg.eps, cfg.eps);
    cand_delta = delta;
    for (int i = start; i < start + wlen; ++i) {
      cand_delta[i] = std::clamp(cand_delta[i] + c, -cfg.eps, cfg.eps);
    }
    for (int i = 0; i < len; ++i) {
      cand.samples[i] = clamp_sample(x_wm.samples[i] + cand_delta[i]);
    }
    const auto r = session.detect(cand);
    ++res.queries;
    const double ag = session.agreement(r);
    if (!session.watermarked(r)) {
      res.x_adv = cand;
      best_ag = std::min(best_ag, ag);
      res.trace.push_back(best_ag);
      res.success = true;
      break;
    }
    if (ag < best_ag) {
      res.x_adv = cand;
      delta.swap(cand_delta);
      best_ag = ag;
      stall = 0;
    } else if (++stall >= stall_window) {
      frac = std::max(frac * 0.5, 1.0 / len);
      stall = 0;
    }
    res.trace.push_back(best_ag);
  }
  res.elapsed_s = elapsed_since(t0);
  return res;
}

AudioClip codec_attack(const AudioClip& x, const CodecConfig& cfg) {
  require_nonempty(x, "codec_attack");
  if (cfg.kind == CodecKind::kLowpass) {
    if (!(cfg.cutoff_hz > 0.0) || cfg.cutoff_hz >= x.sample_rate / 2.0) {
      throw std::invalid_argument(
          "codec_attack: cutoff must sit strictly below Nyquist");
    }
    const dsp::StftConfig sc;
    const size_t len = x.size();
    size_t padded = sc.fft_size;
    if (len > static_cast<size_t>(sc.fft_size)) {
      const size_t over = len - sc.fft_size;
      padded = sc.fft_size + (over + sc.hop - 1) / sc.hop * sc.hop;
    }
    AudioClip xp = x;
    xp.samples.resize(padded, 0.0);
    auto spec = dsp::stft(xp, sc);
    const double hz_per_bin = x.sample_rate / static_cast<double>(sc.fft_size);
    for (int t = 0; t < spec.frames; ++t) {
      for (int f = 0; f < spec.bins(); ++f) {
        if (f * hz_per_bin > cfg.cutoff_hz) spec.at(t, f) = 0.0;
      }
    }
    AudioClip y = dsp::istft(spec);
    y.samples.resize(len);
    y.sample_rate = x.sample_rate;
    return y;
  }
  if (cfg.bits < 2 || cfg.bits > 16) {
    throw std::invalid_argument("codec_attack: bits must be in [2, 16]");
  }
  const double delta = std::ldexp(1.0, 1 - cfg.bits);
  const long long lo = -(1LL << (cfg.bits - 1));
  const long long hi = (1LL << (cfg.bits - 1)) - 1;
  AudioClip y = x;
  for (double& s : y.samples) {
    auto idx = static_cast<long long>(std::floor(s / delta));
    idx = std::clamp(idx, lo, hi);
    s = delta * (static_cast<double>(idx) + 0.5);
  }
  return y;
}

std::vector<CodecConfig> codec_ladder() {
  std::vector<CodecConfig> out;
  for (double cutoff : {3400.0, 5000.0, 7000.0}) {
    CodecConfig c;
    c.kind = CodecKind::kLowpass;
    c.cutoff_hz = cutoff;
    out.push_back(c);
  }
  for (int bits : {6, 8, 10}) {
    CodecConfig c;
    c.kind = CodecKind::kQuantize;
    c.bits = bits;
    out.push_back(c);
  }
  return out;
}

}  // namespace wmlab::attack
