#include "wmlab/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "wmlab/dsp.hpp"
#include "wmlab/losses.hpp"
#include "wmlab/thread_pool.hpp"

namespace wmlab::eval {

namespace {

constexpr double kLsdPowerFloor = 1e-10;
constexpr double kLsdEtaDb = 6.0;

double now_gap_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

uint64_t item_seed_for(uint64_t seed, int64_t i) {
  return seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(i + 1));
}

// raw power dB per mel band, no normalization: the quality proxy compares
// absolute spectra
Mat mel_db_profile(const AudioClip& x) {
  const dsp::StftConfig cfg;
  if (cfg.frames_for(x.size()) < 1) {
    throw std::invalid_argument("quality_score: clip shorter than one frame");
  }
  const auto fb =
      dsp::mel_filterbank(loss::kMelBands, loss::kMelLoHz, loss::kMelHiHz,
                          cfg.fft_size, x.sample_rate);
  Mat e = dsp::mel_band_energies(dsp::stft(x, cfg), fb);
  for (double& v : e.v) {
    v = 10.0 * std::log10(std::max(v, kLsdPowerFloor));
  }
  return e;
}

}  // namespace

double asr(const std::vector<bool>& successes) {
  if (successes.empty()) throw std::invalid_argument("asr: no results");
  size_t hits = 0;
  for (bool s : successes) hits += s ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(successes.size());
}

double lsd_db(const AudioClip& x_ref, const AudioClip& x_out) {
  if (x_ref.size() != x_out.size()) {
    throw std::invalid_argument("quality_score: length mismatch");
  }
  const Mat a = mel_db_profile(x_ref);
  const Mat b = mel_db_profile(x_out);
  double sum = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) sum += std::abs(a.v[i] - b.v[i]);
  return sum / static_cast<double>(a.v.size());
}

double quality_score(const AudioClip& x_ref, const AudioClip& x_out) {
  return 1.0 / (1.0 + lsd_db(x_ref, x_out) / kLsdEtaDb);
}

std::string to_csv_row(const SampleRow& r) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%d,%.9g,%.9g", r.sample_id,
                r.conf_before, r.conf_after, r.success ? 1 : 0, r.pq_proxy,
                r.attack_time_s);
  return buf;
}

void write_csv(std::ostream& os, const EvalReport& report) {
  os << kEvalCsvHeader << '\n';
  for (const auto& row : report.rows) os << to_csv_row(row) << '\n';
}

AttackFn identity_attack_fn() {
  return [](const AudioClip& x, wm::VictimSession&, uint64_t) { return x; };
}

AttackFn harmonic_attack_fn(removal::GeneratorModel<float>& gen) {
  return [&gen](const AudioClip& x, wm::VictimSession&, uint64_t) {
    return removal::generator_apply(gen, x);
  };
}

AttackFn square_attack_fn(attack::SquareAttackConfig cfg) {
  return [cfg](const AudioClip& x, wm::VictimSession& session,
               uint64_t item_seed) {
    attack::SquareAttackConfig c = cfg;
    c.seed = item_seed;
    return attack::square_attack(session, x, c).x_adv;
  };
}

AttackFn codec_attack_fn(attack::CodecConfig cfg) {
  return [cfg](const AudioClip& x, wm::VictimSession&, uint64_t) {
    return attack::codec_attack(x, cfg);
  };
}

EvalReport run_eval(const std::vector<AudioClip>& clean,
                    const wm::Victim& victim, const AttackFn& attack,
                    const std::string& attack_id, const std::string& victim_id,
                    const std::string& dataset_id, uint64_t seed,
                    bool parallel) {
  if (clean.empty()) throw std::invalid_argument("run_eval: empty dataset");
  const auto n = static_cast<int64_t>(clean.size());

  EvalReport report;
  report.attack_id = attack_id;
  report.victim_id = victim_id;
  report.dataset_id = dataset_id;
  report.n_samples = static_cast<int>(n);
  report.rows.resize(clean.size());

  auto work = [&](int64_t i) {
    const uint64_t item_seed = item_seed_for(seed, i);
    wm::VictimSession session(victim, item_seed);
    const AudioClip x_wm = session.embed(clean[i]);
    SampleRow row;
    row.sample_id = static_cast<int>(i);
    row.conf_before = session.detect(x_wm).confidence;
    const auto t0 = std::chrono::steady_clock::now();
    const AudioClip x_out = attack(x_wm, session, item_seed);
    row.attack_time_s = now_gap_s(t0);
    const auto after = session.detect(x_out);
    row.conf_after = after.confidence;
    row.success = !session.watermarked(after);
    row.pq_proxy = quality_score(x_wm, x_out);
    report.rows[i] = row;
  };
  if (parallel) {
    ThreadPool::parallel_for(n, work);
  } else {
    for (int64_t i = 0; i < n; ++i) work(i);
  }

  size_t hits = 0;
  double q = 0.0, t = 0.0;
  for (const auto& row : report.rows) {
    hits += row.success ? 1 : 0;
    q += row.pq_proxy;
    t += row.attack_time_s;
  }
  report.asr = static_cast<double>(hits) / static_cast<double>(n);
  report.quality_mean = q / static_cast<double>(n);
  report.attack_time_mean_s = t / static_cast<double>(n);
  return report;
}

std::vector<attack::ClipPair> embed_pairs(const std::vector<AudioClip>& clean,
                                          const wm::Victim& victim,
                                          uint64_t seed_base) {
  std::vector<attack::ClipPair> pairs(clean.size());
  ThreadPool::parallel_for(
      static_cast<int64_t>(clean.size()), [&](int64_t i) {
        pairs[i].clean = clean[i];
        pairs[i].wm = wm::victim_embed(victim, clean[i],
                                       seed_base + static_cast<uint64_t>(i));
      });
  return pairs;
}

std::vector<AblationVariant> ablation_variants() {
  loss::LossWeights full;  // defaults: recon + psycho + decorr + adv
  std::vector<AblationVariant> out;

  AblationVariant baseline{"baseline", full};
  baseline.weights.alpha_a = 0.0;
  out.push_back(baseline);

  out.push_back({"adv", full});

  AblationVariant baseline_d{"baseline_d", baseline.weights};
  baseline_d.weights.alpha_d = 0.1;
  out.push_back(baseline_d);

  AblationVariant adv_d{"adv_d", full};
  adv_d.weights.alpha_d = 0.1;
  out.push_back(adv_d);

  AblationVariant no_recon{"no_recon", full};
  no_recon.weights.alpha_r = 0.0;
  out.push_back(no_recon);

  AblationVariant no_psycho{"no_psycho", full};
  no_psycho.weights.alpha_p = 0.0;
  out.push_back(no_psycho);

  AblationVariant no_wd{"no_wd", full};
  no_wd.weights.alpha_wd = 0.0;
  out.push_back(no_wd);

  return out;
}

std::vector<AblationRow> run_ablation(
    const std::vector<AblationVariant>& variants,
    const std::vector<AudioClip>& train_clean,
    const std::vector<AudioClip>& held_out, const wm::Victim& victim,
    const attack::TrainConfig& base_cfg, uint64_t eval_seed) {
  if (variants.empty()) {
    throw std::invalid_argument("run_ablation: no variants");
  }
  const auto pairs = embed_pairs(train_clean, victim, 0);
  std::vector<AblationRow> rows;
  rows.reserve(variants.size());
  for (const auto& v : variants) {
    removal::GeneratorModel<float> gen;
    removal::DiscriminatorModel<float> disc;
    removal::init_models(base_cfg.seed, gen, disc);
    attack::TrainConfig cfg = base_cfg;
    cfg.weights = v.weights;
    attack::train(gen, disc, pairs, victim, cfg, nullptr);
    EvalReport rep =
        run_eval(held_out, victim, harmonic_attack_fn(gen),
                 "harmonic:" + v.name, base_cfg.victim_id,
                 base_cfg.dataset_id, eval_seed, true);
    rows.push_back({v.name, std::move(rep)});
  }
  return rows;
}

void write_ablation_csv(std::ostream& os,
                        const std::vector<AblationRow>& rows) {
  os << "variant,n_samples,asr,quality_mean,attack_time_mean_s\n";
  for (const auto& r : rows) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%s,%d,%.9g,%.9g,%.9g", r.variant.c_str(),
                  r.report.n_samples, r.report.asr, r.report.quality_mean,
                  r.report.attack_time_mean_s);
    os << buf << '\n';
  }
}

GridResult grid_search(const std::vector<double>& alpha_r_vals,
                       const std::vector<double>& alpha_p_vals,
                       const std::vector<double>& alpha_a_vals,
                       const std::vector<AudioClip>& train_clean,
                       const std::vector<AudioClip>& held_out,
                       const wm::Victim& victim,
                       const attack::TrainConfig& base_cfg,
                       uint64_t eval_seed) {
  if (alpha_r_vals.empty() || alpha_p_vals.empty() || alpha_a_vals.empty()) {
    throw std::invalid_argument("grid_search: empty axis");
  }
  GridResult out;
  out.alpha_r_vals = alpha_r_vals;
  out.alpha_p_vals = alpha_p_vals;
  out.alpha_a_vals = alpha_a_vals;
  const int nr = static_cast<int>(alpha_r_vals.size());
  const int np = static_cast<int>(alpha_p_vals.size());
  const int na = static_cast<int>(alpha_a_vals.size());
  out.asr_cube.resize(static_cast<size_t>(nr) * np * na);

  const auto pairs = embed_pairs(train_clean, victim, 0);
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < np; ++j) {
      for (int k = 0; k < na; ++k) {
        removal::GeneratorModel<float> gen;
        removal::DiscriminatorModel<float> disc;
        removal::init_models(base_cfg.seed, gen, disc);
        attack::TrainConfig cfg = base_cfg;
        cfg.weights.alpha_r = alpha_r_vals[i];
        cfg.weights.alpha_p = alpha_p_vals[j];
        cfg.weights.alpha_a = alpha_a_vals[k];
        cfg.weights.alpha_d = 0.0;  // grid sweeps the published loss only
        attack::train(gen, disc, pairs, victim, cfg, nullptr);
        const EvalReport rep =
            run_eval(held_out, victim, harmonic_attack_fn(gen), "harmonic",
                     base_cfg.victim_id, base_cfg.dataset_id, eval_seed, true);
        out.asr_cube[(static_cast<size_t>(i) * np + j) * na + k] = rep.asr;
      }
    }
  }

  out.rp.assign(static_cast<size_t>(nr) * np, 0.0);
  out.ra.assign(static_cast<size_t>(nr) * na, 0.0);
  out.pa.assign(static_cast<size_t>(np) * na, 0.0);
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < np; ++j) {
      for (int k = 0; k < na; ++k) {
        const double v = out.cube(i, j, k);
        out.rp[static_cast<size_t>(i) * np + j] += v / na;
        out.ra[static_cast<size_t>(i) * na + k] += v / np;
        out.pa[static_cast<size_t>(j) * na + k] += v / nr;
      }
    }
  }
  return out;
}

namespace {

void write_matrix(std::ostream& os, const std::string& title,
                  const std::string& row_name,
                  const std::vector<double>& row_vals,
                  const std::vector<double>& col_vals,
                  const std::vector<double>& m) {
  os << title << '\n' << row_name;
  char buf[64];
  for (double c : col_vals) {
    std::snprintf(buf, sizeof buf, ",%.9g", c);
    os << buf;
  }
  os << '\n';
  for (size_t i = 0; i < row_vals.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", row_vals[i]);
    os << buf;
    for (size_t j = 0; j < col_vals.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.9g", m[i * col_vals.size() + j]);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace

void write_grid_csv(std::ostream& os, const GridResult& g) {
  write_matrix(os, "asr: alpha_r x alpha_p (mean over alpha_a)",
               "alpha_r\\alpha_p", g.alpha_r_vals, g.alpha_p_vals, g.rp);
  os << '\n';
  write_matrix(os, "asr: alpha_r x alpha_a (mean over alpha_p)",
               "alpha_r\\alpha_a", g.alpha_r_vals, g.alpha_a_vals, g.ra);
  os << '\n';
  write_matrix(os, "asr: alpha_p x alpha_a (mean over alpha_r)",
               "alpha_p\\alpha_a", g.alpha_p_vals, g.alpha_a_vals, g.pa);
}

DiffMap spectrogram_diff(const AudioClip& a, const AudioClip& b,
                         double top_quantile, int max_boxes) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("spectrogram_diff: length mismatch");
  }
  if (!(top_quantile > 0.0 && top_quantile < 1.0)) {
    throw std::invalid_argument("spectrogram_diff: quantile must be in (0,1)");
  }
  const dsp::StftConfig cfg;
  if (cfg.frames_for(a.size()) < 1) {
    throw std::invalid_argument("spectrogram_diff: clips shorter than one frame");
  }
  const auto sa = dsp::stft(a, cfg);
  const auto sb = dsp::stft(b, cfg);
  const int frames = sa.frames, bins = sa.bins();
  const size_t n = static_cast<size_t>(frames) * bins;

  DiffMap map;
  map.frames = frames;
  map.bins = bins;
  map.db.assign(n, kDiffFloorDb);

  std::vector<double> mag(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mag[i] = std::abs(std::abs(sa.values[i]) - std::abs(sb.values[i]));
    peak = std::max(peak, mag[i]);
  }
  if (peak < 1e-12) return map;  // identical inputs: uniform floor, no boxes

  for (size_t i = 0; i < n; ++i) {
    if (mag[i] <= 0.0) continue;
    const double db = 20.0 * std::log10(mag[i] / peak);
    map.db[i] = std::clamp(db, kDiffFloorDb, 0.0);
  }

  // nearest-rank quantile threshold; mask keeps strictly-above-floor pixels
  std::vector<double> sorted(map.db);
  std::sort(sorted.begin(), sorted.end());
  const size_t rank =
      std::max<size_t>(1, static_cast<size_t>(
                              std::ceil(top_quantile * static_cast<double>(n)))) -
      1;
  const double thr = sorted[rank];

  std::vector<uint8_t> mask(n, 0);
  for (size_t i = 0; i < n; ++i) {
    mask[i] = (map.db[i] > thr && map.db[i] > kDiffFloorDb) ? 1 : 0;
  }

  // connected components (4-neighborhood) over the [frames x bins] grid
  struct Comp {
    DiffBox box;
    double energy = 0.0;
  };
  std::vector<Comp> comps;
  std::vector<size_t> stack;
  for (size_t s = 0; s < n; ++s) {
    if (!mask[s]) continue;
    Comp c;
    const int st = static_cast<int>(s) / bins;
    const int sf = static_cast<int>(s) % bins;
    c.box = {st, st, sf, sf};
    stack.assign(1, s);
    mask[s] = 0;
    while (!stack.empty()) {
      const size_t cur = stack.back();
      stack.pop_back();
      const int t = static_cast<int>(cur) / bins;
      const int f = static_cast<int>(cur) % bins;
      c.box.t0 = std::min(c.box.t0, t);
      c.box.t1 = std::max(c.box.t1, t);
      c.box.f0 = std::min(c.box.f0, f);
      c.box.f1 = std::max(c.box.f1, f);
      const double lin = mag[cur] / peak;
      c.energy += lin * lin;
      const int tt[4] = {t - 1, t + 1, t, t};
      const int ff[4] = {f, f, f - 1, f + 1};
      for (int q = 0; q < 4; ++q) {
        if (tt[q] < 0 || tt[q] >= frames || ff[q] < 0 || ff[q] >= bins) {
          continue;
        }
        const size_t idx = static_cast<size_t>(tt[q]) * bins + ff[q];
        if (mask[idx]) {
          mask[idx] = 0;
          stack.push_back(idx);
        }
      }
    }
    comps.push_back(c);
  }
  std::sort(comps.begin(), comps.end(),
            [](const Comp& x, const Comp& y) { return x.energy > y.energy; });
  const size_t keep =
      std::min<size_t>(comps.size(), static_cast<size_t>(std::max(0, max_boxes)));
  map.boxes.reserve(keep);
  for (size_t i = 0; i < keep; ++i) map.boxes.push_back(comps[i].box);
  return map;
}

void write_pgm(const std::string& path, const DiffMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
  os << "P5\n" << map.frames << ' ' << map.bins << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(map.frames));
  for (int f = 0; f < map.bins; ++f) {
    for (int t = 0; t < map.frames; ++t) {
      const double v = (map.at(t, f) - kDiffFloorDb) / -kDiffFloorDb * 255.0;
      row[t] = static_cast<unsigned char>(
          std::clamp(std::lround(v), 0L, 255L));
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("write_pgm: short write to " + path);
}

void write_boxes_json(const std::string& path, const DiffMap& map) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : map.boxes) {
    boxes.push_back({{"t0", b.t0}, {"t1", b.t1}, {"f0", b.f0}, {"f1", b.f1}});
  }
  nlohmann::json j{{"frames", map.frames}, {"bins", map.bins}, {"boxes", boxes}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_boxes_json: cannot open " + path);
  os << j.dump(2) << '\n';
}

}  // namespace wmlab::eval
