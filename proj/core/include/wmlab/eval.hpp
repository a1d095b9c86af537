#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "wmlab/attacks.hpp"
#include "wmlab/audio.hpp"
#include "wmlab/removal.hpp"
#include "wmlab/watermark.hpp"

namespace wmlab::eval {

// fraction of successful removals; empty input is a caller bug
double asr(const std::vector<bool>& successes);

// mean |dB(mel(x_out)) - dB(mel(x_ref))| over frames and bands, raw dB
double lsd_db(const AudioClip& x_ref, const AudioClip& x_out);

// pq_proxy = 1 / (1 + LSD/6); 1.0 for identical clips. Not ITU PEAQ.
double quality_score(const AudioClip& x_ref, const AudioClip& x_out);

struct SampleRow {
  int sample_id = 0;
  double conf_before = 0.0;
  double conf_after = 0.0;
  bool success = false;
  double pq_proxy = 0.0;
  double attack_time_s = 0.0;
};

struct EvalReport {
  std::string attack_id, victim_id, dataset_id;
  int n_samples = 0;
  double asr = 0.0;
  double quality_mean = 0.0;
  double attack_time_mean_s = 0.0;
  std::vector<SampleRow> rows;
};

inline constexpr const char* kEvalCsvHeader =
    "sample_id,conf_before,conf_after,success,pq_proxy,attack_time_s";

std::string to_csv_row(const SampleRow& row);
void write_csv(std::ostream& os, const EvalReport& report);

// An attack maps the watermarked clip to an attacked clip. Query-based
// attacks may call the per-sample session; transforms ignore it.
using AttackFn = std::function<AudioClip(
    const AudioClip& x_wm, wm::VictimSession& session, uint64_t item_seed)>;

AttackFn identity_attack_fn();
AttackFn harmonic_attack_fn(removal::GeneratorModel<float>& gen);
AttackFn square_attack_fn(attack::SquareAttackConfig cfg);
AttackFn codec_attack_fn(attack::CodecConfig cfg);

// Per sample: embed, detect, attack (timed), detect again.
// item_seed(i) derives from `seed`, so reruns are bit-identical and
// parallel execution cannot change any non-timing column.
EvalReport run_eval(const std::vector<AudioClip>& clean,
                    const wm::Victim& victim, const AttackFn& attack,
                    const std::string& attack_id,
                    const std::string& victim_id,
                    const std::string& dataset_id, uint64_t seed,
                    bool parallel = true);

// pair i = (clean[i], embed(clean[i], item_seed = seed_base + i))
std::vector<attack::ClipPair> embed_pairs(const std::vector<AudioClip>& clean,
                                          const wm::Victim& victim,
                                          uint64_t seed_base = 0);

struct AblationVariant {
  std::string name;
  loss::LossWeights weights;
};

// {baseline, adv, baseline_d, adv_d} plus one-term exclusions of the
// full loss (no_recon, no_psycho, no_wd)
std::vector<AblationVariant> ablation_variants();

struct AblationRow {
  std::string variant;
  EvalReport report;
};

// Trains each variant from the same seed and the same embedded pairs,
// then evaluates single-pass removal on the held-out set.
std::vector<AblationRow> run_ablation(
    const std::vector<AblationVariant>& variants,
    const std::vector<AudioClip>& train_clean,
    const std::vector<AudioClip>& held_out, const wm::Victim& victim,
    const attack::TrainConfig& base_cfg, uint64_t eval_seed);

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

struct GridResult {
  std::vector<double> alpha_r_vals, alpha_p_vals, alpha_a_vals;
  std::vector<double> asr_cube;  // [r][p][a], r-major
  double cube(int i, int j, int k) const {
    return asr_cube[(static_cast<size_t>(i) * alpha_p_vals.size() + j) *
                        alpha_a_vals.size() +
                    k];
  }
  // pairwise matrices, each averaged over the absent axis
  std::vector<double> rp, ra, pa;
};

GridResult grid_search(const std::vector<double>& alpha_r_vals,
                       const std::vector<double>& alpha_p_vals,
                       const std::vector<double>& alpha_a_vals,
                       const std::vector<AudioClip>& train_clean,
                       const std::vector<AudioClip>& held_out,
                       const wm::Victim& victim,
                       const attack::TrainConfig& base_cfg,
                       uint64_t eval_seed);

void write_grid_csv(std::ostream& os, const GridResult& grid);

struct DiffBox {
  int t0 = 0, t1 = 0;  // inclusive frame range
  int f0 = 0, f1 = 0;  // inclusive bin range
};

struct DiffMap {
  int frames = 0, bins = 0;
  std::vector<double> db;  // [frames x bins] frame-major, within [-80, 0]
  std::vector<DiffBox> boxes;
  double at(int t, int f) const {
    return db[static_cast<size_t>(t) * bins + f];
  }
};

inline constexpr double kDiffFloorDb = -80.0;

// |mag(a) - mag(b)| normalized to its own peak, in dB, clamped to
// [-80, 0]; identical inputs give a uniform floor. Boxes are bounding
// rectangles of connected above-quantile regions, strongest first. The
// default keeps the top 3% of pixels: sparse per-cell edits land on
// ~0.5% of pixels but overlap-add resynthesis smears each one, so a
// tighter cut misses a large share of the edited cells.
DiffMap spectrogram_diff(const AudioClip& a, const AudioClip& b,
                         double top_quantile = 0.97, int max_boxes = 256);

// 8-bit PGM, width = frames, height = bins (bin 0 on the top row)
void write_pgm(const std::string& path, const DiffMap& map);
void write_boxes_json(const std::string& path, const DiffMap& map);

}  // namespace wmlab::eval
