#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "wmlab/audio.hpp"
#include "wmlab/losses.hpp"
#include "wmlab/removal.hpp"
#include "wmlab/watermark.hpp"

namespace wmlab::attack {

struct ClipPair {
  AudioClip clean;
  AudioClip wm;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  uint64_t seed = 1;
  int crop_len = 4096;  // random aligned crop length per batch item
  loss::LossWeights weights;
  std::string victim_id;   // folded into digest() for checkpoint provenance
  std::string dataset_id;

  std::string digest() const;  // stable hex64 content hash
};

struct TrainLogRow {
  int step = 0;   // 1-based global batch index
  int epoch = 0;  // 1-based
  double recon = 0.0, psycho = 0.0, decorr = 0.0, adv = 0.0, total = 0.0;
  double disc = 0.0, d_clean = 0.0, d_unwm = 0.0;
};

inline constexpr const char* kTrainCsvHeader =
    "step,epoch,L_recon,L_psycho,L_decorr,L_adv,L_total,L_disc,d_clean_mean,"
    "d_unwm_mean";

std::string to_csv_row(const TrainLogRow& row);

// Co-trains generator and discriminator on aligned (clean, watermarked)
// pairs: per batch one generator forward, a discriminator step on the
// detached output, then a generator step against the updated discriminator.
// One log row per batch. The detector-guided term (alpha_d > 0) is only
// available for the zero-bit victim.
std::vector<TrainLogRow> train(removal::GeneratorModel<float>& gen,
                               removal::DiscriminatorModel<float>& disc,
                               const std::vector<ClipPair>& data,
                               const wm::Victim& victim,
                               const TrainConfig& cfg,
                               std::ostream* csv = nullptr);

struct RemovalOutcome {
  AudioClip x_out;
  double conf_before = 0.0;
  double conf_after = 0.0;
  bool success = false;
  int queries = 0;  // victim detector calls made here; always 2
};

// Single-pass removal: detect, one generator forward, detect again.
RemovalOutcome remove(removal::GeneratorModel<float>& gen,
                      wm::VictimSession& session,
                      const AudioClip& x_wm);

struct SquareAttackConfig {
  int max_queries = 2000;
  double eps = 0.1;         // max |x_adv - x_wm| per sample
  double init_frac = 0.05;  // initial window length as a fraction of the clip
  uint64_t seed = 0;
};

struct SquareAttackResult {
  AudioClip x_adv;
  bool success = false;
  int queries = 0;
  double elapsed_s = 0.0;
  std::vector<double> trace;  // best agreement after each query; non-increasing
};

// Black-box baseline: random constant-offset time windows, kept only when
// detector agreement strictly drops. Window length halves after
// max_queries/5 consecutive rejections.
SquareAttackResult square_attack(wm::VictimSession& session,
                                 const AudioClip& x_wm,
                                 const SquareAttackConfig& cfg);

enum class CodecKind { kLowpass, kQuantize };

struct CodecConfig {
  CodecKind kind = CodecKind::kLowpass;
  double cutoff_hz = 3400.0;  // ladder: 3400 / 5000 / 7000
  int bits = 8;               // ladder: 6 / 8 / 10
};

// Lossy-codec stand-ins: STFT brickwall lowpass or midrise requantization.
AudioClip codec_attack(const AudioClip& x, const CodecConfig& cfg);

std::vector<CodecConfig> codec_ladder();

}  // namespace wmlab::attack
