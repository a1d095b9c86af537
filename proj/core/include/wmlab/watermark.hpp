#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "wmlab/audio.hpp"

namespace wmlab::wm {

enum class Scheme { kZeroBitSsw, kMultiBitQim };

Scheme scheme_from_string(const std::string& s);
std::string to_string(Scheme s);

// Same (seed, scheme) must embed identically forever.
struct WatermarkKey {
  uint64_t seed = 0;
  Scheme scheme = Scheme::kZeroBitSsw;
};

struct DetectorConfig {
  double threshold = 0.5;  // decision threshold on confidence, in (0,1)
  double a = 1.0;          // logistic scale, > 0
  double b = 0.0;          // logistic midpoint (calibrated)
};

struct DetectionResult {
  double confidence = 0.0;
  double statistic = 0.0;             // raw correlation z (diagnostic)
  std::vector<uint8_t> decoded_bits;  // multi-bit only, exactly kQimBits
};

// ±1 carrier: one splitmix64 draw per element, sign from the top bit
std::vector<double> pn_sequence(const WatermarkKey& key, size_t len);

// --- zero-bit spread spectrum ---
// Per-frame masking proxy: gain follows local RMS so the mark hides under
// louder content.
constexpr int kSswFrame = 512;

AudioClip ssw_embed(const AudioClip& clip, const WatermarkKey& key, double beta);
DetectionResult ssw_detect(const AudioClip& clip, const WatermarkKey& key,
                           const DetectorConfig& cfg);

// --- multi-bit QIM over STFT magnitudes ---
constexpr int kQimBits = 16;
constexpr int kQimCellsPerBit = 8;
constexpr double kQimBandLoHz = 1000.0;
constexpr double kQimBandHiHz = 4000.0;

struct QimCell {
  int frame;
  int bin;
};

// Keyed disjoint cell assignment for a clip of n_samples; cells
// [j*kQimCellsPerBit, (j+1)*kQimCellsPerBit) carry bit j.
std::vector<QimCell> qim_cells(const WatermarkKey& key, size_t n_samples);

std::vector<uint8_t> qim_message(uint64_t message_seed);  // kQimBits bits

AudioClip qim_embed(const AudioClip& clip, const WatermarkKey& key,
                    const std::vector<uint8_t>& bits, double delta);
DetectionResult qim_decode(const AudioClip& clip, const WatermarkKey& key,
                           double delta);

struct CalibrationFailure : std::runtime_error {
  explicit CalibrationFailure(const std::string& what)
      : std::runtime_error(what) {}
};

// Fits the logistic detector on n_clips synthetic clips (clean vs embedded z
// distributions). Throws CalibrationFailure when the distributions are not
// separable (watermarked 5th percentile <= clean 95th percentile).
DetectorConfig calibrate_detector(Scheme scheme, double strength, int n_clips,
                                  uint64_t key_seed, uint64_t data_seed);

// A victim = scheme + key + strength + calibrated detector.
// JSON layout: {scheme, seed, strength, a, b, tau}
struct Victim {
  WatermarkKey key;
  double strength = 0.1;  // ssw beta or qim delta
  DetectorConfig detector;
};

void save_victim(const std::string& path, const Victim& v);
Victim load_victim(const std::string& path);

AudioClip victim_embed(const Victim& v, const AudioClip& clean,
                       uint64_t item_seed);
DetectionResult victim_detect(const Victim& v, const AudioClip& x);

// Per-clip interaction handle. Owns the item's embedded message (multi-bit)
// and counts detector queries so attack budgets are assertable.
class VictimSession {
 public:
  VictimSession(const Victim& v, uint64_t item_seed);

  AudioClip embed(const AudioClip& clean) const;  // not a detector query
  DetectionResult detect(const AudioClip& x);     // counts one query

  // Single source of truth for the success rule:
  // zero-bit: watermark present iff confidence >= threshold;
  // multi-bit: present iff decoded == embedded message.
  bool watermarked(const DetectionResult& r) const;

  // Search signal for query attacks: zero-bit -> confidence;
  // multi-bit -> fraction of decoded bits matching the embedded message.
  double agreement(const DetectionResult& r) const;

  const Victim& victim() const { return *victim_; }
  const std::vector<uint8_t>& message() const { return message_; }
  uint64_t queries() const { return queries_; }

 private:
  const Victim* victim_;
  std::vector<uint8_t> message_;  // empty for zero-bit
  uint64_t queries_ = 0;
};

}  // namespace wmlab::wm
