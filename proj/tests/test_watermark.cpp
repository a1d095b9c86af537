#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "wmlab/dsp.hpp"
#include "wmlab/rng.hpp"
#include "wmlab/synth.hpp"
#include "wmlab/watermark.hpp"

using namespace wmlab;

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

AudioClip noise_clip(double amp, size_t n, uint64_t seed) {
  AudioClip c;
  c.sample_rate = kSampleRate;
  c.samples.resize(n);
  Rng rng(seed);
  for (auto& s : c.samples) s = rng.uniform(-amp, amp);
  return c;
}

}  // namespace

TEST_CASE("pn sequence: deterministic bipolar carrier") {
  wm::WatermarkKey key{42, wm::Scheme::kZeroBitSsw};
  auto p = wm::pn_sequence(key, 100000);
  auto q = wm::pn_sequence(key, 100000);
  CHECK(p == q);
  for (double v : p) CHECK((v == 1.0 || v == -1.0));
  CHECK(std::abs(mean(p)) <= 0.02);

  // prefix stability: element i must not depend on the requested length
  auto head = wm::pn_sequence(key, 100);
  CHECK(std::equal(head.begin(), head.end(), p.begin()));

  // neighboring seeds give near-orthogonal carriers
  auto r = wm::pn_sequence({43, wm::Scheme::kZeroBitSsw}, 100000);
  double dot = 0.0;
  for (size_t i = 0; i < p.size(); ++i) dot += p[i] * r[i];
  CHECK(std::abs(dot / static_cast<double>(p.size())) <= 0.02);

  CHECK_THROWS_AS(wm::pn_sequence(key, 0), std::invalid_argument);
}

TEST_CASE("scheme names round-trip") {
  CHECK(wm::scheme_from_string("zero_bit_ssw") == wm::Scheme::kZeroBitSsw);
  CHECK(wm::scheme_from_string("multi_bit_qim") == wm::Scheme::kMultiBitQim);
  CHECK(wm::to_string(wm::Scheme::kZeroBitSsw) == "zero_bit_ssw");
  CHECK(wm::to_string(wm::Scheme::kMultiBitQim) == "multi_bit_qim");
  CHECK(wm::scheme_from_string(wm::to_string(wm::Scheme::kMultiBitQim)) ==
        wm::Scheme::kMultiBitQim);
  CHECK_THROWS_AS(wm::scheme_from_string("mp3"), std::invalid_argument);
}

TEST_CASE("ssw embed: gain tracks frame loudness") {
  wm::WatermarkKey key{7, wm::Scheme::kZeroBitSsw};

  AudioClip silent;
  silent.sample_rate = kSampleRate;
  silent.samples.assign(4096, 0.0);
  CHECK(wm::ssw_embed(silent, key, 0.1).samples == silent.samples);

  AudioClip noise = noise_clip(0.5, 8192, 11);
  CHECK(wm::ssw_embed(noise, key, 0.0).samples == noise.samples);

  // per-frame mark RMS is beta * frame RMS (the carrier is +-1)
  AudioClip marked = wm::ssw_embed(noise, key, 0.1);
  for (size_t start = 0; start < noise.samples.size();
       start += wm::kSswFrame) {
    double in2 = 0.0, d2 = 0.0;
    for (size_t i = start; i < start + wm::kSswFrame; ++i) {
      in2 += noise.samples[i] * noise.samples[i];
      const double d = marked.samples[i] - noise.samples[i];
      d2 += d * d;
    }
    const double ratio = std::sqrt(d2 / in2);
    CHECK(ratio == doctest::Approx(0.1).epsilon(0.10));
  }

  AudioClip empty;
  CHECK_THROWS_AS(wm::ssw_embed(empty, key, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(wm::ssw_embed(noise, key, -0.1), std::invalid_argument);
}

TEST_CASE("ssw detect: statistic and logistic map") {
  wm::WatermarkKey key{9, wm::Scheme::kZeroBitSsw};
  AudioClip noise = noise_clip(0.4, 16000, 3);
  AudioClip marked = wm::ssw_embed(noise, key, 0.1);

  wm::DetectorConfig raw{0.5, 1.0, 0.0};
  auto r_clean = wm::ssw_detect(noise, key, raw);
  auto r_wm = wm::ssw_detect(marked, key, raw);
  CHECK(r_wm.statistic > r_clean.statistic + 5.0);
  CHECK(r_clean.decoded_bits.empty());
  CHECK(r_wm.decoded_bits.empty());

  // confidence is exactly the logistic of the statistic
  wm::DetectorConfig cfg{0.5, 2.0, 1.5};
  auto r = wm::ssw_detect(marked, key, cfg);
  const double want = 1.0 / (1.0 + std::exp(-2.0 * (r.statistic - 1.5)));
  CHECK(r.confidence == doctest::Approx(want).epsilon(1e-12));

  AudioClip tiny;
  tiny.sample_rate = kSampleRate;
  tiny.samples.assign(100, 0.1);
  CHECK_THROWS_AS(wm::ssw_detect(tiny, key, raw), std::invalid_argument);

  wm::DetectorConfig bad_tau{1.5, 1.0, 0.0};
  CHECK_THROWS_AS(wm::ssw_detect(marked, key, bad_tau), std::invalid_argument);
}

TEST_CASE("ssw calibration separates marked from clean clips") {
  const uint64_t key_seed = 21, cal_data = 100;
  auto cfg = wm::calibrate_detector(wm::Scheme::kZeroBitSsw, 0.1, 100,
                                    key_seed, cal_data);
  wm::WatermarkKey key{key_seed, wm::Scheme::kZeroBitSsw};

  // evaluate on clips the calibration never saw
  Rng data_rng(777);
  const synth::Kind kinds[3] = {synth::Kind::kNoise, synth::Kind::kTones,
                                synth::Kind::kSpeechlike};
  int wm_hi = 0, clean_lo = 0;
  std::vector<double> wrong_key_conf;
  wm::WatermarkKey other{key_seed + 1, wm::Scheme::kZeroBitSsw};
  for (int i = 0; i < 100; ++i) {
    Rng r = data_rng.fork(static_cast<uint64_t>(i));
    AudioClip clip = synth::make_clip(kinds[i % 3], 1.0, kSampleRate, r);
    AudioClip marked = wm::ssw_embed(clip, key, 0.1);
    if (wm::ssw_detect(marked, key, cfg).confidence >= 0.9) ++wm_hi;
    if (wm::ssw_detect(clip, key, cfg).confidence <= 0.1) ++clean_lo;
    wrong_key_conf.push_back(wm::ssw_detect(marked, other, cfg).confidence);
  }
  CHECK(wm_hi >= 95);
  CHECK(clean_lo >= 95);
  CHECK(median(wrong_key_conf) <= 0.2);
}

TEST_CASE("calibration edge cases") {
  CHECK_THROWS_AS(
      wm::calibrate_detector(wm::Scheme::kZeroBitSsw, 0.0, 100, 1, 2),
      wm::CalibrationFailure);
  CHECK_THROWS_AS(
      wm::calibrate_detector(wm::Scheme::kZeroBitSsw, 0.1, 50, 1, 2),
      std::invalid_argument);

  // doubling the strength widens the z gap, which moves the midpoint up
  auto weak = wm::calibrate_detector(wm::Scheme::kZeroBitSsw, 0.1, 100, 1, 2);
  auto strong = wm::calibrate_detector(wm::Scheme::kZeroBitSsw, 0.2, 100, 1, 2);
  CHECK(strong.b > weak.b);
}

TEST_CASE("qim message and cell assignment") {
  auto bits = wm::qim_message(5);
  CHECK(bits.size() == wm::kQimBits);
  CHECK(bits == wm::qim_message(5));
  CHECK(bits != wm::qim_message(6));
  for (auto b : bits) CHECK(b <= 1);

  wm::WatermarkKey key{13, wm::Scheme::kMultiBitQim};
  const size_t n = 16000;
  auto as_pairs = [](const std::vector<wm::QimCell>& cs) {
    std::vector<std::pair<int, int>> p;
    for (const auto& c : cs) p.emplace_back(c.frame, c.bin);
    return p;
  };
  auto cells = wm::qim_cells(key, n);
  CHECK(cells.size() == static_cast<size_t>(wm::kQimBits) * wm::kQimCellsPerBit);
  CHECK(as_pairs(cells) == as_pairs(wm::qim_cells(key, n)));

  dsp::StftConfig scfg;
  const int frames = scfg.frames_for(n);
  const double hz_per_bin = double(kSampleRate) / scfg.fft_size;
  std::set<std::pair<int, int>> seen;
  for (const auto& c : cells) {
    CHECK(c.frame >= 0);
    CHECK(c.frame < frames);
    CHECK(c.bin * hz_per_bin >= wm::kQimBandLoHz);
    CHECK(c.bin * hz_per_bin <= wm::kQimBandHiHz);
    CHECK(seen.insert({c.frame, c.bin}).second);  // disjoint
  }

  CHECK(as_pairs(wm::qim_cells({14, wm::Scheme::kMultiBitQim}, n)) !=
        as_pairs(cells));
  CHECK_THROWS_AS(wm::qim_cells(key, 1000), std::invalid_argument);
}

TEST_CASE("qim embed/decode round trip") {
  wm::WatermarkKey key{31, wm::Scheme::kMultiBitQim};
  Rng rng(8);
  AudioClip clip = synth::make_clip(synth::Kind::kSpeechlike, 1.0, kSampleRate,
                                    rng);
  const auto bits = wm::qim_message(99);
  const double delta = 0.5;
  AudioClip marked = wm::qim_embed(clip, key, bits, delta);
  CHECK(marked.samples.size() == clip.samples.size());

  auto dec = wm::qim_decode(marked, key, delta);
  CHECK(dec.decoded_bits == bits);
  CHECK(dec.confidence > 0.9);

  // quantizer never moves a magnitude by more than half a step
  const auto cells = wm::qim_cells(key, clip.samples.size());
  auto spec_in = dsp::stft(clip, dsp::StftConfig{});
  auto spec_out = dsp::stft(marked, dsp::StftConfig{});
  for (const auto& c : cells) {
    const double m_in = std::abs(spec_in.at(c.frame, c.bin));
    const double m_out = std::abs(spec_out.at(c.frame, c.bin));
    CHECK(std::abs(m_out - m_in) <= delta / 2 + 0.05 * delta);
  }

  // a fresh clip almost surely fails to match any 16-bit message
  AudioClip other = noise_clip(0.3, 16000, 55);
  CHECK(wm::qim_decode(other, key, delta).decoded_bits != bits);

  CHECK_THROWS_AS(wm::qim_embed(clip, key, bits, 0.0), std::invalid_argument);
  std::vector<uint8_t> short_bits(8, 0);
  CHECK_THROWS_AS(wm::qim_embed(clip, key, short_bits, delta),
                  std::invalid_argument);
  std::vector<uint8_t> bad_bits(wm::kQimBits, 2);
  CHECK_THROWS_AS(wm::qim_embed(clip, key, bad_bits, delta),
                  std::invalid_argument);
}

TEST_CASE("qim opposite messages differ mostly inside the keyed cells") {
  wm::WatermarkKey key{77, wm::Scheme::kMultiBitQim};
  Rng rng(12);
  AudioClip clip = synth::make_clip(synth::Kind::kTones, 1.0, kSampleRate, rng);
  const std::vector<uint8_t> zeros(wm::kQimBits, 0);
  const std::vector<uint8_t> ones(wm::kQimBits, 1);
  AudioClip a = wm::qim_embed(clip, key, zeros, 0.5);
  AudioClip b = wm::qim_embed(clip, key, ones, 0.5);
  CHECK(a.samples != b.samples);

  auto sa = dsp::stft(a, dsp::StftConfig{});
  auto sb = dsp::stft(b, dsp::StftConfig{});
  const auto cells = wm::qim_cells(key, clip.samples.size());
  std::set<std::pair<int, int>> keyed;
  for (const auto& c : cells) keyed.insert({c.frame, c.bin});
  // resynthesis leaks a little energy everywhere, so compare per-bin means:
  // a keyed cell must carry far more of the difference than a bystander bin
  double in_cells = 0.0, off_cells = 0.0;
  int64_t n_off = 0;
  for (int t = 0; t < sa.frames; ++t) {
    for (int f = 0; f < sa.bins(); ++f) {
      const double d = std::abs(sa.at(t, f)) - std::abs(sb.at(t, f));
      if (keyed.count({t, f})) {
        in_cells += d * d;
      } else {
        off_cells += d * d;
        ++n_off;
      }
    }
  }
  const double per_cell = in_cells / static_cast<double>(keyed.size());
  const double per_off = off_cells / static_cast<double>(n_off);
  CHECK(per_cell > 20.0 * per_off);
}

TEST_CASE("qim clean-channel calibration and wrong-key confusion") {
  // the multi-bit calibration *is* a 100-clip clean-channel BER=0 proof
  auto cfg =
      wm::calibrate_detector(wm::Scheme::kMultiBitQim, 0.5, 100, 41, 42);
  CHECK(cfg.threshold == doctest::Approx(0.5));

  // a decoder keyed differently sees an unrelated lattice: BER ~ 1/2
  wm::WatermarkKey key{41, wm::Scheme::kMultiBitQim};
  wm::WatermarkKey wrong{1041, wm::Scheme::kMultiBitQim};
  Rng data_rng(4242);
  const synth::Kind kinds[3] = {synth::Kind::kNoise, synth::Kind::kTones,
                                synth::Kind::kSpeechlike};
  double err_bits = 0.0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    Rng r = data_rng.fork(static_cast<uint64_t>(i));
    AudioClip clip = synth::make_clip(kinds[i % 3], 1.0, kSampleRate, r);
    const auto bits = wm::qim_message(1000 + static_cast<uint64_t>(i));
    AudioClip marked = wm::qim_embed(clip, key, bits, 0.5);
    auto dec = wm::qim_decode(marked, wrong, 0.5);
    for (int j = 0; j < wm::kQimBits; ++j) {
      if (dec.decoded_bits[static_cast<size_t>(j)] !=
          bits[static_cast<size_t>(j)]) {
        err_bits += 1.0;
      }
    }
  }
  const double ber = err_bits / (trials * wm::kQimBits);
  CHECK(ber >= 0.35);
  CHECK(ber <= 0.65);
}

TEST_CASE("victim persistence round trip") {
  wm::Victim v;
  v.key = {123, wm::Scheme::kMultiBitQim};
  v.strength = 0.5;
  v.detector = {0.5, 7.5, 3.25};
  const std::string path = "victim_roundtrip.json";
  wm::save_victim(path, v);
  wm::Victim w = wm::load_victim(path);
  CHECK(w.key.seed == v.key.seed);
  CHECK(w.key.scheme == v.key.scheme);
  CHECK(w.strength == v.strength);
  CHECK(w.detector.threshold == v.detector.threshold);
  CHECK(w.detector.a == v.detector.a);
  CHECK(w.detector.b == v.detector.b);
  std::remove(path.c_str());

  CHECK_THROWS_AS(wm::load_victim("missing_victim.json"), std::runtime_error);

  const std::string bad = "victim_bad.json";
  {
    FILE* f = std::fopen(bad.c_str(), "w");
    std::fputs("{\"scheme\": \"zero_bit_ssw\"}", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(wm::load_victim(bad), std::runtime_error);
  std::remove(bad.c_str());

  wm::Victim invalid = v;
  invalid.detector.threshold = 2.0;
  CHECK_THROWS_AS(wm::save_victim("victim_invalid.json", invalid),
                  std::invalid_argument);
}

TEST_CASE("victim session: query accounting and the success rule") {
  const uint64_t key_seed = 61;
  auto cfg = wm::calibrate_detector(wm::Scheme::kZeroBitSsw, 0.1, 100,
                                    key_seed, 62);
  wm::Victim v{{key_seed, wm::Scheme::kZeroBitSsw}, 0.1, cfg};

  Rng rng(5);
  AudioClip clean = synth::make_clip(synth::Kind::kNoise, 1.0, kSampleRate,
                                     rng);
  wm::VictimSession session(v, 9001);
  CHECK(session.queries() == 0);
  AudioClip marked = session.embed(clean);
  CHECK(session.queries() == 0);  // embedding is not a detector query

  auto r_wm = session.detect(marked);
  CHECK(session.queries() == 1);
  CHECK(session.watermarked(r_wm));
  CHECK(session.agreement(r_wm) == r_wm.confidence);

  auto r_clean = session.detect(clean);
  CHECK(session.queries() == 2);
  CHECK_FALSE(session.watermarked(r_clean));

  // same clip through the session and the free functions
  CHECK(wm::victim_detect(v, marked).confidence == r_wm.confidence);
  CHECK(wm::ssw_embed(clean, v.key, v.strength).samples == marked.samples);
}

TEST_CASE("victim session: multi-bit message identity") {
  wm::Victim v{{71, wm::Scheme::kMultiBitQim}, 0.5, {0.5, 1.0, 0.5}};
  Rng rng(6);
  AudioClip clean = synth::make_clip(synth::Kind::kSpeechlike, 1.0,
                                     kSampleRate, rng);
  const uint64_t item_seed = 314;
  wm::VictimSession session(v, item_seed);
  CHECK(session.message() == wm::qim_message(item_seed));

  AudioClip marked = session.embed(clean);
  auto r = session.detect(marked);
  CHECK(session.watermarked(r));
  CHECK(session.agreement(r) == 1.0);

  auto r2 = session.detect(clean);
  CHECK_FALSE(session.watermarked(r2));
  CHECK(session.agreement(r2) < 1.0);
  // agreement counts matching bits
  int match = 0;
  for (int j = 0; j < wm::kQimBits; ++j) {
    if (r2.decoded_bits[static_cast<size_t>(j)] ==
        session.message()[static_cast<size_t>(j)]) {
      ++match;
    }
  }
  CHECK(session.agreement(r2) ==
        doctest::Approx(double(match) / wm::kQimBits));
  CHECK(session.queries() == 2);

  // the free embed path derives the same message from the item seed
  AudioClip marked2 = wm::victim_embed(v, clean, item_seed);
  CHECK(marked2.samples == marked.samples);
}
