#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmlab/audio.hpp"
#include "wmlab/rng.hpp"

namespace wmlab::synth {

enum class Kind { kNoise, kTones, kSpeechlike };

Kind kind_from_string(const std::string& s);  // "noise"|"tones"|"speechlike"
std::string to_string(Kind k);

AudioClip make_clip(Kind kind, double duration_s, int sample_rate, Rng& rng);

// Deterministic: clip i depends only on (seed, i), not on generation order.
std::vector<AudioClip> make_dataset(Kind kind, int n, double duration_s,
                                    uint64_t seed,
                                    int sample_rate = kSampleRate);

}  // namespace wmlab::synth
