#pragma once

#include <stdexcept>
#include <string>

#include "wmlab/audio.hpp"

namespace wmlab::io {

struct UnsupportedFormat : std::runtime_error {
  explicit UnsupportedFormat(const std::string& what)
      : std::runtime_error(what) {}
};

// RIFF/WAVE PCM16 mono only. Samples are scaled by 1/32768 into [-1, 1).
// Anything else raises UnsupportedFormat naming the offending field.
AudioClip load_wav(const std::string& path);

// Clamps to [-1, 1], scales by 32768, rounds half away from zero.
void save_wav(const std::string& path, const AudioClip& clip);

}  // namespace wmlab::io
