#include "wmlab/wav_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace wmlab::io {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ofstream& f, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& f, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_wav: cannot open " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0) {
    throw UnsupportedFormat("load_wav: missing RIFF header");
  }
  if (std::memcmp(raw.data() + 8, "WAVE", 4) != 0) {
    throw UnsupportedFormat("load_wav: RIFF form is not WAVE");
  }

  bool have_fmt = false;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + pos);
    uint32_t len = read_u32(raw.data() + pos + 4);
    const uint8_t* body = raw.data() + pos + 8;
    if (pos + 8 + len > raw.size()) {
      throw UnsupportedFormat("load_wav: truncated chunk " +
                              std::string(id, 4));
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw UnsupportedFormat("load_wav: fmt chunk too short");
      uint16_t format = read_u16(body);
      uint16_t channels = read_u16(body + 2);
      uint32_t rate = read_u32(body + 4);
      uint16_t bits = read_u16(body + 14);
      if (format != 1) {
        throw UnsupportedFormat("load_wav: audio_format=" +
                                std::to_string(format) + " (want PCM=1)");
      }
      if (channels != 1) {
        throw UnsupportedFormat("load_wav: channels=" +
                                std::to_string(channels) + " (want mono=1)");
      }
      if (rate != static_cast<uint32_t>(kSampleRate)) {
        throw UnsupportedFormat("load_wav: sample_rate=" +
                                std::to_string(rate) + " (want 16000)");
      }
      if (bits != 16) {
        throw UnsupportedFormat("load_wav: bits_per_sample=" +
                                std::to_string(bits) + " (want 16)");
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw UnsupportedFormat("load_wav: missing fmt chunk");
  if (!data) throw UnsupportedFormat("load_wav: missing data chunk");

  AudioClip clip;
  clip.sample_rate = kSampleRate;
  const size_t n = data_len / 2;
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s = static_cast<int16_t>(read_u16(data + 2 * i));
    clip.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate) {
    throw UnsupportedFormat("save_wav: sample_rate=" +
                            std::to_string(clip.sample_rate) + " (want 16000)");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_wav: cannot open " + path);

  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_len = n * 2;
  f.write("RIFF", 4);
  write_u32(f, 36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_u32(f, 16);
  write_u16(f, 1);  // PCM
  write_u16(f, 1);  // mono
  write_u32(f, kSampleRate);
  write_u32(f, kSampleRate * 2);  // byte rate
  write_u16(f, 2);                // block align
  write_u16(f, 16);               // bits
  f.write("data", 4);
  write_u32(f, data_len);
  for (uint32_t i = 0; i < n; ++i) {
    double s = clip.samples[i];
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    double scaled = s * 32768.0;
    // half away from zero, then clamp to int16 range
    long q = std::lround(scaled);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    write_u16(f, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!f) throw std::runtime_error("save_wav: write failed " + path);
}

}  // namespace wmlab::io
