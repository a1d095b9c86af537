#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wmlab::io {

// FNV-1a, 64-bit
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

struct CheckpointMeta {
  int format_version = 1;
  std::string model;                 // e.g. "generator", "discriminator"
  uint64_t seed = 0;                 // seed the weights were initialized from
  std::string train_config_digest;   // fnv1a64 hex of the training config
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

// File layout: one JSON header line + '\n', then the tensors' float32 data
// little-endian, concatenated in header order.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<NamedTensor>& tensors);

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<NamedTensor> tensors;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace wmlab::io
