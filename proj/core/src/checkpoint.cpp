#include "wmlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace wmlab::io {

uint64_t fnv1a64(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<NamedTensor>& tensors) {
  nlohmann::json header;
  header["format_version"] = meta.format_version;
  header["model"] = meta.model;
  header["seed"] = meta.seed;
  header["train_config_digest"] = meta.train_config_digest;
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json shapes = nlohmann::json::array();
  for (const NamedTensor& t : tensors) {
    size_t numel = 1;
    for (int d : t.shape) {
      if (d <= 0) {
        throw std::invalid_argument("checkpoint: non-positive dim in " + t.name);
      }
      numel *= static_cast<size_t>(d);
    }
    if (numel != t.data.size()) {
      throw std::invalid_argument("checkpoint: shape/data mismatch in " + t.name);
    }
    names.push_back(t.name);
    shapes.push_back(t.shape);
  }
  header["names"] = std::move(names);
  header["shapes"] = std::move(shapes);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f << header.dump() << '\n';
  for (const NamedTensor& t : tensors) {
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) {
    throw std::runtime_error("checkpoint: missing header in " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad header in " + path + ": " +
                             e.what());
  }

  Checkpoint ck;
  try {
    ck.meta.format_version = header.at("format_version").get<int>();
    if (ck.meta.format_version != 1) {
      throw std::runtime_error("unsupported format_version " +
                               std::to_string(ck.meta.format_version));
    }
    ck.meta.model = header.at("model").get<std::string>();
    ck.meta.seed = header.at("seed").get<uint64_t>();
    ck.meta.train_config_digest =
        header.at("train_config_digest").get<std::string>();
    const auto& names = header.at("names");
    const auto& shapes = header.at("shapes");
    if (!names.is_array() || !shapes.is_array() ||
        names.size() != shapes.size()) {
      throw std::runtime_error("names/shapes mismatch");
    }
    ck.tensors.resize(names.size());
    for (size_t i = 0; i < names.size(); ++i) {
      ck.tensors[i].name = names[i].get<std::string>();
      ck.tensors[i].shape = shapes[i].get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad header in " + path + ": " +
                             e.what());
  }

  for (NamedTensor& t : ck.tensors) {
    size_t numel = 1;
    for (int d : t.shape) {
      if (d <= 0) {
        throw std::runtime_error("checkpoint: non-positive dim in " + t.name);
      }
      numel *= static_cast<size_t>(d);
    }
    t.data.resize(numel);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(numel * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != numel * sizeof(float)) {
      throw std::runtime_error("checkpoint: payload truncated in " + path +
                               " at tensor " + t.name);
    }
  }
  char extra;
  if (f.read(&extra, 1)) {
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  }
  return ck;
}

}  // namespace wmlab::io
