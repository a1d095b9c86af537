#include "wmlab/removal.hpp"

#include <stdexcept>

namespace wmlab::removal {

void init_models(uint64_t seed, GeneratorModel<float>& gen,
                 DiscriminatorModel<float>& disc) {
  Rng rng(seed);
  init_generator(gen, rng);
  init_discriminator(disc, rng);
}

AudioClip generator_apply(GeneratorModel<float>& m, const AudioClip& x_wm) {
  require_nonempty(x_wm, "generator_apply");
  tensor::Graph<float> g;
  auto in = tensor::Tensor<float>::zeros({1, 1, static_cast<int>(x_wm.size())});
  for (size_t i = 0; i < x_wm.size(); ++i) {
    in.data[i] = static_cast<float>(x_wm.samples[i]);
  }
  auto fwd = generator_forward(g, m, g.constant(std::move(in)), false);
  const auto& out = g.val(fwd.x_unwm);
  AudioClip result;
  result.sample_rate = x_wm.sample_rate;
  result.samples.resize(x_wm.size());
  for (size_t i = 0; i < x_wm.size(); ++i) {
    result.samples[i] = static_cast<double>(out.data[i]);
  }
  return result;
}

double discriminator_apply(DiscriminatorModel<float>& m, const AudioClip& x) {
  require_nonempty(x, "discriminator_apply");
  tensor::Graph<float> g;
  auto in = tensor::Tensor<float>::zeros({1, 1, static_cast<int>(x.size())});
  for (size_t i = 0; i < x.size(); ++i) {
    in.data[i] = static_cast<float>(x.samples[i]);
  }
  auto out = discriminator_forward(g, m, g.constant(std::move(in)));
  return static_cast<double>(g.val(out).data[0]);
}

namespace {

std::vector<io::NamedTensor> pack(
    const std::vector<std::pair<std::string, tensor::Tensor<float>*>>& named) {
  std::vector<io::NamedTensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) {
    io::NamedTensor nt;
    nt.name = name;
    nt.shape = t->shape;
    nt.data = t->data;
    out.push_back(std::move(nt));
  }
  return out;
}

void unpack(
    const std::vector<std::pair<std::string, tensor::Tensor<float>*>>& named,
    const std::vector<io::NamedTensor>& ts) {
  if (ts.size() != named.size()) {
    throw std::runtime_error("checkpoint: expected " +
                             std::to_string(named.size()) + " tensors, got " +
                             std::to_string(ts.size()));
  }
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    if (ts[i].name != name) {
      throw std::runtime_error("checkpoint: tensor " + std::to_string(i) +
                               " is '" + ts[i].name + "', expected '" + name +
                               "'");
    }
    if (ts[i].shape != t->shape) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "'");
    }
    t->data = ts[i].data;
  }
}

}  // namespace

std::vector<io::NamedTensor> to_named_tensors(GeneratorModel<float>& m) {
  return pack(m.named_parameters());
}

std::vector<io::NamedTensor> to_named_tensors(DiscriminatorModel<float>& m) {
  return pack(m.named_parameters());
}

void load_from_tensors(GeneratorModel<float>& m,
                       const std::vector<io::NamedTensor>& ts) {
  unpack(m.named_parameters(), ts);
}

void load_from_tensors(DiscriminatorModel<float>& m,
                       const std::vector<io::NamedTensor>& ts) {
  unpack(m.named_parameters(), ts);
}

}  // namespace wmlab::removal
