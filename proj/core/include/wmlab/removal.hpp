#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wmlab/audio.hpp"
#include "wmlab/checkpoint.hpp"
#include "wmlab/optim.hpp"
#include "wmlab/rng.hpp"
#include "wmlab/tensor.hpp"

namespace wmlab::removal {

inline constexpr double kOutScale = 0.2;  // max |correction| per sample
inline constexpr int kGenFftSize = 2048;
inline constexpr int kGenHop = 512;
inline constexpr int kGenStrideProduct = 16;  // four stride-2 stages
inline constexpr int kDiscMinLen = 256;       // covers the 239-sample receptive field

// wave-encoder block: relu(bn(conv(x)) + proj(x)), stride 2
template <typename T>
struct ConvBn {
  tensor::Tensor<T> w, b;            // [Cout,Cin,K], [Cout]
  tensor::Tensor<T> proj_w, proj_b;  // 1x1 stride-2 shortcut
  tensor::Tensor<T> gamma, beta, run_mean, run_var;
};

// spectrogram-encoder block: relu(bn(conv2d(x))), 3x3 stride 2
template <typename T>
struct Conv2dBn {
  tensor::Tensor<T> w, b;  // [Cout,Cin,3,3]
  tensor::Tensor<T> gamma, beta, run_mean, run_var;
};

// decoder level: up = relu(bn(tconv(d))); skip levels gate the encoder
// feature with a = sigmoid(conv1x1([skip; up])) and emit up + a*skip
template <typename T>
struct DecoderLevel {
  tensor::Tensor<T> tw, tb;  // [Cin,Cout,K], [Cout]
  tensor::Tensor<T> gamma, beta, run_mean, run_var;
  tensor::Tensor<T> gate_w, gate_b;  // [Cskip, Cskip+Cout, 1], [Cskip]
  bool has_gate = false;
};

template <typename T>
struct GeneratorModel {
  ConvBn<T> wave[4];
  Conv2dBn<T> spec[4];
  tensor::Tensor<T> bott_wave_w, bott_wave_b;  // [64,128], [128]
  tensor::Tensor<T> bott_spec_w, bott_spec_b;  // [32,128], [128]
  tensor::Tensor<T> bott_fuse_w, bott_fuse_b;  // [256,64], [64]
  DecoderLevel<T> dec[4];
  tensor::Tensor<T> head_w, head_b;  // [1,8,1], [1]; zero-init => identity

  std::vector<std::pair<std::string, tensor::Tensor<T>*>> named_parameters();
  std::vector<tensor::Tensor<T>*> trainable_parameters();  // no running stats
  size_t param_count();  // trainable scalar count
};

template <typename T>
struct DiscriminatorModel {
  tensor::Tensor<T> w[4], b[4];     // 1D convs, stride 4
  tensor::Tensor<T> fc_w, fc_b;     // [64,1], [1]

  std::vector<std::pair<std::string, tensor::Tensor<T>*>> named_parameters();
  std::vector<tensor::Tensor<T>*> trainable_parameters();
  size_t param_count();
};

template <typename T>
void init_generator(GeneratorModel<T>& m, Rng& rng);
template <typename T>
void init_discriminator(DiscriminatorModel<T>& m, Rng& rng);

// One seed initializes both (generator first, one RNG stream).
void init_models(uint64_t seed, GeneratorModel<float>& gen,
                 DiscriminatorModel<float>& disc);

template <typename T>
struct GenForward {
  typename tensor::Graph<T>::NodeId x_unwm;  // [N,1,L], clamped to [-1,1]
  typename tensor::Graph<T>::NodeId w_hat;   // bounded correction, same shape
};

// x_wm: [N,1,L] node, L >= kGenFftSize. Output length equals input length.
template <typename T>
GenForward<T> generator_forward(tensor::Graph<T>& g, GeneratorModel<T>& m,
                                typename tensor::Graph<T>::NodeId x_wm,
                                bool training);

// x: [N,1,L] node, L >= kDiscMinLen -> [N,1] confidence in (0,1)
template <typename T>
typename tensor::Graph<T>::NodeId discriminator_forward(
    tensor::Graph<T>& g, DiscriminatorModel<T>& m,
    typename tensor::Graph<T>::NodeId x);

// Convenience single-clip forwards (inference mode, float models)
AudioClip generator_apply(GeneratorModel<float>& m, const AudioClip& x_wm);
double discriminator_apply(DiscriminatorModel<float>& m, const AudioClip& x);

// checkpoint glue
std::vector<io::NamedTensor> to_named_tensors(GeneratorModel<float>& m);
std::vector<io::NamedTensor> to_named_tensors(DiscriminatorModel<float>& m);
void load_from_tensors(GeneratorModel<float>& m,
                       const std::vector<io::NamedTensor>& ts);
void load_from_tensors(DiscriminatorModel<float>& m,
                       const std::vector<io::NamedTensor>& ts);

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr int kWaveIn[4] = {1, 16, 32, 64};
inline constexpr int kWaveOut[4] = {16, 32, 64, 64};
inline constexpr int kWaveK[4] = {15, 9, 5, 3};
inline constexpr int kSpecIn[4] = {1, 8, 16, 32};
inline constexpr int kSpecOut[4] = {8, 16, 32, 32};
inline constexpr int kDecIn[4] = {64, 64, 32, 16};
inline constexpr int kDecOut[4] = {64, 32, 16, 8};
inline constexpr int kDecK[4] = {3, 5, 9, 15};
inline constexpr int kDiscIn[4] = {1, 16, 32, 64};
inline constexpr int kDiscOut[4] = {16, 32, 64, 64};
inline constexpr int kDiscK[4] = {15, 9, 5, 3};
}  // namespace detail

template <typename T>
void init_generator(GeneratorModel<T>& m, Rng& rng) {
  using tensor::Tensor;
  using tensor::kaiming_uniform;
  for (int i = 0; i < 4; ++i) {
    const int ci = detail::kWaveIn[i], co = detail::kWaveOut[i],
              k = detail::kWaveK[i];
    m.wave[i].w = Tensor<T>::zeros({co, ci, k});
    kaiming_uniform(m.wave[i].w, ci * k, rng);
    m.wave[i].b = Tensor<T>::zeros({co});
    m.wave[i].proj_w = Tensor<T>::zeros({co, ci, 1});
    kaiming_uniform(m.wave[i].proj_w, ci, rng);
    m.wave[i].proj_b = Tensor<T>::zeros({co});
    m.wave[i].gamma = Tensor<T>::full({co}, T(1));
    m.wave[i].beta = Tensor<T>::zeros({co});
    m.wave[i].run_mean = Tensor<T>::zeros({co});
    m.wave[i].run_var = Tensor<T>::full({co}, T(1));
  }
  for (int i = 0; i < 4; ++i) {
    const int ci = detail::kSpecIn[i], co = detail::kSpecOut[i];
    m.spec[i].w = Tensor<T>::zeros({co, ci, 3, 3});
    kaiming_uniform(m.spec[i].w, ci * 9, rng);
    m.spec[i].b = Tensor<T>::zeros({co});
    m.spec[i].gamma = Tensor<T>::full({co}, T(1));
    m.spec[i].beta = Tensor<T>::zeros({co});
    m.spec[i].run_mean = Tensor<T>::zeros({co});
    m.spec[i].run_var = Tensor<T>::full({co}, T(1));
  }
  m.bott_wave_w = tensor::Tensor<T>::zeros({64, 128});
  kaiming_uniform(m.bott_wave_w, 64, rng);
  m.bott_wave_b = tensor::Tensor<T>::zeros({128});
  m.bott_spec_w = tensor::Tensor<T>::zeros({32, 128});
  kaiming_uniform(m.bott_spec_w, 32, rng);
  m.bott_spec_b = tensor::Tensor<T>::zeros({128});
  m.bott_fuse_w = tensor::Tensor<T>::zeros({256, 64});
  kaiming_uniform(m.bott_fuse_w, 256, rng);
  m.bott_fuse_b = tensor::Tensor<T>::zeros({64});
  for (int i = 0; i < 4; ++i) {
    const int ci = detail::kDecIn[i], co = detail::kDecOut[i],
              k = detail::kDecK[i];
    m.dec[i].tw = tensor::Tensor<T>::zeros({ci, co, k});
    kaiming_uniform(m.dec[i].tw, ci * k, rng);
    m.dec[i].tb = tensor::Tensor<T>::zeros({co});
    m.dec[i].gamma = tensor::Tensor<T>::full({co}, T(1));
    m.dec[i].beta = tensor::Tensor<T>::zeros({co});
    m.dec[i].run_mean = tensor::Tensor<T>::zeros({co});
    m.dec[i].run_var = tensor::Tensor<T>::full({co}, T(1));
    if (i < 3) {
      const int cs = detail::kWaveOut[2 - i];  // skip channels: e3, e2, e1
      m.dec[i].gate_w = tensor::Tensor<T>::zeros({cs, cs + co, 1});
      kaiming_uniform(m.dec[i].gate_w, cs + co, rng);
      m.dec[i].gate_b = tensor::Tensor<T>::zeros({cs});
      m.dec[i].has_gate = true;
    } else {
      m.dec[i].has_gate = false;
    }
  }
  m.head_w = tensor::Tensor<T>::zeros({1, 8, 1});
  m.head_b = tensor::Tensor<T>::zeros({1});
}

template <typename T>
void init_discriminator(DiscriminatorModel<T>& m, Rng& rng) {
  using tensor::Tensor;
  using tensor::kaiming_uniform;
  for (int i = 0; i < 4; ++i) {
    const int ci = detail::kDiscIn[i], co = detail::kDiscOut[i],
              k = detail::kDiscK[i];
    m.w[i] = Tensor<T>::zeros({co, ci, k});
    kaiming_uniform(m.w[i], ci * k, rng);
    m.b[i] = Tensor<T>::zeros({co});
  }
  m.fc_w = Tensor<T>::zeros({64, 1});
  kaiming_uniform(m.fc_w, 64, rng);
  // cool the head so a fresh discriminator scores near chance: the pooled
  // features already have O(1) scale, and full kaiming magnitude here pushes
  // sigmoid outputs outside (0.3, 0.7) on unlucky seeds
  for (T& v : m.fc_w.data) v *= T(0.25);
  m.fc_b = Tensor<T>::zeros({1});
}

template <typename T>
std::vector<std::pair<std::string, tensor::Tensor<T>*>>
GeneratorModel<T>::named_parameters() {
  std::vector<std::pair<std::string, tensor::Tensor<T>*>> out;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "wave" + std::to_string(i) + ".";
    out.emplace_back(p + "w", &wave[i].w);
    out.emplace_back(p + "b", &wave[i].b);
    out.emplace_back(p + "proj_w", &wave[i].proj_w);
    out.emplace_back(p + "proj_b", &wave[i].proj_b);
    out.emplace_back(p + "bn_g", &wave[i].gamma);
    out.emplace_back(p + "bn_b", &wave[i].beta);
    out.emplace_back(p + "bn_rm", &wave[i].run_mean);
    out.emplace_back(p + "bn_rv", &wave[i].run_var);
  }
  for (int i = 0; i < 4; ++i) {
    const std::string p = "spec" + std::to_string(i) + ".";
    out.emplace_back(p + "w", &spec[i].w);
    out.emplace_back(p + "b", &spec[i].b);
    out.emplace_back(p + "bn_g", &spec[i].gamma);
    out.emplace_back(p + "bn_b", &spec[i].beta);
    out.emplace_back(p + "bn_rm", &spec[i].run_mean);
    out.emplace_back(p + "bn_rv", &spec[i].run_var);
  }
  out.emplace_back("bott.wave_w", &bott_wave_w);
  out.emplace_back("bott.wave_b", &bott_wave_b);
  out.emplace_back("bott.spec_w", &bott_spec_w);
  out.emplace_back("bott.spec_b", &bott_spec_b);
  out.emplace_back("bott.fuse_w", &bott_fuse_w);
  out.emplace_back("bott.fuse_b", &bott_fuse_b);
  for (int i = 0; i < 4; ++i) {
    const std::string p = "dec" + std::to_string(i) + ".";
    out.emplace_back(p + "tw", &dec[i].tw);
    out.emplace_back(p + "tb", &dec[i].tb);
    out.emplace_back(p + "bn_g", &dec[i].gamma);
    out.emplace_back(p + "bn_b", &dec[i].beta);
    out.emplace_back(p + "bn_rm", &dec[i].run_mean);
    out.emplace_back(p + "bn_rv", &dec[i].run_var);
    if (dec[i].has_gate) {
      out.emplace_back(p + "gate_w", &dec[i].gate_w);
      out.emplace_back(p + "gate_b", &dec[i].gate_b);
    }
  }
  out.emplace_back("head.w", &head_w);
  out.emplace_back("head.b", &head_b);
  return out;
}

template <typename T>
std::vector<tensor::Tensor<T>*> GeneratorModel<T>::trainable_parameters() {
  std::vector<tensor::Tensor<T>*> out;
  for (auto& [name, t] : named_parameters()) {
    if (name.size() >= 5 && (name.compare(name.size() - 5, 5, "bn_rm") == 0 ||
                             name.compare(name.size() - 5, 5, "bn_rv") == 0)) {
      continue;
    }
    out.push_back(t);
  }
  return out;
}

template <typename T>
size_t GeneratorModel<T>::param_count() {
  size_t n = 0;
  for (auto* t : trainable_parameters()) n += t->numel();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, tensor::Tensor<T>*>>
DiscriminatorModel<T>::named_parameters() {
  std::vector<std::pair<std::string, tensor::Tensor<T>*>> out;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "conv" + std::to_string(i) + ".";
    out.emplace_back(p + "w", &w[i]);
    out.emplace_back(p + "b", &b[i]);
  }
  out.emplace_back("fc.w", &fc_w);
  out.emplace_back("fc.b", &fc_b);
  return out;
}

template <typename T>
std::vector<tensor::Tensor<T>*> DiscriminatorModel<T>::trainable_parameters() {
  std::vector<tensor::Tensor<T>*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
size_t DiscriminatorModel<T>::param_count() {
  size_t n = 0;
  for (auto* t : trainable_parameters()) n += t->numel();
  return n;
}

template <typename T>
GenForward<T> generator_forward(tensor::Graph<T>& g, GeneratorModel<T>& m,
                                typename tensor::Graph<T>::NodeId x_wm,
                                bool training) {
  using Id = typename tensor::Graph<T>::NodeId;
  const auto& in_shape = g.val(x_wm).shape;
  if (in_shape.size() != 3 || in_shape[1] != 1) {
    throw std::invalid_argument("generator_forward: want [N,1,L]");
  }
  const int len = in_shape[2];
  if (len < kGenFftSize) {
    throw std::invalid_argument("generator_forward: clip shorter than " +
                                std::to_string(kGenFftSize) + " samples");
  }
  const int padded =
      (len + kGenStrideProduct - 1) / kGenStrideProduct * kGenStrideProduct;
  Id x = padded > len ? g.pad1d(x_wm, padded) : x_wm;

  // waveform path
  Id e[4];
  Id h = x;
  for (int i = 0; i < 4; ++i) {
    ConvBn<T>& blk = m.wave[i];
    Id y = g.conv1d(h, g.param(&blk.w), g.param(&blk.b), 2,
                    (detail::kWaveK[i] - 1) / 2);
    y = g.batchnorm(y, g.param(&blk.gamma), g.param(&blk.beta), &blk.run_mean,
                    &blk.run_var, training);
    Id p = g.conv1d(h, g.param(&blk.proj_w), g.param(&blk.proj_b), 2, 0);
    h = g.relu(g.add(y, p));
    e[i] = h;
  }

  // spectrogram path: log-magnitude image [N,1,F,T]
  tensor::PowerSpecConfig cfg{kGenFftSize, kGenHop};
  Id s = g.to_image(g.log1p_sqrt(g.power_spec(x, cfg)));
  for (int i = 0; i < 4; ++i) {
    Conv2dBn<T>& blk = m.spec[i];
    Id y = g.conv2d(s, g.param(&blk.w), g.param(&blk.b), 2, 1);
    y = g.batchnorm(y, g.param(&blk.gamma), g.param(&blk.beta), &blk.run_mean,
                    &blk.run_var, training);
    s = g.relu(y);
  }

  // bottleneck: fuse both embeddings, broadcast over the deep wave features
  Id hw = g.add_rowvec(g.matmul(g.gap(e[3]), g.param(&m.bott_wave_w)),
                       g.param(&m.bott_wave_b));
  Id hs = g.add_rowvec(g.matmul(g.gap(s), g.param(&m.bott_spec_w)),
                       g.param(&m.bott_spec_b));
  Id z = g.add_rowvec(g.matmul(g.concat(hw, hs, 1), g.param(&m.bott_fuse_w)),
                      g.param(&m.bott_fuse_b));
  Id d = g.add_channel(e[3], z);

  // decoder with gated skips
  for (int i = 0; i < 4; ++i) {
    DecoderLevel<T>& lvl = m.dec[i];
    const int cur_len = g.val(d).dim(2);
    Id u = g.conv_transpose1d(d, g.param(&lvl.tw), g.param(&lvl.tb), 2,
                              (detail::kDecK[i] - 1) / 2);
    u = g.pad1d(u, cur_len * 2);  // odd kernels land one sample short
    u = g.batchnorm(u, g.param(&lvl.gamma), g.param(&lvl.beta), &lvl.run_mean,
                    &lvl.run_var, training);
    u = g.relu(u);
    if (lvl.has_gate) {
      Id skip = e[2 - i];
      Id a = g.sigmoid(g.conv1d(g.concat(skip, u, 1), g.param(&lvl.gate_w),
                                g.param(&lvl.gate_b), 1, 0));
      d = g.add(u, g.mul(a, skip));
    } else {
      d = u;
    }
  }

  Id raw = g.conv1d(d, g.param(&m.head_w), g.param(&m.head_b), 1, 0);
  Id w_hat = g.scalar_mul(g.tanh(raw), static_cast<T>(kOutScale));
  Id out = g.clamp(g.sub(x, w_hat), T(-1), T(1));
  if (padded > len) {
    out = g.trim1d(out, len);
    w_hat = g.trim1d(w_hat, len);
  }
  return {out, w_hat};
}

template <typename T>
typename tensor::Graph<T>::NodeId discriminator_forward(
    tensor::Graph<T>& g, DiscriminatorModel<T>& m,
    typename tensor::Graph<T>::NodeId x) {
  using Id = typename tensor::Graph<T>::NodeId;
  const auto& shape = g.val(x).shape;
  if (shape.size() != 3 || shape[1] != 1) {
    throw std::invalid_argument("discriminator_forward: want [N,1,L]");
  }
  if (shape[2] < kDiscMinLen) {
    throw std::invalid_argument("discriminator_forward: clip shorter than " +
                                std::to_string(kDiscMinLen) + " samples");
  }
  Id h = x;
  for (int i = 0; i < 4; ++i) {
    h = g.relu(g.conv1d(h, g.param(&m.w[i]), g.param(&m.b[i]), 4,
                        (detail::kDiscK[i] - 1) / 2));
  }
  return g.sigmoid(
      g.add_rowvec(g.matmul(g.gap(h), g.param(&m.fc_w)), g.param(&m.fc_b)));
}

}  // namespace wmlab::removal
