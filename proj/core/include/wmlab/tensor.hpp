#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "wmlab/fft.hpp"
#include "wmlab/thread_pool.hpp"

namespace wmlab::tensor {

// Dense row-major tensor. `grad` is empty until a backward pass deposits
// into it (parameters only).
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;

  Tensor() = default;

  static size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dim");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.data.assign(numel_of(shape), T(0));
    t.shape = std::move(shape);
    return t;
  }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t = zeros(std::move(shape));
    for (T& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from(std::vector<int> shape, std::vector<T> values) {
    if (numel_of(shape) != values.size()) {
      throw std::invalid_argument("tensor: shape/data size mismatch");
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
  }

  size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    for (T& g : grad) g = T(0);
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

enum class Op : uint8_t {
  kConstant, kParam,
  kAdd, kSub, kMul, kScalarMul,
  kMatMul, kAddRowVec, kAddChannel,
  kConv1d, kConvT1d, kConv2d,
  kRelu, kTanh, kSigmoid, kAbs, kSquare, kClamp,
  kBatchNorm,
  kMean, kSum, kGap, kRowSum, kMeanAxis1,
  kConcat, kTrim1d, kPad1d,
  kCosineSim, kSoftmax, kBce, kL1, kL2,
  kPowerSpec, kLog1pSqrt, kToImage,
};

struct PowerSpecConfig {
  int fft_size = 2048;
  int hop = 512;
};

// Reverse-mode tape. Ops evaluate eagerly; backward() walks the tape in
// reverse and accumulates into leased parameters' grad buffers.
// A graph (and the tensors it leases) is confined to one thread.
template <typename T>
class Graph {
 public:
  using NodeId = int;

  NodeId constant(Tensor<T> v) {
    return push(Op::kConstant, {}, std::move(v), false);
  }

  NodeId param(Tensor<T>* p) {
    if (p == nullptr) throw std::invalid_argument("param: null tensor");
    Node n;
    n.op = Op::kParam;
    n.val = *p;  // snapshot; updates after this lease are not visible
    n.leased = p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  const Tensor<T>& val(NodeId id) const { return at(id).val; }
  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----
  NodeId add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::kSub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::kMul, a, b); }

  NodeId scalar_mul(NodeId a, T c) {
    Tensor<T> out = at(a).val;
    for (T& v : out.data) v *= c;
    NodeId id = push(Op::kScalarMul, {a}, std::move(out));
    at(id).s0 = c;
    return id;
  }

  NodeId relu(NodeId a) {
    return unary(Op::kRelu, a, [](T x) { return x > T(0) ? x : T(0); });
  }
  NodeId tanh(NodeId a) {
    return unary(Op::kTanh, a, [](T x) { return std::tanh(x); });
  }
  NodeId sigmoid(NodeId a) {
    return unary(Op::kSigmoid, a,
                 [](T x) { return T(1) / (T(1) + std::exp(-x)); });
  }
  NodeId abs(NodeId a) {
    return unary(Op::kAbs, a, [](T x) { return std::fabs(x); });
  }
  NodeId square(NodeId a) {
    return unary(Op::kSquare, a, [](T x) { return x * x; });
  }

  NodeId clamp(NodeId a, T lo, T hi) {
    Tensor<T> out = at(a).val;
    for (T& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
    NodeId id = push(Op::kClamp, {a}, std::move(out));
    at(id).s0 = lo;
    at(id).s1 = hi;
    return id;
  }

  NodeId log1p_sqrt(NodeId a) {
    Tensor<T> out = at(a).val;
    for (T& v : out.data) {
      v = std::log1p(std::sqrt(v + kSpecEps));
    }
    return push(Op::kLog1pSqrt, {a}, std::move(out));
  }

  // ---- linear algebra ----
  NodeId matmul(NodeId a, NodeId b) {
    const Tensor<T>& A = at(a).val;
    const Tensor<T>& B = at(b).val;
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
      throw std::invalid_argument("matmul: shape mismatch");
    }
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out = Tensor<T>::zeros({m, n});
    std::vector<double> row(n);
    for (int i = 0; i < m; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (int kk = 0; kk < k; ++kk) {
        const double aik = static_cast<double>(A.data[i * k + kk]);
        const T* brow = B.data.data() + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) row[j] += aik * brow[j];
      }
      for (int j = 0; j < n; ++j) out.data[i * n + j] = static_cast<T>(row[j]);
    }
    return push(Op::kMatMul, {a, b}, std::move(out));
  }

  // x:[N,O] + b:[O]
  NodeId add_rowvec(NodeId x, NodeId b) {
    const Tensor<T>& X = at(x).val;
    const Tensor<T>& B = at(b).val;
    if (X.rank() != 2 || B.rank() != 1 || X.dim(1) != B.dim(0)) {
      throw std::invalid_argument("add_rowvec: shape mismatch");
    }
    Tensor<T> out = X;
    const int n = X.dim(0), o = X.dim(1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < o; ++j) out.data[i * o + j] += B.data[j];
    }
    return push(Op::kAddRowVec, {x, b}, std::move(out));
  }

  // x:[N,C,L] + v:[N,C], broadcast over L
  NodeId add_channel(NodeId x, NodeId v) {
    const Tensor<T>& X = at(x).val;
    const Tensor<T>& V = at(v).val;
    if (X.rank() != 3 || V.rank() != 2 || X.dim(0) != V.dim(0) ||
        X.dim(1) != V.dim(1)) {
      throw std::invalid_argument("add_channel: shape mismatch");
    }
    Tensor<T> out = X;
    const int n = X.dim(0), c = X.dim(1), l = X.dim(2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) {
        const T b = V.data[i * c + j];
        T* p = out.data.data() + (static_cast<size_t>(i) * c + j) * l;
        for (int q = 0; q < l; ++q) p[q] += b;
      }
    }
    return push(Op::kAddChannel, {x, v}, std::move(out));
  }

  // ---- convolutions ----
  // x:[N,Cin,L] w:[Cout,Cin,K] b:[Cout]
  NodeId conv1d(NodeId x, NodeId w, NodeId b, int stride, int pad);
  // x:[N,Cin,L] w:[Cin,Cout,K] b:[Cout]; Lout=(L-1)*stride+K-2*pad
  NodeId conv_transpose1d(NodeId x, NodeId w, NodeId b, int stride, int pad);
  // x:[N,Cin,H,W] w:[Cout,Cin,KH,KW] b:[Cout]
  NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad);

  // ---- batch norm (channel dim 1) ----
  // Train mode uses batch stats and updates running stats in place.
  // Eval mode is a pure affine map from the running stats.
  NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor<T>* run_mean,
                   Tensor<T>* run_var, bool training, T momentum = T(0.1),
                   T eps = T(1e-5));

  // ---- reductions ----
  NodeId mean(NodeId a) { return full_reduce(Op::kMean, a); }
  NodeId sum(NodeId a) { return full_reduce(Op::kSum, a); }

  // [N,C,...] -> [N,C], mean over trailing dims
  NodeId gap(NodeId a) {
    const Tensor<T>& X = at(a).val;
    if (X.rank() < 3) throw std::invalid_argument("gap: rank < 3");
    const int n = X.dim(0), c = X.dim(1);
    const size_t inner = X.numel() / (static_cast<size_t>(n) * c);
    Tensor<T> out = Tensor<T>::zeros({n, c});
    for (int i = 0; i < n * c; ++i) {
      const T* p = X.data.data() + static_cast<size_t>(i) * inner;
      double acc = 0.0;
      for (size_t q = 0; q < inner; ++q) acc += static_cast<double>(p[q]);
      out.data[i] = static_cast<T>(acc / static_cast<double>(inner));
    }
    return push(Op::kGap, {a}, std::move(out));
  }

  // [N,M] -> [N]
  NodeId row_sum(NodeId a) {
    const Tensor<T>& X = at(a).val;
    if (X.rank() != 2) throw std::invalid_argument("row_sum: rank != 2");
    const int n = X.dim(0), m = X.dim(1);
    Tensor<T> out = Tensor<T>::zeros({n});
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += static_cast<double>(X.data[i * m + j]);
      out.data[i] = static_cast<T>(acc);
    }
    return push(Op::kRowSum, {a}, std::move(out));
  }

  // [N,A,M] -> [N,M], mean over axis 1
  NodeId mean_axis1(NodeId a) {
    const Tensor<T>& X = at(a).val;
    if (X.rank() != 3) throw std::invalid_argument("mean_axis1: rank != 3");
    const int n = X.dim(0), t = X.dim(1), m = X.dim(2);
    Tensor<T> out = Tensor<T>::zeros({n, m});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int q = 0; q < t; ++q) {
          acc += static_cast<double>(
              X.data[(static_cast<size_t>(i) * t + q) * m + j]);
        }
        out.data[i * m + j] = static_cast<T>(acc / t);
      }
    }
    return push(Op::kMeanAxis1, {a}, std::move(out));
  }

  // ---- shape ----
  NodeId concat(NodeId a, NodeId b, int axis);
  NodeId trim1d(NodeId a, int new_len);  // [N,C,L] -> [N,C,new_len]
  NodeId pad1d(NodeId a, int new_len);   // zero-pad tail

  // [N,F,Tt] -> [N,1,F,Tt]... see to_image below for the layout used
  NodeId to_image(NodeId a) {
    const Tensor<T>& X = at(a).val;
    if (X.rank() != 3) throw std::invalid_argument("to_image: rank != 3");
    const int n = X.dim(0), t = X.dim(1), f = X.dim(2);
    Tensor<T> out = Tensor<T>::zeros({n, 1, f, t});
    for (int i = 0; i < n; ++i) {
      for (int q = 0; q < t; ++q) {
        for (int j = 0; j < f; ++j) {
          out.data[(static_cast<size_t>(i) * f + j) * t + q] =
              X.data[(static_cast<size_t>(i) * t + q) * f + j];
        }
      }
    }
    return push(Op::kToImage, {a}, std::move(out));
  }

  // ---- scalar losses / similarity ----
  // per-row cosine over flattened trailing dims: [N,...] x [N,...] -> [N]
  // zero vectors yield similarity 0 with zero gradient
  NodeId cosine_similarity(NodeId a, NodeId b);
  NodeId softmax(NodeId a);  // rank-1
  // elementwise -t*log(p) - (1-t)*log(1-p), p clamped to [1e-7, 1-1e-7]
  NodeId bce(NodeId pred, T target);
  NodeId l1_distance(NodeId a, NodeId b);  // mean |a-b| -> [1]
  NodeId l2_distance(NodeId a, NodeId b);  // mean (a-b)^2 -> [1]

  // windowed one-sided power spectrogram: [N,L] or [N,1,L] -> [N,T,F]
  NodeId power_spec(NodeId x, const PowerSpecConfig& cfg);

  void backward(NodeId loss);

  static constexpr T kSpecEps = static_cast<T>(1e-12);
  static constexpr T kBceLo = static_cast<T>(1e-7);

 private:
  struct Node {
    Op op = Op::kConstant;
    int in[3] = {-1, -1, -1};
    int i0 = 0, i1 = 0;
    T s0 = T(0), s1 = T(0);
    Tensor<T> val;
    std::vector<T> grad;
    std::vector<T> aux;
    Tensor<T>* leased = nullptr;
    Tensor<T>* run_mean = nullptr;
    Tensor<T>* run_var = nullptr;
    bool needs_grad = false;
  };

  Node& at(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& at(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

  NodeId push(Op op, std::initializer_list<NodeId> ins, Tensor<T> val,
              bool inherit = true) {
    Node n;
    n.op = op;
    int i = 0;
    for (NodeId id : ins) {
      if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
        throw std::invalid_argument("graph: bad node id");
      }
      n.in[i++] = id;
      if (inherit && at(id).needs_grad) n.needs_grad = true;
    }
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  template <typename F>
  NodeId unary(Op op, NodeId a, F f) {
    Tensor<T> out = at(a).val;
    for (T& v : out.data) v = f(v);
    return push(op, {a}, std::move(out));
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    const Tensor<T>& A = at(a).val;
    const Tensor<T>& B = at(b).val;
    if (!same_shape(A, B)) {
      throw std::invalid_argument("elementwise op: shape mismatch");
    }
    Tensor<T> out = A;
    const T* pb = B.data.data();
    if (op == Op::kAdd) {
      for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += pb[i];
    } else if (op == Op::kSub) {
      for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= pb[i];
    } else {
      for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= pb[i];
    }
    return push(op, {a, b}, std::move(out));
  }

  NodeId full_reduce(Op op, NodeId a) {
    const Tensor<T>& X = at(a).val;
    double acc = 0.0;
    for (T v : X.data) acc += static_cast<double>(v);
    if (op == Op::kMean) acc /= static_cast<double>(X.numel());
    return push(op, {a}, Tensor<T>::scalar(static_cast<T>(acc)));
  }

  std::vector<T>& grad_of(NodeId id) {
    Node& n = at(id);
    if (n.grad.size() != n.val.numel()) n.grad.assign(n.val.numel(), T(0));
    return n.grad;
  }

  void backward_node(NodeId id);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// convolution kernels
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::NodeId Graph<T>::conv1d(NodeId x, NodeId w, NodeId b,
                                           int stride, int pad) {
  const Tensor<T>& X = at(x).val;
  const Tensor<T>& W = at(w).val;
  const Tensor<T>& B = at(b).val;
  if (X.rank() != 3 || W.rank() != 3 || B.rank() != 1 ||
      X.dim(1) != W.dim(1) || B.dim(0) != W.dim(0)) {
    throw std::invalid_argument("conv1d: shape mismatch");
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv1d: bad stride/pad");
  const int n = X.dim(0), ci = X.dim(1), l = X.dim(2);
  const int co = W.dim(0), k = W.dim(2);
  const int lo = (l + 2 * pad - k) / stride + 1;
  if (l + 2 * pad < k) throw std::invalid_argument("conv1d: kernel exceeds input");

  Tensor<T> out = Tensor<T>::zeros({n, co, lo});
  ThreadPool::parallel_for(static_cast<int64_t>(n) * co, [&](int64_t idx) {
    const int in_ = static_cast<int>(idx / co);
    const int oc = static_cast<int>(idx % co);
    T* y = out.data.data() + (static_cast<size_t>(in_) * co + oc) * lo;
    for (int o = 0; o < lo; ++o) y[o] = B.data[oc];
    for (int ic = 0; ic < ci; ++ic) {
      const T* xp = X.data.data() + (static_cast<size_t>(in_) * ci + ic) * l;
      const T* wp = W.data.data() + (static_cast<size_t>(oc) * ci + ic) * k;
      for (int kk = 0; kk < k; ++kk) {
        const T wv = wp[kk];
        const int shift = kk - pad;
        // valid o: 0 <= o*stride + shift < l
        int o_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
        int o_hi = shift > l - 1 ? 0 : (l - 1 - shift) / stride + 1;
        if (o_hi > lo) o_hi = lo;
        const T* xs = xp + shift;
        for (int o = o_lo; o < o_hi; ++o) y[o] += wv * xs[o * stride];
      }
    }
  });
  NodeId id = push(Op::kConv1d, {x, w, b}, std::move(out));
  at(id).i0 = stride;
  at(id).i1 = pad;
  return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::conv_transpose1d(NodeId x, NodeId w,
                                                     NodeId b, int stride,
                                                     int pad) {
  const Tensor<T>& X = at(x).val;
  const Tensor<T>& W = at(w).val;
  const Tensor<T>& B = at(b).val;
  if (X.rank() != 3 || W.rank() != 3 || B.rank() != 1 ||
      X.dim(1) != W.dim(0) || B.dim(0) != W.dim(1)) {
    throw std::invalid_argument("conv_transpose1d: shape mismatch");
  }
  if (stride < 1 || pad < 0) {
    throw std::invalid_argument("conv_transpose1d: bad stride/pad");
  }
  const int n = X.dim(0), ci = X.dim(1), l = X.dim(2);
  const int co = W.dim(1), k = W.dim(2);
  const int lo = (l - 1) * stride + k - 2 * pad;
  if (lo <= 0) throw std::invalid_argument("conv_transpose1d: empty output");

  Tensor<T> out = Tensor<T>::zeros({n, co, lo});
  ThreadPool::parallel_for(static_cast<int64_t>(n) * co, [&](int64_t idx) {
    const int in_ = static_cast<int>(idx / co);
    const int oc = static_cast<int>(idx % co);
    T* y = out.data.data() + (static_cast<size_t>(in_) * co + oc) * lo;
    for (int o = 0; o < lo; ++o) y[o] = B.data[oc];
    for (int ic = 0; ic < ci; ++ic) {
      const T* xp = X.data.data() + (static_cast<size_t>(in_) * ci + ic) * l;
      const T* wp = W.data.data() + (static_cast<size_t>(ic) * co + oc) * k;
      for (int kk = 0; kk < k; ++kk) {
        const T wv = wp[kk];
        const int shift = kk - pad;
        // o = i*stride + shift must lie in [0, lo)
        int i_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
        int i_hi = shift > lo - 1 ? 0 : (lo - 1 - shift) / stride + 1;
        if (i_hi > l) i_hi = l;
        T* ys = y + shift;
        for (int i = i_lo; i < i_hi; ++i) ys[i * stride] += wv * xp[i];
      }
    }
  });
  NodeId id = push(Op::kConvT1d, {x, w, b}, std::move(out));
  at(id).i0 = stride;
  at(id).i1 = pad;
  return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::conv2d(NodeId x, NodeId w, NodeId b,
                                           int stride, int pad) {
  const Tensor<T>& X = at(x).val;
  const Tensor<T>& W = at(w).val;
  const Tensor<T>& B = at(b).val;
  if (X.rank() != 4 || W.rank() != 4 || B.rank() != 1 ||
      X.dim(1) != W.dim(1) || B.dim(0) != W.dim(0)) {
    throw std::invalid_argument("conv2d: shape mismatch");
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  const int n = X.dim(0), ci = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const int co = W.dim(0), kh = W.dim(2), kw = W.dim(3);
  if (h + 2 * pad < kh || wd + 2 * pad < kw) {
    throw std::invalid_argument("conv2d: kernel exceeds input");
  }
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;

  Tensor<T> out = Tensor<T>::zeros({n, co, ho, wo});
  ThreadPool::parallel_for(static_cast<int64_t>(n) * co, [&](int64_t idx) {
    const int in_ = static_cast<int>(idx / co);
    const int oc = static_cast<int>(idx % co);
    T* y = out.data.data() +
           (static_cast<size_t>(in_) * co + oc) * (static_cast<size_t>(ho) * wo);
    for (int q = 0; q < ho * wo; ++q) y[q] = B.data[oc];
    for (int ic = 0; ic < ci; ++ic) {
      const T* xp = X.data.data() +
                    (static_cast<size_t>(in_) * ci + ic) *
                        (static_cast<size_t>(h) * wd);
      const T* wp = W.data.data() +
                    (static_cast<size_t>(oc) * ci + ic) *
                        (static_cast<size_t>(kh) * kw);
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const T wv = wp[ky * kw + kx];
          const int sy = ky - pad, sx = kx - pad;
          int oy_lo = sy < 0 ? (-sy + stride - 1) / stride : 0;
          int oy_hi = sy > h - 1 ? 0 : (h - 1 - sy) / stride + 1;
          if (oy_hi > ho) oy_hi = ho;
          int ox_lo = sx < 0 ? (-sx + stride - 1) / stride : 0;
          int ox_hi = sx > wd - 1 ? 0 : (wd - 1 - sx) / stride + 1;
          if (ox_hi > wo) ox_hi = wo;
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const T* xr = xp + static_cast<size_t>(oy * stride + sy) * wd + sx;
            T* yr = y + static_cast<size_t>(oy) * wo;
            for (int ox = ox_lo; ox < ox_hi; ++ox) {
              yr[ox] += wv * xr[ox * stride];
            }
          }
        }
      }
    }
  });
  NodeId id = push(Op::kConv2d, {x, w, b}, std::move(out));
  at(id).i0 = stride;
  at(id).i1 = pad;
  return id;
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::NodeId Graph<T>::batchnorm(NodeId x, NodeId gamma,
                                              NodeId beta, Tensor<T>* run_mean,
                                              Tensor<T>* run_var, bool training,
                                              T momentum, T eps) {
  const Tensor<T>& X = at(x).val;
  const Tensor<T>& G = at(gamma).val;
  const Tensor<T>& Bt = at(beta).val;
  if (X.rank() < 2) throw std::invalid_argument("batchnorm: rank < 2");
  const int c = X.dim(1);
  if (G.rank() != 1 || Bt.rank() != 1 || G.dim(0) != c || Bt.dim(0) != c ||
      run_mean == nullptr || run_var == nullptr ||
      static_cast<int>(run_mean->numel()) != c ||
      static_cast<int>(run_var->numel()) != c) {
    throw std::invalid_argument("batchnorm: parameter shape mismatch");
  }
  const int n = X.dim(0);
  const size_t inner = X.numel() / (static_cast<size_t>(n) * c);
  const size_t count = static_cast<size_t>(n) * inner;

  Tensor<T> out = Tensor<T>::zeros(X.shape);
  std::vector<T> aux;
  if (training) {
    aux.resize(X.numel() + c);  // xhat, then invstd per channel
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = X.data.data() +
                     (static_cast<size_t>(i) * c + ch) * inner;
        for (size_t q = 0; q < inner; ++q) {
          sum += static_cast<double>(p[q]);
          sq += static_cast<double>(p[q]) * static_cast<double>(p[q]);
        }
      }
      const double mu = sum / static_cast<double>(count);
      double var = sq / static_cast<double>(count) - mu * mu;
      if (var < 0) var = 0;
      const double invstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
      run_mean->data[ch] = static_cast<T>(
          (1.0 - static_cast<double>(momentum)) *
              static_cast<double>(run_mean->data[ch]) +
          static_cast<double>(momentum) * mu);
      run_var->data[ch] = static_cast<T>(
          (1.0 - static_cast<double>(momentum)) *
              static_cast<double>(run_var->data[ch]) +
          static_cast<double>(momentum) * var);
      aux[X.numel() + ch] = static_cast<T>(invstd);
      for (int i = 0; i < n; ++i) {
        const size_t off = (static_cast<size_t>(i) * c + ch) * inner;
        for (size_t q = 0; q < inner; ++q) {
          const T xh = static_cast<T>(
              (static_cast<double>(X.data[off + q]) - mu) * invstd);
          aux[off + q] = xh;
          out.data[off + q] = G.data[ch] * xh + Bt.data[ch];
        }
      }
    }
  } else {
    aux.resize(c);
    for (int ch = 0; ch < c; ++ch) {
      const double invstd =
          1.0 / std::sqrt(static_cast<double>(run_var->data[ch]) +
                          static_cast<double>(eps));
      aux[ch] = static_cast<T>(invstd);
      const double mu = static_cast<double>(run_mean->data[ch]);
      for (int i = 0; i < n; ++i) {
        const size_t off = (static_cast<size_t>(i) * c + ch) * inner;
        for (size_t q = 0; q < inner; ++q) {
          out.data[off + q] = static_cast<T>(
              static_cast<double>(G.data[ch]) *
                  (static_cast<double>(X.data[off + q]) - mu) * invstd +
              static_cast<double>(Bt.data[ch]));
        }
      }
    }
  }
  NodeId id = push(Op::kBatchNorm, {x, gamma, beta}, std::move(out));
  Node& nd = at(id);
  nd.aux = std::move(aux);
  nd.i0 = training ? 1 : 0;
  nd.s0 = eps;
  nd.run_mean = run_mean;
  nd.run_var = run_var;
  return id;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::NodeId Graph<T>::concat(NodeId a, NodeId b, int axis) {
  const Tensor<T>& A = at(a).val;
  const Tensor<T>& B = at(b).val;
  if (axis != 1 || A.rank() != B.rank() || A.rank() < 2) {
    throw std::invalid_argument("concat: only axis=1, matching ranks >= 2");
  }
  for (int d = 0; d < A.rank(); ++d) {
    if (d != 1 && A.dim(d) != B.dim(d)) {
      throw std::invalid_argument("concat: shape mismatch");
    }
  }
  std::vector<int> shape = A.shape;
  shape[1] = A.dim(1) + B.dim(1);
  Tensor<T> out = Tensor<T>::zeros(shape);
  const int n = A.dim(0);
  size_t inner = 1;
  for (int d = 2; d < A.rank(); ++d) inner *= static_cast<size_t>(A.dim(d));
  const size_t arow = static_cast<size_t>(A.dim(1)) * inner;
  const size_t brow = static_cast<size_t>(B.dim(1)) * inner;
  for (int i = 0; i < n; ++i) {
    std::copy(A.data.begin() + i * arow, A.data.begin() + (i + 1) * arow,
              out.data.begin() + i * (arow + brow));
    std::copy(B.data.begin() + i * brow, B.data.begin() + (i + 1) * brow,
              out.data.begin() + i * (arow + brow) + arow);
  }
  NodeId id = push(Op::kConcat, {a, b}, std::move(out));
  at(id).i0 = axis;
  return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::trim1d(NodeId a, int new_len) {
  const Tensor<T>& X = at(a).val;
  if (X.rank() != 3 || new_len <= 0 || new_len > X.dim(2)) {
    throw std::invalid_argument("trim1d: bad length");
  }
  const int n = X.dim(0), c = X.dim(1), l = X.dim(2);
  Tensor<T> out = Tensor<T>::zeros({n, c, new_len});
  for (int i = 0; i < n * c; ++i) {
    std::copy(X.data.begin() + static_cast<size_t>(i) * l,
              X.data.begin() + static_cast<size_t>(i) * l + new_len,
              out.data.begin() + static_cast<size_t>(i) * new_len);
  }
  NodeId id = push(Op::kTrim1d, {a}, std::move(out));
  at(id).i0 = new_len;
  return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::pad1d(NodeId a, int new_len) {
  const Tensor<T>& X = at(a).val;
  if (X.rank() != 3 || new_len < X.dim(2)) {
    throw std::invalid_argument("pad1d: bad length");
  }
  const int n = X.dim(0), c = X.dim(1), l = X.dim(2);
  Tensor<T> out = Tensor<T>::zeros({n, c, new_len});
  for (int i = 0; i < n * c; ++i) {
    std::copy(X.data.begin() + static_cast<size_t>(i) * l,
              X.data.begin() + static_cast<size_t>(i + 1) * l,
              out.data.begin() + static_cast<size_t>(i) * new_len);
  }
  NodeId id = push(Op::kPad1d, {a}, std::move(out));
  at(id).i0 = new_len;
  return id;
}

// ---------------------------------------------------------------------------
// losses / similarity
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::NodeId Graph<T>::cosine_similarity(NodeId a, NodeId b) {
  const Tensor<T>& A = at(a).val;
  const Tensor<T>& B = at(b).val;
  if (!same_shape(A, B) || A.rank() < 1) {
    throw std::invalid_argument("cosine_similarity: shape mismatch");
  }
  const int n = A.rank() == 1 ? 1 : A.dim(0);
  const size_t inner = A.numel() / static_cast<size_t>(n);
  Tensor<T> out = Tensor<T>::zeros({n});
  std::vector<T> aux(3 * static_cast<size_t>(n));  // dot, |a|, |b| per row
  for (int i = 0; i < n; ++i) {
    const T* pa = A.data.data() + static_cast<size_t>(i) * inner;
    const T* pb = B.data.data() + static_cast<size_t>(i) * inner;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t q = 0; q < inner; ++q) {
      dot += static_cast<double>(pa[q]) * static_cast<double>(pb[q]);
      na += static_cast<double>(pa[q]) * static_cast<double>(pa[q]);
      nb += static_cast<double>(pb[q]) * static_cast<double>(pb[q]);
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    aux[3 * i] = static_cast<T>(dot);
    aux[3 * i + 1] = static_cast<T>(na);
    aux[3 * i + 2] = static_cast<T>(nb);
    out.data[i] =
        (na < 1e-12 || nb < 1e-12) ? T(0) : static_cast<T>(dot / (na * nb));
  }
  NodeId id = push(Op::kCosineSim, {a, b}, std::move(out));
  at(id).aux = std::move(aux);
  return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::softmax(NodeId a) {
  const Tensor<T>& X = at(a).val;
  if (X.rank() != 1) throw std::invalid_argument("softmax: rank != 1");
  Tensor<T> out = X;
  T mx = out.data[0];
  for (T v : out.data) mx = std::max(mx, v);
  double denom = 0.0;
  for (T& v : out.data) {
    v = std::exp(v - mx);
    denom += static_cast<double>(v);
  }
  for (T& v : out.data) v = static_cast<T>(static_cast<double>(v) / denom);
  return push(Op::kSoftmax, {a}, std::move(out));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::bce(NodeId pred, T target) {
  if (target != T(0) && target != T(1)) {
    throw std::invalid_argument("bce: target must be 0 or 1");
  }
  const Tensor<T>& P = at(pred).val;
  Tensor<T> out = P;
  const T lo = kBceLo, hi = T(1) - kBceLo;
  for (T& v : out.data) {
    T p = v < lo ? lo : (v > hi ? hi : v);
    v = target == T(1) ? -std::log(p) : -std::log(T(1) - p);
  }
  NodeId id = push(Op::kBce, {pred}, std::move(out));
  at(id).s0 = target;
  return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::l1_distance(NodeId a, NodeId b) {
  const Tensor<T>& A = at(a).val;
  const Tensor<T>& B = at(b).val;
  if (!same_shape(A, B)) throw std::invalid_argument("l1_distance: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < A.numel(); ++i) {
    acc += std::fabs(static_cast<double>(A.data[i]) -
                     static_cast<double>(B.data[i]));
  }
  return push(Op::kL1, {a, b},
              Tensor<T>::scalar(static_cast<T>(acc / A.numel())));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::l2_distance(NodeId a, NodeId b) {
  const Tensor<T>& A = at(a).val;
  const Tensor<T>& B = at(b).val;
  if (!same_shape(A, B)) throw std::invalid_argument("l2_distance: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < A.numel(); ++i) {
    const double d = static_cast<double>(A.data[i]) -
                     static_cast<double>(B.data[i]);
    acc += d * d;
  }
  return push(Op::kL2, {a, b},
              Tensor<T>::scalar(static_cast<T>(acc / A.numel())));
}

// ---------------------------------------------------------------------------
// power spectrogram
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::NodeId Graph<T>::power_spec(NodeId x,
                                               const PowerSpecConfig& cfg) {
  const Tensor<T>& X = at(x).val;
  int n, l;
  if (X.rank() == 2) {
    n = X.dim(0);
    l = X.dim(1);
  } else if (X.rank() == 3 && X.dim(1) == 1) {
    n = X.dim(0);
    l = X.dim(2);
  } else {
    throw std::invalid_argument("power_spec: want [N,L] or [N,1,L]");
  }
  if (!dsp::is_pow2(static_cast<size_t>(cfg.fft_size)) || cfg.hop <= 0 ||
      cfg.fft_size % cfg.hop != 0) {
    throw std::invalid_argument("power_spec: bad stft config");
  }
  if (l < cfg.fft_size) {
    throw std::invalid_argument("power_spec: input shorter than one frame");
  }
  const int nf = cfg.fft_size;
  const int nbins = nf / 2 + 1;
  const int frames = (l - nf) / cfg.hop + 1;

  std::vector<T> win(nf);
  const double pi = 3.14159265358979323846264338327950288;
  for (int i = 0; i < nf; ++i) {
    win[i] = static_cast<T>(0.5 * (1.0 - std::cos(2.0 * pi * i / nf)));
  }

  Tensor<T> out = Tensor<T>::zeros({n, frames, nbins});
  std::vector<T> aux(static_cast<size_t>(n) * frames * nbins * 2);
  ThreadPool::parallel_for(static_cast<int64_t>(n) * frames, [&](int64_t idx) {
    const int in_ = static_cast<int>(idx / frames);
    const int t = static_cast<int>(idx % frames);
    const T* xp = X.data.data() + static_cast<size_t>(in_) * l +
                  static_cast<size_t>(t) * cfg.hop;
    std::vector<std::complex<T>> buf(nf);
    for (int i = 0; i < nf; ++i) buf[i] = {win[i] * xp[i], T(0)};
    dsp::fft(buf.data(), static_cast<size_t>(nf));
    T* pw = out.data.data() + idx * nbins;
    T* sp = aux.data() + idx * nbins * 2;
    for (int f = 0; f < nbins; ++f) {
      sp[2 * f] = buf[f].real();
      sp[2 * f + 1] = buf[f].imag();
      pw[f] = buf[f].real() * buf[f].real() + buf[f].imag() * buf[f].imag();
    }
  });
  NodeId id = push(Op::kPowerSpec, {x}, std::move(out));
  Node& nd = at(id);
  nd.aux = std::move(aux);
  nd.i0 = cfg.fft_size;
  nd.i1 = cfg.hop;
  return id;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
void Graph<T>::backward(NodeId loss) {
  Node& top = at(loss);
  if (top.val.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  if (!top.needs_grad) {
    throw std::invalid_argument("backward: loss does not depend on parameters");
  }
  grad_of(loss)[0] = T(1);
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = at(id);
    if (!n.needs_grad || n.grad.empty()) continue;
    backward_node(id);
  }
  for (auto& n : nodes_) {
    if (n.op == Op::kParam && n.leased != nullptr && !n.grad.empty()) {
      n.leased->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) {
        n.leased->grad[i] += n.grad[i];
      }
    }
  }
}

template <typename T>
void Graph<T>::backward_node(NodeId id) {
  Node& n = at(id);
  const std::vector<T>& g = n.grad;
  auto want = [&](int slot) {
    return n.in[slot] >= 0 && at(n.in[slot]).needs_grad;
  };
  auto gin = [&](int slot) -> std::vector<T>& { return grad_of(n.in[slot]); };
  auto vin = [&](int slot) -> const Tensor<T>& { return at(n.in[slot]).val; };

  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      break;
    case Op::kAdd: {
      for (int s = 0; s < 2; ++s) {
        if (!want(s)) continue;
        std::vector<T>& gi = gin(s);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      if (want(1)) {
        std::vector<T>& gi = gin(1);
        for (size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& b = vin(1);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * b.data[i];
      }
      if (want(1)) {
        std::vector<T>& gi = gin(1);
        const Tensor<T>& a = vin(0);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * a.data[i];
      }
      break;
    }
    case Op::kScalarMul: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * n.s0;
      }
      break;
    }
    case Op::kRelu: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& x = vin(0);
        for (size_t i = 0; i < g.size(); ++i) {
          if (x.data[i] > T(0)) gi[i] += g[i];
        }
      }
      break;
    }
    case Op::kTanh: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (size_t i = 0; i < g.size(); ++i) {
          gi[i] += g[i] * (T(1) - n.val.data[i] * n.val.data[i]);
        }
      }
      break;
    }
    case Op::kSigmoid: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (size_t i = 0; i < g.size(); ++i) {
          gi[i] += g[i] * n.val.data[i] * (T(1) - n.val.data[i]);
        }
      }
      break;
    }
    case Op::kAbs: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& x = vin(0);
        for (size_t i = 0; i < g.size(); ++i) {
          gi[i] += x.data[i] > T(0) ? g[i] : (x.data[i] < T(0) ? -g[i] : T(0));
        }
      }
      break;
    }
    case Op::kSquare: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& x = vin(0);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += T(2) * g[i] * x.data[i];
      }
      break;
    }
    case Op::kClamp: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& x = vin(0);
        for (size_t i = 0; i < g.size(); ++i) {
          if (x.data[i] > n.s0 && x.data[i] < n.s1) gi[i] += g[i];
        }
      }
      break;
    }
    case Op::kLog1pSqrt: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& x = vin(0);
        for (size_t i = 0; i < g.size(); ++i) {
          const T r = std::sqrt(x.data[i] + kSpecEps);
          gi[i] += g[i] / ((T(1) + r) * (T(2) * r));
        }
      }
      break;
    }
    case Op::kMatMul: {
      const Tensor<T>& A = vin(0);
      const Tensor<T>& B = vin(1);
      const int m = A.dim(0), k = A.dim(1), nn = B.dim(1);
      if (want(0)) {  // dA = G B^T
        std::vector<T>& gi = gin(0);
        for (int i = 0; i < m; ++i) {
          for (int kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const T* gr = g.data() + static_cast<size_t>(i) * nn;
            const T* br = B.data.data() + static_cast<size_t>(kk) * nn;
            for (int j = 0; j < nn; ++j) {
              acc += static_cast<double>(gr[j]) * static_cast<double>(br[j]);
            }
            gi[static_cast<size_t>(i) * k + kk] += static_cast<T>(acc);
          }
        }
      }
      if (want(1)) {  // dB = A^T G
        std::vector<T>& gi = gin(1);
        for (int kk = 0; kk < k; ++kk) {
          for (int j = 0; j < nn; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) {
              acc += static_cast<double>(A.data[static_cast<size_t>(i) * k + kk]) *
                     static_cast<double>(g[static_cast<size_t>(i) * nn + j]);
            }
            gi[static_cast<size_t>(kk) * nn + j] += static_cast<T>(acc);
          }
        }
      }
      break;
    }
    case Op::kAddRowVec: {
      const int m = n.val.dim(0), o = n.val.dim(1);
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      if (want(1)) {
        std::vector<T>& gi = gin(1);
        for (int j = 0; j < o; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) {
            acc += static_cast<double>(g[static_cast<size_t>(i) * o + j]);
          }
          gi[j] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::kAddChannel: {
      const int nn = n.val.dim(0), c = n.val.dim(1), l = n.val.dim(2);
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      if (want(1)) {
        std::vector<T>& gi = gin(1);
        for (int i = 0; i < nn * c; ++i) {
          double acc = 0.0;
          const T* gp = g.data() + static_cast<size_t>(i) * l;
          for (int q = 0; q < l; ++q) acc += static_cast<double>(gp[q]);
          gi[i] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor<T>& X = vin(0);
      const Tensor<T>& W = vin(1);
      const int stride = n.i0, pad = n.i1;
      const int nn = X.dim(0), ci = X.dim(1), l = X.dim(2);
      const int co = W.dim(0), k = W.dim(2), lo = n.val.dim(2);
      if (want(0)) {
        std::vector<T>& gx = gin(0);
        ThreadPool::parallel_for(static_cast<int64_t>(nn) * ci, [&](int64_t idx) {
          const int in_ = static_cast<int>(idx / ci);
          const int ic = static_cast<int>(idx % ci);
          T* gxp = gx.data() + (static_cast<size_t>(in_) * ci + ic) * l;
          for (int oc = 0; oc < co; ++oc) {
            const T* gp = g.data() + (static_cast<size_t>(in_) * co + oc) * lo;
            const T* wp = W.data.data() + (static_cast<size_t>(oc) * ci + ic) * k;
            for (int kk = 0; kk < k; ++kk) {
              const T wv = wp[kk];
              const int shift = kk - pad;
              int o_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
              int o_hi = shift > l - 1 ? 0 : (l - 1 - shift) / stride + 1;
              if (o_hi > lo) o_hi = lo;
              T* gs = gxp + shift;
              for (int o = o_lo; o < o_hi; ++o) gs[o * stride] += wv * gp[o];
            }
          }
        });
      }
      if (want(1)) {
        std::vector<T>& gw = gin(1);
        ThreadPool::parallel_for(co, [&](int64_t oc) {
          for (int ic = 0; ic < ci; ++ic) {
            for (int kk = 0; kk < k; ++kk) {
              const int shift = kk - pad;
              double acc = 0.0;
              for (int in_ = 0; in_ < nn; ++in_) {
                const T* gp =
                    g.data() + (static_cast<size_t>(in_) * co + oc) * lo;
                const T* xp = X.data.data() +
                              (static_cast<size_t>(in_) * ci + ic) * l + shift;
                int o_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                int o_hi = shift > l - 1 ? 0 : (l - 1 - shift) / stride + 1;
                if (o_hi > lo) o_hi = lo;
                for (int o = o_lo; o < o_hi; ++o) {
                  acc += static_cast<double>(gp[o]) *
                         static_cast<double>(xp[o * stride]);
                }
              }
              gw[(static_cast<size_t>(oc) * ci + ic) * k + kk] +=
                  static_cast<T>(acc);
            }
          }
        });
      }
      if (want(2)) {
        std::vector<T>& gb = gin(2);
        for (int oc = 0; oc < co; ++oc) {
          double acc = 0.0;
          for (int in_ = 0; in_ < nn; ++in_) {
            const T* gp = g.data() + (static_cast<size_t>(in_) * co + oc) * lo;
            for (int o = 0; o < lo; ++o) acc += static_cast<double>(gp[o]);
          }
          gb[oc] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::kConvT1d: {
      const Tensor<T>& X = vin(0);
      const Tensor<T>& W = vin(1);
      const int stride = n.i0, pad = n.i1;
      const int nn = X.dim(0), ci = X.dim(1), l = X.dim(2);
      const int co = W.dim(1), k = W.dim(2), lo = n.val.dim(2);
      if (want(0)) {
        std::vector<T>& gx = gin(0);
        ThreadPool::parallel_for(static_cast<int64_t>(nn) * ci, [&](int64_t idx) {
          const int in_ = static_cast<int>(idx / ci);
          const int ic = static_cast<int>(idx % ci);
          T* gxp = gx.data() + (static_cast<size_t>(in_) * ci + ic) * l;
          for (int oc = 0; oc < co; ++oc) {
            const T* gp = g.data() + (static_cast<size_t>(in_) * co + oc) * lo;
            const T* wp = W.data.data() + (static_cast<size_t>(ic) * co + oc) * k;
            for (int kk = 0; kk < k; ++kk) {
              const T wv = wp[kk];
              const int shift = kk - pad;
              int i_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
              int i_hi = shift > lo - 1 ? 0 : (lo - 1 - shift) / stride + 1;
              if (i_hi > l) i_hi = l;
              const T* gs = gp + shift;
              for (int i = i_lo; i < i_hi; ++i) gxp[i] += wv * gs[i * stride];
            }
          }
        });
      }
      if (want(1)) {
        std::vector<T>& gw = gin(1);
        ThreadPool::parallel_for(ci, [&](int64_t ic) {
          for (int oc = 0; oc < co; ++oc) {
            for (int kk = 0; kk < k; ++kk) {
              const int shift = kk - pad;
              double acc = 0.0;
              for (int in_ = 0; in_ < nn; ++in_) {
                const T* xp =
                    X.data.data() + (static_cast<size_t>(in_) * ci + ic) * l;
                const T* gp = g.data() +
                              (static_cast<size_t>(in_) * co + oc) * lo + shift;
                int i_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                int i_hi = shift > lo - 1 ? 0 : (lo - 1 - shift) / stride + 1;
                if (i_hi > l) i_hi = l;
                for (int i = i_lo; i < i_hi; ++i) {
                  acc += static_cast<double>(xp[i]) *
                         static_cast<double>(gp[i * stride]);
                }
              }
              gw[(static_cast<size_t>(ic) * co + oc) * k + kk] +=
                  static_cast<T>(acc);
            }
          }
        });
      }
      if (want(2)) {
        std::vector<T>& gb = gin(2);
        for (int oc = 0; oc < co; ++oc) {
          double acc = 0.0;
          for (int in_ = 0; in_ < nn; ++in_) {
            const T* gp = g.data() + (static_cast<size_t>(in_) * co + oc) * lo;
            for (int o = 0; o < lo; ++o) acc += static_cast<double>(gp[o]);
          }
          gb[oc] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::kConv2d: {
      const Tensor<T>& X = vin(0);
      const Tensor<T>& W = vin(1);
      const int stride = n.i0, pad = n.i1;
      const int nn = X.dim(0), ci = X.dim(1), h = X.dim(2), wd = X.dim(3);
      const int co = W.dim(0), kh = W.dim(2), kw = W.dim(3);
      const int ho = n.val.dim(2), wo = n.val.dim(3);
      if (want(0)) {
        std::vector<T>& gx = gin(0);
        ThreadPool::parallel_for(static_cast<int64_t>(nn) * ci, [&](int64_t idx) {
          const int in_ = static_cast<int>(idx / ci);
          const int ic = static_cast<int>(idx % ci);
          T* gxp = gx.data() + (static_cast<size_t>(in_) * ci + ic) *
                                   (static_cast<size_t>(h) * wd);
          for (int oc = 0; oc < co; ++oc) {
            const T* gp = g.data() + (static_cast<size_t>(in_) * co + oc) *
                                         (static_cast<size_t>(ho) * wo);
            const T* wp = W.data.data() + (static_cast<size_t>(oc) * ci + ic) *
                                              (static_cast<size_t>(kh) * kw);
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const T wv = wp[ky * kw + kx];
                const int sy = ky - pad, sx = kx - pad;
                int oy_lo = sy < 0 ? (-sy + stride - 1) / stride : 0;
                int oy_hi = sy > h - 1 ? 0 : (h - 1 - sy) / stride + 1;
                if (oy_hi > ho) oy_hi = ho;
                int ox_lo = sx < 0 ? (-sx + stride - 1) / stride : 0;
                int ox_hi = sx > wd - 1 ? 0 : (wd - 1 - sx) / stride + 1;
                if (ox_hi > wo) ox_hi = wo;
                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                  T* gr = gxp + static_cast<size_t>(oy * stride + sy) * wd + sx;
                  const T* gpr = gp + static_cast<size_t>(oy) * wo;
                  for (int ox = ox_lo; ox < ox_hi; ++ox) {
                    gr[ox * stride] += wv * gpr[ox];
                  }
                }
              }
            }
          }
        });
      }
      if (want(1)) {
        std::vector<T>& gw = gin(1);
        ThreadPool::parallel_for(co, [&](int64_t oc) {
          for (int ic = 0; ic < ci; ++ic) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int sy = ky - pad, sx = kx - pad;
                double acc = 0.0;
                for (int in_ = 0; in_ < nn; ++in_) {
                  const T* xp = X.data.data() +
                                (static_cast<size_t>(in_) * ci + ic) *
                                    (static_cast<size_t>(h) * wd);
                  const T* gp = g.data() +
                                (static_cast<size_t>(in_) * co + oc) *
                                    (static_cast<size_t>(ho) * wo);
                  int oy_lo = sy < 0 ? (-sy + stride - 1) / stride : 0;
                  int oy_hi = sy > h - 1 ? 0 : (h - 1 - sy) / stride + 1;
                  if (oy_hi > ho) oy_hi = ho;
                  int ox_lo = sx < 0 ? (-sx + stride - 1) / stride : 0;
                  int ox_hi = sx > wd - 1 ? 0 : (wd - 1 - sx) / stride + 1;
                  if (ox_hi > wo) ox_hi = wo;
                  for (int oy = oy_lo; oy < oy_hi; ++oy) {
                    const T* xr =
                        xp + static_cast<size_t>(oy * stride + sy) * wd + sx;
                    const T* gr = gp + static_cast<size_t>(oy) * wo;
                    for (int ox = ox_lo; ox < ox_hi; ++ox) {
                      acc += static_cast<double>(gr[ox]) *
                             static_cast<double>(xr[ox * stride]);
                    }
                  }
                }
                gw[(static_cast<size_t>(oc) * ci + ic) *
                       (static_cast<size_t>(kh) * kw) +
                   static_cast<size_t>(ky) * kw + kx] += static_cast<T>(acc);
              }
            }
          }
        });
      }
      if (want(2)) {
        std::vector<T>& gb = gin(2);
        const size_t plane = static_cast<size_t>(ho) * wo;
        for (int oc = 0; oc < co; ++oc) {
          double acc = 0.0;
          for (int in_ = 0; in_ < nn; ++in_) {
            const T* gp = g.data() + (static_cast<size_t>(in_) * co + oc) * plane;
            for (size_t q = 0; q < plane; ++q) acc += static_cast<double>(gp[q]);
          }
          gb[oc] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::kBatchNorm: {
      const Tensor<T>& X = vin(0);
      const Tensor<T>& Ga = vin(1);
      const int nn = X.dim(0), c = X.dim(1);
      const size_t inner = X.numel() / (static_cast<size_t>(nn) * c);
      const bool training = n.i0 == 1;
      if (training) {
        const T* xhat = n.aux.data();
        const T* invstd = n.aux.data() + X.numel();
        const double m = static_cast<double>(nn) * inner;
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int i = 0; i < nn; ++i) {
            const size_t off = (static_cast<size_t>(i) * c + ch) * inner;
            for (size_t q = 0; q < inner; ++q) {
              sum_g += static_cast<double>(g[off + q]);
              sum_gx += static_cast<double>(g[off + q]) *
                        static_cast<double>(xhat[off + q]);
            }
          }
          if (want(1)) gin(1)[ch] += static_cast<T>(sum_gx);
          if (want(2)) gin(2)[ch] += static_cast<T>(sum_g);
          if (want(0)) {
            std::vector<T>& gx = gin(0);
            const double scale =
                static_cast<double>(Ga.data[ch]) * static_cast<double>(invstd[ch]);
            const double mg = sum_g / m, mgx = sum_gx / m;
            for (int i = 0; i < nn; ++i) {
              const size_t off = (static_cast<size_t>(i) * c + ch) * inner;
              for (size_t q = 0; q < inner; ++q) {
                gx[off + q] += static_cast<T>(
                    scale * (static_cast<double>(g[off + q]) - mg -
                             static_cast<double>(xhat[off + q]) * mgx));
              }
            }
          }
        }
      } else {
        const T* invstd = n.aux.data();
        for (int ch = 0; ch < c; ++ch) {
          const double is = static_cast<double>(invstd[ch]);
          const double mu = static_cast<double>(n.run_mean->data[ch]);
          double sum_g = 0.0, sum_gx = 0.0;
          for (int i = 0; i < nn; ++i) {
            const size_t off = (static_cast<size_t>(i) * c + ch) * inner;
            for (size_t q = 0; q < inner; ++q) {
              sum_g += static_cast<double>(g[off + q]);
              sum_gx += static_cast<double>(g[off + q]) *
                        (static_cast<double>(X.data[off + q]) - mu) * is;
            }
          }
          if (want(1)) gin(1)[ch] += static_cast<T>(sum_gx);
          if (want(2)) gin(2)[ch] += static_cast<T>(sum_g);
          if (want(0)) {
            std::vector<T>& gx = gin(0);
            const T scale = static_cast<T>(static_cast<double>(Ga.data[ch]) * is);
            for (int i = 0; i < nn; ++i) {
              const size_t off = (static_cast<size_t>(i) * c + ch) * inner;
              for (size_t q = 0; q < inner; ++q) gx[off + q] += scale * g[off + q];
            }
          }
        }
      }
      break;
    }
    case Op::kMean: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const T gv = g[0] / static_cast<T>(gi.size());
        for (T& v : gi) v += gv;
      }
      break;
    }
    case Op::kSum: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        for (T& v : gi) v += g[0];
      }
      break;
    }
    case Op::kGap: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const size_t rows = n.val.numel();
        const size_t inner = gi.size() / rows;
        for (size_t i = 0; i < rows; ++i) {
          const T gv = g[i] / static_cast<T>(inner);
          T* p = gi.data() + i * inner;
          for (size_t q = 0; q < inner; ++q) p[q] += gv;
        }
      }
      break;
    }
    case Op::kRowSum: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const int rows = n.val.dim(0);
        const size_t m = gi.size() / rows;
        for (int i = 0; i < rows; ++i) {
          T* p = gi.data() + static_cast<size_t>(i) * m;
          for (size_t j = 0; j < m; ++j) p[j] += g[i];
        }
      }
      break;
    }
    case Op::kMeanAxis1: {
      if (want(0)) {
        const Tensor<T>& X = vin(0);
        std::vector<T>& gi = gin(0);
        const int nn = X.dim(0), t = X.dim(1), m = X.dim(2);
        for (int i = 0; i < nn; ++i) {
          for (int q = 0; q < t; ++q) {
            T* p = gi.data() + (static_cast<size_t>(i) * t + q) * m;
            const T* gp = g.data() + static_cast<size_t>(i) * m;
            for (int j = 0; j < m; ++j) p[j] += gp[j] / static_cast<T>(t);
          }
        }
      }
      break;
    }
    case Op::kConcat: {
      const Tensor<T>& A = vin(0);
      const Tensor<T>& B = vin(1);
      const int nn = A.dim(0);
      size_t inner = 1;
      for (int d = 2; d < A.rank(); ++d) inner *= static_cast<size_t>(A.dim(d));
      const size_t arow = static_cast<size_t>(A.dim(1)) * inner;
      const size_t brow = static_cast<size_t>(B.dim(1)) * inner;
      for (int i = 0; i < nn; ++i) {
        const T* gp = g.data() + static_cast<size_t>(i) * (arow + brow);
        if (want(0)) {
          T* p = gin(0).data() + static_cast<size_t>(i) * arow;
          for (size_t q = 0; q < arow; ++q) p[q] += gp[q];
        }
        if (want(1)) {
          T* p = gin(1).data() + static_cast<size_t>(i) * brow;
          for (size_t q = 0; q < brow; ++q) p[q] += gp[q + arow];
        }
      }
      break;
    }
    case Op::kTrim1d: {
      if (want(0)) {
        const Tensor<T>& X = vin(0);
        std::vector<T>& gi = gin(0);
        const int l = X.dim(2), nl = n.i0;
        const size_t rows = X.numel() / l;
        for (size_t i = 0; i < rows; ++i) {
          T* p = gi.data() + i * l;
          const T* gp = g.data() + i * nl;
          for (int q = 0; q < nl; ++q) p[q] += gp[q];
        }
      }
      break;
    }
    case Op::kPad1d: {
      if (want(0)) {
        const Tensor<T>& X = vin(0);
        std::vector<T>& gi = gin(0);
        const int l = X.dim(2), nl = n.i0;
        const size_t rows = X.numel() / l;
        for (size_t i = 0; i < rows; ++i) {
          T* p = gi.data() + i * l;
          const T* gp = g.data() + i * nl;
          for (int q = 0; q < l; ++q) p[q] += gp[q];
        }
      }
      break;
    }
    case Op::kToImage: {
      if (want(0)) {
        const Tensor<T>& X = vin(0);
        std::vector<T>& gi = gin(0);
        const int nn = X.dim(0), t = X.dim(1), f = X.dim(2);
        for (int i = 0; i < nn; ++i) {
          for (int q = 0; q < t; ++q) {
            for (int j = 0; j < f; ++j) {
              gi[(static_cast<size_t>(i) * t + q) * f + j] +=
                  g[(static_cast<size_t>(i) * f + j) * t + q];
            }
          }
        }
      }
      break;
    }
    case Op::kCosineSim: {
      const Tensor<T>& A = vin(0);
      const Tensor<T>& B = vin(1);
      const int nn = n.val.dim(0);
      const size_t inner = A.numel() / static_cast<size_t>(nn);
      for (int i = 0; i < nn; ++i) {
        const double dot = static_cast<double>(n.aux[3 * i]);
        const double na = static_cast<double>(n.aux[3 * i + 1]);
        const double nb = static_cast<double>(n.aux[3 * i + 2]);
        if (na < 1e-12 || nb < 1e-12) continue;  // defined as 0, grad 0
        const double gv = static_cast<double>(g[i]);
        const T* pa = A.data.data() + static_cast<size_t>(i) * inner;
        const T* pb = B.data.data() + static_cast<size_t>(i) * inner;
        if (want(0)) {
          T* gi_ = gin(0).data() + static_cast<size_t>(i) * inner;
          const double c1 = 1.0 / (na * nb);
          const double c2 = dot / (na * na * na * nb);
          for (size_t q = 0; q < inner; ++q) {
            gi_[q] += static_cast<T>(
                gv * (c1 * static_cast<double>(pb[q]) -
                      c2 * static_cast<double>(pa[q])));
          }
        }
        if (want(1)) {
          T* gi_ = gin(1).data() + static_cast<size_t>(i) * inner;
          const double c1 = 1.0 / (na * nb);
          const double c2 = dot / (nb * nb * nb * na);
          for (size_t q = 0; q < inner; ++q) {
            gi_[q] += static_cast<T>(
                gv * (c1 * static_cast<double>(pa[q]) -
                      c2 * static_cast<double>(pb[q])));
          }
        }
      }
      break;
    }
    case Op::kSoftmax: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        double dot = 0.0;
        for (size_t i = 0; i < g.size(); ++i) {
          dot += static_cast<double>(g[i]) * static_cast<double>(n.val.data[i]);
        }
        for (size_t i = 0; i < g.size(); ++i) {
          gi[i] += static_cast<T>(static_cast<double>(n.val.data[i]) *
                                  (static_cast<double>(g[i]) - dot));
        }
      }
      break;
    }
    case Op::kBce: {
      if (want(0)) {
        std::vector<T>& gi = gin(0);
        const Tensor<T>& P = vin(0);
        const T lo = kBceLo, hi = T(1) - kBceLo;
        for (size_t i = 0; i < g.size(); ++i) {
          T p = P.data[i] < lo ? lo : (P.data[i] > hi ? hi : P.data[i]);
          const T dl = n.s0 == T(1) ? -T(1) / p : T(1) / (T(1) - p);
          gi[i] += g[i] * dl;
        }
      }
      break;
    }
    case Op::kL1: {
      const Tensor<T>& A = vin(0);
      const Tensor<T>& B = vin(1);
      const T gv = g[0] / static_cast<T>(A.numel());
      for (size_t i = 0; i < A.numel(); ++i) {
        const T d = A.data[i] - B.data[i];
        const T s = d > T(0) ? gv : (d < T(0) ? -gv : T(0));
        if (want(0)) gin(0)[i] += s;
        if (want(1)) gin(1)[i] -= s;
      }
      break;
    }
    case Op::kL2: {
      const Tensor<T>& A = vin(0);
      const Tensor<T>& B = vin(1);
      const T gv = T(2) * g[0] / static_cast<T>(A.numel());
      for (size_t i = 0; i < A.numel(); ++i) {
        const T d = gv * (A.data[i] - B.data[i]);
        if (want(0)) gin(0)[i] += d;
        if (want(1)) gin(1)[i] -= d;
      }
      break;
    }
    case Op::kPowerSpec: {
      if (want(0)) {
        const Tensor<T>& X = vin(0);
        std::vector<T>& gx = gin(0);
        const int nf = n.i0, hop = n.i1;
        const int nbins = nf / 2 + 1;
        const int frames = n.val.dim(1);
        const int nn = n.val.dim(0);
        const int l = static_cast<int>(X.numel() / nn);
        std::vector<T> win(nf);
        const double pi = 3.14159265358979323846264338327950288;
        for (int i = 0; i < nf; ++i) {
          win[i] = static_cast<T>(0.5 * (1.0 - std::cos(2.0 * pi * i / nf)));
        }
        // frames overlap, so scatter-adds into gx are serialized per batch item
        ThreadPool::parallel_for(nn, [&](int64_t in_) {
          std::vector<std::complex<T>> buf(nf);
          for (int t = 0; t < frames; ++t) {
            const size_t base =
                (static_cast<size_t>(in_) * frames + t) * nbins;
            const T* gp = g.data() + base;
            const T* sp = n.aux.data() + base * 2;
            // d|X_f|^2/dx = irfft of g.*X with doubled end bins (see notes)
            for (int f = 0; f < nbins; ++f) {
              T re = sp[2 * f], im = sp[2 * f + 1];
              T scale = (f == 0 || f == nf / 2) ? T(2) : T(1);
              buf[f] = {scale * gp[f] * re, scale * gp[f] * im};
            }
            for (int f = nbins; f < nf; ++f) buf[f] = std::conj(buf[nf - f]);
            dsp::fft(buf.data(), static_cast<size_t>(nf), /*inverse=*/true);
            T* gxp = gx.data() + static_cast<size_t>(in_) * l +
                     static_cast<size_t>(t) * hop;
            for (int i = 0; i < nf; ++i) {
              gxp[i] += win[i] * buf[i].real();
            }
          }
        });
      }
      break;
    }
  }
}

}  // namespace wmlab::tensor
