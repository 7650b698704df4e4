#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "binpick/candidates.hpp"
#include "binpick/rng.hpp"
#include "binpick/tensor.hpp"

namespace binpick {

// Two-stream conv net, one stream for rgb and one for (depth,depth,depth):
//   per stream: conv 3->8 3x3 pad1 + relu + maxpool2  -> 8x16x16
//               conv 8->16 3x3 pad1 + relu + maxpool2 -> 16x8x8
//   concat(32) -> fusion conv 32->32 3x3 pad1 + relu  -> 32x8x8 = 2048
//   fc 2048 -> 64 + relu -> head
// Classifier head: 2 logits (pickable / not). Regressor head: 1 sigmoid.

enum class HeadKind { Classifier, Regressor };

inline const char* to_string(HeadKind h) {
  return h == HeadKind::Classifier ? "classifier" : "regressor";
}

namespace nn_dims {
inline constexpr int kIn = 32;              // input side
inline constexpr int kC1 = 8, kC2 = 16, kCf = 32;
inline constexpr int kS1 = 32, kS2 = 16, kS3 = 8;  // spatial sides
inline constexpr int kFc = 64;
inline constexpr int kFlat = kCf * kS3 * kS3;  // 2048
}  // namespace nn_dims

template <typename T>
struct ModelParams {
  HeadKind head = HeadKind::Classifier;
  std::uint64_t init_seed = 0;

  Tensor<T> conv1a_w, conv1a_b;
  Tensor<T> conv1b_w, conv1b_b;
  Tensor<T> conv2a_w, conv2a_b;
  Tensor<T> conv2b_w, conv2b_b;
  Tensor<T> fusion_w, fusion_b;
  Tensor<T> fc1_w, fc1_b;
  Tensor<T> head_w, head_b;

  int out_dim() const { return head == HeadKind::Classifier ? 2 : 1; }

  // Tensors in declaration order; this order is the weight-file order.
  template <typename F>
  void for_each(F f) {
    f("conv1a_w", conv1a_w); f("conv1a_b", conv1a_b);
    f("conv1b_w", conv1b_w); f("conv1b_b", conv1b_b);
    f("conv2a_w", conv2a_w); f("conv2a_b", conv2a_b);
    f("conv2b_w", conv2b_w); f("conv2b_b", conv2b_b);
    f("fusion_w", fusion_w); f("fusion_b", fusion_b);
    f("fc1_w", fc1_w); f("fc1_b", fc1_b);
    f("head_w", head_w); f("head_b", head_b);
  }
  template <typename F>
  void for_each(F f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const char* n, Tensor<T>& t) { f(n, const_cast<const Tensor<T>&>(t)); });
  }
};

template <typename T>
ModelParams<T> zero_params(HeadKind head) {
  using namespace nn_dims;
  ModelParams<T> p;
  p.head = head;
  const std::size_t out = static_cast<std::size_t>(p.out_dim());
  p.conv1a_w = Tensor<T>({kC1, 3, 3, 3}); p.conv1a_b = Tensor<T>({kC1});
  p.conv1b_w = Tensor<T>({kC1, 3, 3, 3}); p.conv1b_b = Tensor<T>({kC1});
  p.conv2a_w = Tensor<T>({kC2, kC1, 3, 3}); p.conv2a_b = Tensor<T>({kC2});
  p.conv2b_w = Tensor<T>({kC2, kC1, 3, 3}); p.conv2b_b = Tensor<T>({kC2});
  p.fusion_w = Tensor<T>({kCf, kCf, 3, 3}); p.fusion_b = Tensor<T>({kCf});
  p.fc1_w = Tensor<T>({kFc, kFlat}); p.fc1_b = Tensor<T>({kFc});
  p.head_w = Tensor<T>({out, kFc}); p.head_b = Tensor<T>({out});
  return p;
}

// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
template <typename T>
ModelParams<T> init_params(HeadKind head, std::uint64_t seed) {
  ModelParams<T> p = zero_params<T>(head);
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "init"));
  p.for_each([&](const char* name, Tensor<T>& t) {
    const std::string n(name);
    if (n.size() >= 2 && n.substr(n.size() - 2) == "_b") return;  // biases stay 0
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < t.shape.size(); ++i) fan_in *= t.shape[i];
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
  });
  return p;
}

// Depth normalization at the model boundary: objects become positive heights
// in box-depth units; rgb is already in [0,1].
struct DepthNorm {
  double floor_depth = kFloorDepth;
  double box_depth = 0.15;
};

// Model input layout: 4 channel planes of 32x32 per sample (0..2 rgb,
// 3 normalized depth). The depth stream is logically (d,d,d); conv1b runs on
// the single plane with its three kernel slices pre-summed, which computes
// the same function with a third of the work.
inline constexpr std::size_t kInputFloats = 4 * kPatchSize * kPatchSize;

template <typename T>
void patch_to_input(const Patch& p, const DepthNorm& dn, T* dst) {
  constexpr int hw = kPatchSize * kPatchSize;
  for (int i = 0; i < 3 * hw; ++i) dst[i] = static_cast<T>(p.rgb[i]);
  const double inv = 1.0 / dn.box_depth;
  for (int i = 0; i < hw; ++i)
    dst[3 * hw + i] = static_cast<T>((dn.floor_depth - p.depth[i]) * inv);
}

// ---------------------------------------------------------------------------
// Batched forward / backward machinery. Activations are stored channel-major:
// plane ch of a buffer holds all samples' maps contiguously, i.e.
// buf[ch * (n*side*side) + s*side*side + y*side + x].

namespace detail {

// im2col for 3x3 pad-1 convs over channel-major batches.
// col has C*9 rows of n*side*side columns. Each (c,dy,dx) block is one
// shifted bulk copy of the sample plane followed by edge-column fixups.
template <typename T>
void im2col_3x3(const T* in, std::size_t n, int C, int side, T* col) {
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  const std::size_t ncols = n * plane;
  for (int c = 0; c < C; ++c) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        T* dst = col + (static_cast<std::size_t>(c) * 9 + (dy + 1) * 3 + (dx + 1)) * ncols;
        const T* src = in + static_cast<std::size_t>(c) * ncols;
        const int y0 = dy < 0 ? 1 : 0;
        const int y1 = dy > 0 ? side - 1 : side;
        const std::size_t span = static_cast<std::size_t>(y1 - y0) * side;
        for (std::size_t s = 0; s < n; ++s) {
          const T* sp = src + s * plane;
          T* dp = dst + s * plane;
          if (y0 == 1) std::fill(dp, dp + side, T{});
          if (y1 == side - 1) std::fill(dp + span + (y0 ? side : 0), dp + plane, T{});
          T* d = dp + static_cast<std::size_t>(y0) * side;
          const T* sr = sp + static_cast<std::size_t>(y0 + dy) * side;
          if (dx == 0) {
            std::copy(sr, sr + span, d);
          } else if (dx < 0) {
            std::copy(sr, sr + span - 1, d + 1);
            for (int y = y0; y < y1; ++y) dp[static_cast<std::size_t>(y) * side] = T{};
          } else {
            std::copy(sr + 1, sr + span, d);
            for (int y = y0; y < y1; ++y)
              dp[static_cast<std::size_t>(y) * side + side - 1] = T{};
          }
        }
      }
    }
  }
}

// Transposed scatter of im2col: accumulates col gradients back into dX.
// The dx=0 taps collapse to one contiguous span add per sample; shifted taps
// add per-row valid sub-spans (edge columns fall into the zero pad).
template <typename T>
void col2im_3x3(const T* col, std::size_t n, int C, int side, T* dx) {
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  const std::size_t ncols = n * plane;
  std::fill(dx, dx + static_cast<std::size_t>(C) * ncols, T{});
  for (int c = 0; c < C; ++c) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx_ = -1; dx_ <= 1; ++dx_) {
        const T* src = col + (static_cast<std::size_t>(c) * 9 + (dy + 1) * 3 + (dx_ + 1)) * ncols;
        T* dst = dx + static_cast<std::size_t>(c) * ncols;
        const int y0 = dy < 0 ? 1 : 0;            // valid col rows
        const int y1 = dy > 0 ? side - 1 : side;
        for (std::size_t s = 0; s < n; ++s) {
          const T* sp = src + s * plane + static_cast<std::size_t>(y0) * side;
          T* dp = dst + s * plane + static_cast<std::size_t>(y0 + dy) * side;
          if (dx_ == 0) {
            const std::size_t span = static_cast<std::size_t>(y1 - y0) * side;
            for (std::size_t i = 0; i < span; ++i) dp[i] += sp[i];
          } else if (dx_ < 0) {
            for (int y = y0; y < y1; ++y) {
              const T* srow = sp + static_cast<std::size_t>(y - y0) * side;
              T* drow = dp + static_cast<std::size_t>(y - y0) * side;
              for (int x = 1; x < side; ++x) drow[x - 1] += srow[x];
            }
          } else {
            for (int y = y0; y < y1; ++y) {
              const T* srow = sp + static_cast<std::size_t>(y - y0) * side;
              T* drow = dp + static_cast<std::size_t>(y - y0) * side;
              for (int x = 0; x < side - 1; ++x) drow[x + 1] += srow[x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void add_bias_relu(T* y, const T* b, int M, std::size_t ncols) {
  for (int m = 0; m < M; ++m) {
    const T bias = b[m];
    T* row = y + static_cast<std::size_t>(m) * ncols;
    for (std::size_t i = 0; i < ncols; ++i) {
      const T v = row[i] + bias;
      row[i] = v > T{} ? v : T{};
    }
  }
}

// 2x2 stride-2 max pool; records the argmax corner (0..3) for backward.
// Branchless select: random activations would mispredict half the branches.
template <typename T>
void maxpool2(const T* in, std::size_t n, int C, int side, T* out,
              std::uint8_t* idx) {
  const int oside = side / 2;
  const std::size_t iplane = static_cast<std::size_t>(side) * side;
  const std::size_t oplane = static_cast<std::size_t>(oside) * oside;
  for (int c = 0; c < C; ++c) {
    for (std::size_t s = 0; s < n; ++s) {
      const T* ip = in + (static_cast<std::size_t>(c) * n + s) * iplane;
      T* op = out + (static_cast<std::size_t>(c) * n + s) * oplane;
      std::uint8_t* xp = idx + (static_cast<std::size_t>(c) * n + s) * oplane;
      for (int y = 0; y < oside; ++y) {
        const T* r0 = ip + static_cast<std::size_t>(2 * y) * side;
        const T* r1 = r0 + side;
        for (int x = 0; x < oside; ++x) {
          const T v0 = r0[2 * x], v1 = r0[2 * x + 1];
          const T v2 = r1[2 * x], v3 = r1[2 * x + 1];
          const bool t01 = v1 > v0;
          const bool t23 = v3 > v2;
          const T m01 = t01 ? v1 : v0;
          const T m23 = t23 ? v3 : v2;
          const bool th = m23 > m01;
          op[y * oside + x] = th ? m23 : m01;
          xp[y * oside + x] = static_cast<std::uint8_t>(
              th ? (2 + (t23 ? 1 : 0)) : (t01 ? 1 : 0));
        }
      }
    }
  }
}

// Max pool without argmax recording, for inference.
template <typename T>
void maxpool2_fast(const T* in, std::size_t n, int C, int side, T* out) {
  const int oside = side / 2;
  const std::size_t iplane = static_cast<std::size_t>(side) * side;
  const std::size_t oplane = static_cast<std::size_t>(oside) * oside;
  for (int c = 0; c < C; ++c) {
    for (std::size_t s = 0; s < n; ++s) {
      const T* ip = in + (static_cast<std::size_t>(c) * n + s) * iplane;
      T* op = out + (static_cast<std::size_t>(c) * n + s) * oplane;
      for (int y = 0; y < oside; ++y) {
        const T* r0 = ip + static_cast<std::size_t>(2 * y) * side;
        const T* r1 = r0 + side;
        T* orow = op + static_cast<std::size_t>(y) * oside;
#if defined(__AVX512F__)
        if constexpr (std::is_same_v<T, float>) {
          int x = 0;
          for (; x + 16 <= oside; x += 16) {
            const __m512 a0 = _mm512_loadu_ps(r0 + 2 * x);
            const __m512 a1 = _mm512_loadu_ps(r0 + 2 * x + 16);
            const __m512 b0 = _mm512_loadu_ps(r1 + 2 * x);
            const __m512 b1 = _mm512_loadu_ps(r1 + 2 * x + 16);
            const __m512 v0 = _mm512_max_ps(a0, b0);
            const __m512 v1 = _mm512_max_ps(a1, b1);
            const __m512i ev = _mm512_setr_epi32(0, 2, 4, 6, 8, 10, 12, 14, 16,
                                                 18, 20, 22, 24, 26, 28, 30);
            const __m512i od = _mm512_setr_epi32(1, 3, 5, 7, 9, 11, 13, 15, 17,
                                                 19, 21, 23, 25, 27, 29, 31);
            const __m512 e = _mm512_permutex2var_ps(v0, ev, v1);
            const __m512 o = _mm512_permutex2var_ps(v0, od, v1);
            _mm512_storeu_ps(orow + x, _mm512_max_ps(e, o));
          }
          for (; x < oside; ++x) {
            const T m0 = std::max(r0[2 * x], r0[2 * x + 1]);
            const T m1 = std::max(r1[2 * x], r1[2 * x + 1]);
            orow[x] = std::max(m0, m1);
          }
          continue;
        }
#endif
        for (int x = 0; x < oside; ++x) {
          const T m0 = std::max(r0[2 * x], r0[2 * x + 1]);
          const T m1 = std::max(r1[2 * x], r1[2 * x + 1]);
          orow[x] = std::max(m0, m1);
        }
      }
    }
  }
}

// Pool backward with the relu mask fused in: pool windows are disjoint, so
// each input cell receives at most one contribution.
template <typename T>
void maxpool2_back_relu(const T* dout, const std::uint8_t* idx, const T* act,
                        std::size_t n, int C, int side, T* din) {
  const int oside = side / 2;
  const std::size_t iplane = static_cast<std::size_t>(side) * side;
  const std::size_t oplane = static_cast<std::size_t>(oside) * oside;
  std::fill(din, din + static_cast<std::size_t>(C) * n * iplane, T{});
  for (int c = 0; c < C; ++c) {
    for (std::size_t s = 0; s < n; ++s) {
      const T* op = dout + (static_cast<std::size_t>(c) * n + s) * oplane;
      const std::uint8_t* xp = idx + (static_cast<std::size_t>(c) * n + s) * oplane;
      const T* ap = act + (static_cast<std::size_t>(c) * n + s) * iplane;
      T* ip = din + (static_cast<std::size_t>(c) * n + s) * iplane;
      for (int y = 0; y < oside; ++y) {
        for (int x = 0; x < oside; ++x) {
          const std::uint8_t bi = xp[y * oside + x];
          const std::size_t t =
              static_cast<std::size_t>(2 * y + bi / 2) * side + 2 * x + bi % 2;
          if (ap[t] > T{}) ip[t] = op[y * oside + x];
        }
      }
    }
  }
}

template <typename T>
void relu_mask_grad(T* grad, const T* act, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(act[i] > T{})) grad[i] = T{};
}

}  // namespace detail

// Reusable buffers for batched forward/backward.
template <typename T>
struct Workspace {
  std::size_t cap = 0;  // max batch the buffers are sized for
  std::vector<T> in;                 // [6][n][32][32]
  std::vector<T> col1a, col1b;       // [27][n*1024]
  std::vector<T> y1a, y1b;           // [8][n*1024]
  std::vector<T> p1a, p1b;           // [8][n*256]
  std::vector<std::uint8_t> m1a, m1b;
  std::vector<T> col2a, col2b;       // [72][n*256]
  std::vector<T> y2a, y2b;           // [16][n*256]
  std::vector<T> p2a, p2b;           // [16][n*64]
  std::vector<std::uint8_t> m2a, m2b;
  std::vector<T> fused;              // [32][n*64]
  std::vector<T> col3;               // [288][n*64]
  std::vector<T> y3;                 // [32][n*64]
  std::vector<T> x4;                 // [n][2048]
  std::vector<T> h1;                 // [n][64]
  std::vector<T> out;                // [n][out_dim]
  // backward scratch
  std::vector<T> dout, dh1, dx4, dy3, dcol3, dfused;
  std::vector<T> dp2a, dp2b, dy2a, dy2b, dcol2a, dcol2b, dp1a, dp1b, dy1a, dy1b;
  std::vector<T> wt;                 // transposed weight scratch
  std::vector<T> dout_t, dh1_t;      // transposed activations for dW gemms

  void ensure(std::size_t n, int out_dim) {
    using namespace nn_dims;
    if (n <= cap && !in.empty()) return;
    cap = n;
    const std::size_t n1 = n * kS1 * kS1, n2 = n * kS2 * kS2, n3 = n * kS3 * kS3;
    in.resize(4 * n1);
    col1a.resize(27 * n1); col1b.resize(9 * n1);
    y1a.resize(kC1 * n1); y1b.resize(kC1 * n1);
    p1a.resize(kC1 * n2); p1b.resize(kC1 * n2);
    m1a.resize(kC1 * n2); m1b.resize(kC1 * n2);
    col2a.resize(72 * n2); col2b.resize(72 * n2);
    y2a.resize(kC2 * n2); y2b.resize(kC2 * n2);
    p2a.resize(kC2 * n3); p2b.resize(kC2 * n3);
    m2a.resize(kC2 * n3); m2b.resize(kC2 * n3);
    fused.resize(kCf * n3);
    col3.resize(288 * n3);
    y3.resize(kCf * n3);
    x4.resize(n * kFlat);
    h1.resize(n * kFc);
    out.resize(n * 2);
    dout.resize(n * 2);
    dh1.resize(n * kFc);
    dx4.resize(n * kFlat);
    dy3.resize(kCf * n3);
    dcol3.resize(288 * n3);
    dfused.resize(kCf * n3);
    dp2a.resize(kC2 * n3); dp2b.resize(kC2 * n3);
    dy2a.resize(kC2 * n2); dy2b.resize(kC2 * n2);
    dcol2a.resize(72 * n2); dcol2b.resize(72 * n2);
    dp1a.resize(kC1 * n2); dp1b.resize(kC1 * n2);
    dy1a.resize(kC1 * n1); dy1b.resize(kC1 * n1);
    wt.resize(288 * 32);
    dout_t.resize(2 * n);
    dh1_t.resize(kFc * n);
    (void)out_dim;
  }
};

// Forward pass over a batch already packed into ws.in (channel-major).
// Leaves raw head outputs (logits / pre-sigmoid) in ws.out, n*out_dim.
// 'training' keeps pool argmaxes and col buffers valid for backward_packed.
template <typename T>
void forward_packed(const ModelParams<T>& params, std::size_t n, Workspace<T>& ws,
                    bool training = true) {
  using namespace nn_dims;
  if (n == 0) throw std::invalid_argument("forward: empty batch");
  {
    bool ok = true;
    const std::size_t cnt = 4 * n * kS1 * kS1;
    for (std::size_t i = 0; i < cnt; ++i)
      ok &= (std::abs(ws.in[i]) <= T(1e30));  // false for nan/inf
    if (!ok) throw std::invalid_argument("forward: non-finite input");
  }
  const std::size_t n1 = n * kS1 * kS1, n2 = n * kS2 * kS2, n3 = n * kS3 * kS3;

  auto pool = [&](const T* y, int C, int side, T* p, std::uint8_t* m) {
    if (training)
      detail::maxpool2(y, n, C, side, p, m);
    else
      detail::maxpool2_fast(y, n, C, side, p);
  };

  // stream A: rgb, 3 input channels
  detail::im2col_3x3(ws.in.data(), n, 3, kS1, ws.col1a.data());
  gemm_nn(ws.y1a.data(), params.conv1a_w.ptr(), ws.col1a.data(), kC1, 27, n1,
          false);
  detail::add_bias_relu(ws.y1a.data(), params.conv1a_b.ptr(), kC1, n1);
  pool(ws.y1a.data(), kC1, kS1, ws.p1a.data(), ws.m1a.data());

  // stream B: (d,d,d) collapsed to one plane with kernel slices pre-summed
  T w1b_sum[kC1 * 9];
  for (int o = 0; o < kC1; ++o)
    for (int t = 0; t < 9; ++t)
      w1b_sum[o * 9 + t] = params.conv1b_w.data[o * 27 + t] +
                           params.conv1b_w.data[o * 27 + 9 + t] +
                           params.conv1b_w.data[o * 27 + 18 + t];
  detail::im2col_3x3(ws.in.data() + 3 * n1, n, 1, kS1, ws.col1b.data());
  gemm_nn(ws.y1b.data(), w1b_sum, ws.col1b.data(), kC1, 9, n1, false);
  detail::add_bias_relu(ws.y1b.data(), params.conv1b_b.ptr(), kC1, n1);
  pool(ws.y1b.data(), kC1, kS1, ws.p1b.data(), ws.m1b.data());

  auto conv2 = [&](std::vector<T>& p1, std::vector<T>& col2, std::vector<T>& y2,
                   std::vector<T>& p2, std::vector<std::uint8_t>& m2,
                   const Tensor<T>& w2, const Tensor<T>& b2) {
    detail::im2col_3x3(p1.data(), n, kC1, kS2, col2.data());
    gemm_nn(y2.data(), w2.ptr(), col2.data(), kC2, 72, n2, false);
    detail::add_bias_relu(y2.data(), b2.ptr(), kC2, n2);
    pool(y2.data(), kC2, kS2, p2.data(), m2.data());
  };
  conv2(ws.p1a, ws.col2a, ws.y2a, ws.p2a, ws.m2a, params.conv2a_w, params.conv2a_b);
  conv2(ws.p1b, ws.col2b, ws.y2b, ws.p2b, ws.m2b, params.conv2b_w, params.conv2b_b);

  std::copy(ws.p2a.begin(), ws.p2a.begin() + kC2 * n3, ws.fused.begin());
  std::copy(ws.p2b.begin(), ws.p2b.begin() + kC2 * n3, ws.fused.begin() + kC2 * n3);

  detail::im2col_3x3(ws.fused.data(), n, kCf, kS3, ws.col3.data());
  gemm_nn(ws.y3.data(), params.fusion_w.ptr(), ws.col3.data(), kCf, 288, n3,
          false);
  detail::add_bias_relu(ws.y3.data(), params.fusion_b.ptr(), kCf, n3);

  // repack channel-major -> sample-major for the fully connected part
  const std::size_t plane3 = static_cast<std::size_t>(kS3) * kS3;
  for (int c = 0; c < kCf; ++c)
    for (std::size_t s = 0; s < n; ++s)
      std::copy(ws.y3.begin() + (static_cast<std::size_t>(c) * n + s) * plane3,
                ws.y3.begin() + (static_cast<std::size_t>(c) * n + s + 1) * plane3,
                ws.x4.begin() + s * kFlat + static_cast<std::size_t>(c) * plane3);

  std::fill(ws.h1.begin(), ws.h1.begin() + n * kFc, T{});
  gemm_nt(ws.h1.data(), ws.x4.data(), params.fc1_w.ptr(), n, kFlat, kFc);
  for (std::size_t s = 0; s < n; ++s) {
    T* row = ws.h1.data() + s * kFc;
    for (int m = 0; m < kFc; ++m) {
      const T v = row[m] + params.fc1_b.data[m];
      row[m] = v > T{} ? v : T{};
    }
  }

  const int od = params.out_dim();
  std::fill(ws.out.begin(), ws.out.begin() + n * od, T{});
  gemm_nt(ws.out.data(), ws.h1.data(), params.head_w.ptr(), n, kFc, od);
  for (std::size_t s = 0; s < n; ++s)
    for (int o = 0; o < od; ++o) ws.out[s * od + o] += params.head_b.data[o];
}

// Gradients of up-stream loss already written to ws.dout (n*out_dim).
// Accumulates parameter gradients into 'grads' (same shapes as params).
template <typename T>
void backward_packed(const ModelParams<T>& params, std::size_t n,
                     Workspace<T>& ws, ModelParams<T>& grads) {
  using namespace nn_dims;
  const std::size_t n1 = n * kS1 * kS1, n2 = n * kS2 * kS2, n3 = n * kS3 * kS3;
  const int od = params.out_dim();

  // head: dW = dout^T * h1, via a small transpose so the fast gemm applies
  for (std::size_t s = 0; s < n; ++s)
    for (int o = 0; o < od; ++o) ws.dout_t[o * n + s] = ws.dout[s * od + o];
  gemm_nn(grads.head_w.ptr(), ws.dout_t.data(), ws.h1.data(), od, n, kFc);
  for (std::size_t s = 0; s < n; ++s)
    for (int o = 0; o < od; ++o) grads.head_b.data[o] += ws.dout[s * od + o];
  gemm_nn(ws.dh1.data(), ws.dout.data(), params.head_w.ptr(), n, od, kFc,
          false);
  detail::relu_mask_grad(ws.dh1.data(), ws.h1.data(), n * kFc);

  // fc1
  for (std::size_t s = 0; s < n; ++s)
    for (int m = 0; m < kFc; ++m) ws.dh1_t[static_cast<std::size_t>(m) * n + s] =
        ws.dh1[s * kFc + m];
  gemm_nn(grads.fc1_w.ptr(), ws.dh1_t.data(), ws.x4.data(), kFc, n, kFlat);
  for (std::size_t s = 0; s < n; ++s)
    for (int m = 0; m < kFc; ++m) grads.fc1_b.data[m] += ws.dh1[s * kFc + m];
  gemm_nn(ws.dx4.data(), ws.dh1.data(), params.fc1_w.ptr(), n, kFc, kFlat,
          false);

  // unpack sample-major -> channel-major
  const std::size_t plane3 = static_cast<std::size_t>(kS3) * kS3;
  for (int c = 0; c < kCf; ++c)
    for (std::size_t s = 0; s < n; ++s)
      std::copy(ws.dx4.begin() + s * kFlat + static_cast<std::size_t>(c) * plane3,
                ws.dx4.begin() + s * kFlat + static_cast<std::size_t>(c + 1) * plane3,
                ws.dy3.begin() + (static_cast<std::size_t>(c) * n + s) * plane3);
  detail::relu_mask_grad(ws.dy3.data(), ws.y3.data(), kCf * n3);

  // fusion conv
  gemm_nt(grads.fusion_w.ptr(), ws.dy3.data(), ws.col3.data(), kCf, n3, 288);
  for (int m = 0; m < kCf; ++m) {
    T acc{};
    const T* row = ws.dy3.data() + static_cast<std::size_t>(m) * n3;
    for (std::size_t i = 0; i < n3; ++i) acc += row[i];
    grads.fusion_b.data[m] += acc;
  }
  for (int k = 0; k < 288; ++k)
    for (int m = 0; m < kCf; ++m)
      ws.wt[static_cast<std::size_t>(k) * kCf + m] =
          params.fusion_w.data[static_cast<std::size_t>(m) * 288 + k];
  gemm_nn(ws.dcol3.data(), ws.wt.data(), ws.dy3.data(), 288, kCf, n3, false);
  detail::col2im_3x3(ws.dcol3.data(), n, kCf, kS3, ws.dfused.data());

  std::copy(ws.dfused.begin(), ws.dfused.begin() + kC2 * n3, ws.dp2a.begin());
  std::copy(ws.dfused.begin() + kC2 * n3, ws.dfused.begin() + 2 * kC2 * n3,
            ws.dp2b.begin());

  auto stream_back = [&](std::vector<T>& dp2, std::vector<std::uint8_t>& m2,
                         std::vector<T>& y2, std::vector<T>& dy2,
                         std::vector<T>& col2, std::vector<T>& dcol2,
                         std::vector<T>& dp1, std::vector<std::uint8_t>& m1,
                         std::vector<T>& y1, std::vector<T>& dy1,
                         const Tensor<T>& w2, Tensor<T>& gw2, Tensor<T>& gb2,
                         Tensor<T>& gb1) {
    detail::maxpool2_back_relu(dp2.data(), m2.data(), y2.data(), n, kC2, kS2,
                               dy2.data());
    gemm_nt(gw2.ptr(), dy2.data(), col2.data(), kC2, n2, 72);
    for (int m = 0; m < kC2; ++m) {
      T acc{};
      const T* row = dy2.data() + static_cast<std::size_t>(m) * n2;
      for (std::size_t i = 0; i < n2; ++i) acc += row[i];
      gb2.data[m] += acc;
    }
    for (int k = 0; k < 72; ++k)
      for (int m = 0; m < kC2; ++m)
        ws.wt[static_cast<std::size_t>(k) * kC2 + m] =
            w2.data[static_cast<std::size_t>(m) * 72 + k];
    gemm_nn(dcol2.data(), ws.wt.data(), dy2.data(), 72, kC2, n2, false);
    detail::col2im_3x3(dcol2.data(), n, kC1, kS2, dp1.data());

    detail::maxpool2_back_relu(dp1.data(), m1.data(), y1.data(), n, kC1, kS1,
                               dy1.data());
    for (int m = 0; m < kC1; ++m) {
      T acc{};
      const T* row = dy1.data() + static_cast<std::size_t>(m) * n1;
      for (std::size_t i = 0; i < n1; ++i) acc += row[i];
      gb1.data[m] += acc;
    }
    // input gradients below conv1 are never needed
  };
  stream_back(ws.dp2a, ws.m2a, ws.y2a, ws.dy2a, ws.col2a, ws.dcol2a, ws.dp1a,
              ws.m1a, ws.y1a, ws.dy1a, params.conv2a_w, grads.conv2a_w,
              grads.conv2a_b, grads.conv1a_b);
  gemm_nt(grads.conv1a_w.ptr(), ws.dy1a.data(), ws.col1a.data(), kC1, n1, 27);

  stream_back(ws.dp2b, ws.m2b, ws.y2b, ws.dy2b, ws.col2b, ws.dcol2b, ws.dp1b,
              ws.m1b, ws.y1b, ws.dy1b, params.conv2b_w, grads.conv2b_w,
              grads.conv2b_b, grads.conv1b_b);
  // conv1b ran on the summed-kernel single plane; each of the three slices
  // sees the same gradient
  T gw1b_sum[kC1 * 9] = {};
  gemm_nt(gw1b_sum, ws.dy1b.data(), ws.col1b.data(), kC1, n1, 9);
  for (int o = 0; o < kC1; ++o)
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 9; ++t)
        grads.conv1b_w.data[o * 27 + c * 9 + t] += gw1b_sum[o * 9 + t];
}

// ---------------------------------------------------------------------------
// Losses

inline std::array<double, 2> softmax2(double z0, double z1) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

inline double cross_entropy2(double z0, double z1, int label) {
  const auto p = softmax2(z0, z1);
  return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double mse_loss(double score, double target) {
  const double d = score - target;
  return d * d;
}

// ---------------------------------------------------------------------------
// Convenience single/batch inference

template <typename T>
void pack_batch(std::span<const Patch> patches, const DepthNorm& dn,
                std::size_t i0, std::size_t n, Workspace<T>& ws) {
  using namespace nn_dims;
  ws.ensure(n, 2);
  const std::size_t plane = static_cast<std::size_t>(kS1) * kS1;
  std::vector<T> one(kInputFloats);
  for (std::size_t s = 0; s < n; ++s) {
    patch_to_input(patches[i0 + s], dn, one.data());
    for (int c = 0; c < 4; ++c)
      std::copy(one.begin() + c * plane, one.begin() + (c + 1) * plane,
                ws.in.begin() + (static_cast<std::size_t>(c) * n + s) * plane);
  }
}

inline constexpr std::size_t kMaxBatch = 64;

// Raw head outputs for a span of patches; out gets n*out_dim doubles.
template <typename T>
void forward_batch(const ModelParams<T>& params, std::span<const Patch> patches,
                   const DepthNorm& dn, Workspace<T>& ws, double* out) {
  const int od = params.out_dim();
  std::size_t done = 0;
  while (done < patches.size()) {
    const std::size_t n = std::min(kMaxBatch, patches.size() - done);
    pack_batch(patches, dn, done, n, ws);
    forward_packed(params, n, ws, /*training=*/false);
    for (std::size_t i = 0; i < n * static_cast<std::size_t>(od); ++i)
      out[done * od + i] = static_cast<double>(ws.out[i]);
    done += n;
  }
}

template <typename T>
std::array<double, 2> forward_logits(const ModelParams<T>& params,
                                     const Patch& patch, const DepthNorm& dn) {
  if (params.head != HeadKind::Classifier)
    throw std::logic_error("forward_logits: not a classifier");
  Workspace<T> ws;
  double out[2];
  forward_batch(params, std::span<const Patch>(&patch, 1), dn, ws, out);
  return {out[0], out[1]};
}

template <typename T>
double forward_score(const ModelParams<T>& params, const Patch& patch,
                     const DepthNorm& dn) {
  if (params.head != HeadKind::Regressor)
    throw std::logic_error("forward_score: not a regressor");
  Workspace<T> ws;
  double out[1];
  forward_batch(params, std::span<const Patch>(&patch, 1), dn, ws, out);
  return sigmoid(out[0]);
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, Adam };
enum class LossKind { CrossEntropy, Mse };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Sgd;
  LossKind loss = LossKind::CrossEntropy;
  double learning_rate = 0.001;
  double momentum = 0.9;       // SGD only
  double weight_decay = 1e-5;  // SGD only
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // Adam only
  int epochs = 100;
  int batch_size = 64;
};

template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> velocity;       // SGD
  std::vector<Tensor<T>> m, v;           // Adam
  long step = 0;

  template <typename P>
  static OptimizerState make(const ModelParams<P>& params, OptimizerKind kind) {
    OptimizerState st;
    params.for_each([&](const char*, const Tensor<P>& t) {
      Tensor<T> z(t.shape);
      if (kind == OptimizerKind::Sgd) {
        st.velocity.push_back(z);
      } else {
        st.m.push_back(z);
        st.v.push_back(z);
      }
    });
    return st;
  }
};

template <typename T>
std::vector<Tensor<T>*> tensor_ptrs(ModelParams<T>& p) {
  std::vector<Tensor<T>*> out;
  p.for_each([&](const char*, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> tensor_ptrs(const ModelParams<T>& p) {
  std::vector<const Tensor<T>*> out;
  p.for_each([&](const char*, const Tensor<T>& t) { out.push_back(&t); });
  return out;
}

// v <- momentum*v + (g + wd*w); w <- w - lr*v
template <typename T>
void sgd_step(ModelParams<T>& params, const ModelParams<T>& grads,
              OptimizerState<T>& state, const TrainConfig& cfg) {
  const T lr = static_cast<T>(cfg.learning_rate);
  const T mu = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  auto ws = tensor_ptrs(params);
  auto gs = tensor_ptrs(grads);
  for (std::size_t ti = 0; ti < ws.size(); ++ti) {
    Tensor<T>& w = *ws[ti];
    const Tensor<T>& g = *gs[ti];
    Tensor<T>& vel = state.velocity[ti];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gv = g.data[i] + wd * w.data[i];
      vel.data[i] = mu * vel.data[i] + gv;
      w.data[i] -= lr * vel.data[i];
    }
  }
}

// Standard bias-corrected Adam.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads,
               OptimizerState<T>& state, const TrainConfig& cfg) {
  state.step++;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto ws = tensor_ptrs(params);
  auto gs = tensor_ptrs(grads);
  for (std::size_t ti = 0; ti < ws.size(); ++ti) {
    Tensor<T>& w = *ws[ti];
    const Tensor<T>& g = *gs[ti];
    Tensor<T>& m = state.m[ti];
    Tensor<T>& v = state.v[ti];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gv = static_cast<double>(g.data[i]);
      const double mi = b1 * static_cast<double>(m.data[i]) + (1 - b1) * gv;
      const double vi = b2 * static_cast<double>(v.data[i]) + (1 - b2) * gv * gv;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double mh = mi / bc1, vh = vi / bc2;
      w.data[i] -= static_cast<T>(cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Batched loss + gradient-of-loss at the head

// Computes mean loss over the batch and writes d(loss)/d(raw out) into
// ws.dout. Targets: class index for CrossEntropy, value in [0,1] for Mse.
template <typename T>
double head_loss_grad(const ModelParams<T>& params, std::size_t n,
                      Workspace<T>& ws, const float* targets, LossKind loss,
                      bool want_grad) {
  double total = 0;
  const double invn = 1.0 / static_cast<double>(n);
  if (loss == LossKind::CrossEntropy) {
    for (std::size_t s = 0; s < n; ++s) {
      const double z0 = ws.out[s * 2], z1 = ws.out[s * 2 + 1];
      const int label = static_cast<int>(targets[s]);
      total += cross_entropy2(z0, z1, label);
      if (want_grad) {
        const auto p = softmax2(z0, z1);
        ws.dout[s * 2] = static_cast<T>((p[0] - (label == 0 ? 1 : 0)) * invn);
        ws.dout[s * 2 + 1] = static_cast<T>((p[1] - (label == 1 ? 1 : 0)) * invn);
      }
    }
  } else {
    for (std::size_t s = 0; s < n; ++s) {
      const double z = ws.out[s];
      const double sc = sigmoid(z);
      const double t = targets[s];
      total += mse_loss(sc, t);
      if (want_grad)
        ws.dout[s] = static_cast<T>(2.0 * (sc - t) * sc * (1.0 - sc) * invn);
    }
  }
  return total * invn;
}

// Mean-batch-loss gradients w.r.t. every parameter.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params,
                        std::span<const Patch> patches, const float* targets,
                        const DepthNorm& dn, LossKind loss, Workspace<T>& ws,
                        double* loss_out = nullptr) {
  if (patches.empty()) throw std::invalid_argument("backward: empty batch");
  ModelParams<T> grads = zero_params<T>(params.head);
  if (patches.size() > kMaxBatch)
    throw std::invalid_argument("backward: batch too large");
  pack_batch<T>(patches, dn, 0, patches.size(), ws);
  forward_packed(params, patches.size(), ws);
  const double l = head_loss_grad(params, patches.size(), ws, targets, loss, true);
  backward_packed(params, patches.size(), ws, grads);
  if (loss_out) *loss_out = l;
  return grads;
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;  // classifier only
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

template <typename T>
EpochStats evaluate(const ModelParams<T>& params, std::span<const Patch> patches,
                    const float* targets, const DepthNorm& dn, LossKind loss,
                    Workspace<T>& ws) {
  EpochStats st;
  if (patches.empty()) return st;
  std::size_t correct = 0, done = 0;
  double total = 0;
  while (done < patches.size()) {
    const std::size_t n = std::min(kMaxBatch, patches.size() - done);
    pack_batch(patches, dn, done, n, ws);
    forward_packed(params, n, ws, /*training=*/false);
    total += head_loss_grad(params, n, ws, targets + done, loss, false) *
             static_cast<double>(n);
    if (loss == LossKind::CrossEntropy) {
      for (std::size_t s = 0; s < n; ++s) {
        const int pred = ws.out[s * 2 + 1] > ws.out[s * 2] ? 1 : 0;
        if (pred == static_cast<int>(targets[done + s])) ++correct;
      }
    }
    done += n;
  }
  st.val_loss = total / static_cast<double>(patches.size());
  st.val_acc = static_cast<double>(correct) / static_cast<double>(patches.size());
  return st;
}

// Shuffled mini-batch epochs; deterministic per seed. Targets are class
// indices (CrossEntropy) or regression values (Mse).
template <typename T>
TrainHistory train(ModelParams<T>& params, std::span<const Patch> train_patches,
                   const std::vector<float>& train_targets,
                   std::span<const Patch> val_patches,
                   const std::vector<float>& val_targets, const TrainConfig& cfg,
                   const DepthNorm& dn, std::uint64_t seed) {
  if (train_patches.size() < 2)
    throw std::invalid_argument("train: need at least 2 samples");
  if (train_patches.size() != train_targets.size())
    throw std::invalid_argument("train: target count mismatch");

  Rng rng(derive_seed(seed, "train_shuffle"));
  Workspace<T> ws;
  ws.ensure(std::min<std::size_t>(kMaxBatch, train_patches.size()), params.out_dim());
  auto state = OptimizerState<T>::template make<T>(params, cfg.optimizer);

  std::vector<std::size_t> order(train_patches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Patch> batch_p(cfg.batch_size);
  std::vector<float> batch_t(cfg.batch_size);

  TrainHistory hist;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - b0);
      for (std::size_t i = 0; i < n; ++i) {
        batch_p[i] = train_patches[order[b0 + i]];
        batch_t[i] = train_targets[order[b0 + i]];
      }
      double l = 0;
      ModelParams<T> grads =
          backward(params, std::span<const Patch>(batch_p.data(), n),
                   batch_t.data(), dn, cfg.loss, ws, &l);
      loss_sum += l * static_cast<double>(n);
      seen += n;
      if (cfg.optimizer == OptimizerKind::Sgd)
        sgd_step(params, grads, state, cfg);
      else
        adam_step(params, grads, state, cfg);
    }
    EpochStats st = evaluate(params, val_patches, val_targets.data(), dn,
                             cfg.loss, ws);
    st.train_loss = loss_sum / static_cast<double>(seen);
    hist.epochs.push_back(st);
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check (64-bit only).

namespace detail {

// Hash of the relu sign pattern and pool argmaxes after a forward pass.
// Central differences are only a valid derivative oracle while the active
// linear piece of the network stays the same; a perturbation that flips a
// relu or pool winner is rejected by comparing this signature.
template <typename T>
std::uint64_t activation_signature(const Workspace<T>& ws, std::size_t n) {
  using namespace nn_dims;
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  auto mix_signs = [&](const std::vector<T>& v, std::size_t count) {
    std::uint64_t bits = 0;
    int k = 0;
    for (std::size_t i = 0; i < count; ++i) {
      bits = (bits << 1) | (v[i] > T{} ? 1u : 0u);
      if (++k == 64) { mix(bits); bits = 0; k = 0; }
    }
    mix(bits);
  };
  auto mix_bytes = [&](const std::vector<std::uint8_t>& v, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) mix(v[i]);
  };
  const std::size_t n1 = n * kS1 * kS1, n2 = n * kS2 * kS2, n3 = n * kS3 * kS3;
  mix_signs(ws.y1a, kC1 * n1); mix_signs(ws.y1b, kC1 * n1);
  mix_signs(ws.y2a, kC2 * n2); mix_signs(ws.y2b, kC2 * n2);
  mix_signs(ws.y3, kCf * n3);
  mix_signs(ws.h1, n * kFc);
  mix_bytes(ws.m1a, kC1 * n2); mix_bytes(ws.m1b, kC1 * n2);
  mix_bytes(ws.m2a, kC2 * n3); mix_bytes(ws.m2b, kC2 * n3);
  return h;
}

}  // namespace detail

// Central differences, h = 1e-4, over a random subsample of >= 10 parameters
// per tensor (or all of them for small tensors). Samples whose +-h evaluations
// land on a different relu/pool pattern are resampled: the loss is only
// piecewise smooth and finite differences across a kink say nothing about the
// gradient. Returns the worst relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(ModelParams<double>& params,
                         std::span<const Patch> patches, const float* targets,
                         const DepthNorm& dn, LossKind loss, std::uint64_t seed,
                         double inject_error = 0.0) {
  Workspace<double> ws;
  ModelParams<double> grads = backward(params, patches, targets, dn, loss, ws);
  if (inject_error != 0.0) grads.fc1_w.data[0] += inject_error;

  auto batch_loss = [&](std::uint64_t* sig) {
    pack_batch<double>(patches, dn, 0, patches.size(), ws);
    forward_packed(params, patches.size(), ws);
    if (sig) *sig = detail::activation_signature(ws, patches.size());
    return head_loss_grad(params, patches.size(), ws, targets, loss, false);
  };
  std::uint64_t base_sig = 0;
  batch_loss(&base_sig);

  Rng rng(derive_seed(seed, "grad_check"));
  const double h = 1e-4;
  double worst = 0;
  auto gs = tensor_ptrs(grads);
  std::size_t ti = 0;
  params.for_each([&](const char* name, Tensor<double>& t) {
    const Tensor<double>* g = gs[ti];
    const std::size_t want = std::min<std::size_t>(t.size(), 10);
    std::size_t checked = 0, attempts = 0;
    while (checked < want && attempts < want * 50) {
      ++attempts;
      const std::size_t i = rng.uniform_index(t.size());
      const double orig = t.data[i];
      std::uint64_t sp = 0, sm = 0;
      t.data[i] = orig + h;
      const double lp = batch_loss(&sp);
      t.data[i] = orig - h;
      const double lm = batch_loss(&sm);
      t.data[i] = orig;
      if (sp != base_sig || sm != base_sig) continue;  // crossed a kink
      const double numeric = (lp - lm) / (2 * h);
      const double analytic = g->data[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, rel);
      ++checked;
    }
    ++ti;
    (void)name;
  });
  return worst;
}

// ---------------------------------------------------------------------------
// Weight file: [u64 little-endian header length][header JSON][f32le tensors
// in declaration order]. Round-trips bit-exactly.

template <typename T>
void save_weights(const ModelParams<T>& params, const std::string& path) {
  nlohmann::json hdr;
  hdr["format"] = "binpick-weights-v1";
  hdr["head"] = to_string(params.head);
  hdr["init_seed"] = params.init_seed;
  hdr["tensors"] = nlohmann::json::array();
  params.for_each([&](const char* name, const Tensor<T>& t) {
    hdr["tensors"].push_back({{"name", name}, {"shape", t.shape}});
  });
  const std::string hs = hdr.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  const std::uint64_t len = hs.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  params.for_each([&](const char*, const Tensor<T>& t) {
    for (const T v : t.data) {
      const float fv = static_cast<float>(v);
      f.write(reinterpret_cast<const char*>(&fv), sizeof(fv));
    }
  });
  if (!f) throw std::runtime_error("failed writing weights: " + path);
}

template <typename T>
ModelParams<T> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open weights: " + path);
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f || len == 0 || len > (1u << 20))
    throw std::runtime_error("corrupt weight header: " + path);
  std::string hs(len, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("corrupt weight header: " + path);
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("corrupt weight header: " + path);
  }
  if (hdr.value("format", "") != "binpick-weights-v1")
    throw std::runtime_error("corrupt weight header: " + path);

  const std::string head = hdr.at("head").get<std::string>();
  ModelParams<T> p = zero_params<T>(head == "classifier" ? HeadKind::Classifier
                                                         : HeadKind::Regressor);
  p.init_seed = hdr.at("init_seed").get<std::uint64_t>();
  std::size_t idx = 0;
  const auto& tens = hdr.at("tensors");
  p.for_each([&](const char* name, Tensor<T>& t) {
    if (idx >= tens.size()) throw std::runtime_error("corrupt weight header: " + path);
    const auto& jt = tens[idx++];
    if (jt.at("name").get<std::string>() != name ||
        jt.at("shape").get<std::vector<std::size_t>>() != t.shape)
      throw std::runtime_error("weight shape mismatch: " + path);
    for (auto& v : t.data) {
      float fv;
      f.read(reinterpret_cast<char*>(&fv), sizeof(fv));
      v = static_cast<T>(fv);
    }
  });
  if (!f) throw std::runtime_error("truncated weight payload: " + path);
  f.peek();
  if (!f.eof()) throw std::runtime_error("trailing bytes in weight file: " + path);
  return p;
}

}  // namespace binpick
