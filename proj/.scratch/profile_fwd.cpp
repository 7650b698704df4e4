#include <chrono>
#include <cstdio>

#define BINPICK_PROFILE 1
#include "binpick/nn.hpp"

using namespace binpick;
using clk = std::chrono::steady_clock;

static double now() {
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

int main() {
  DepthNorm dn;
  Rng rng(1);
  std::vector<Patch> patches(64);
  for (auto& p : patches) {
    for (auto& v : p.rgb) v = static_cast<float>(rng.uniform01());
    for (auto& v : p.depth) v = static_cast<float>(0.4 + 0.1 * rng.uniform01());
  }
  auto params = init_params<float>(HeadKind::Classifier, 42);
  Workspace<float> ws;
  ws.ensure(64, 2);

  const std::size_t n = 64;
  const int iters = 100;

  // phase timings
  double t_pack = 0, t_im2col = 0, t_gemm = 0, t_bias = 0, t_pool = 0, t_fc = 0, t_fin = 0;

  for (int it = 0; it < iters; ++it) {
    using namespace nn_dims;
    double t0 = now();
    pack_batch(std::span<const Patch>(patches), dn, 0, n, ws);
    t_pack += now() - t0;

    t0 = now();
    for (std::size_t i = 0; i < 6 * n * kS1 * kS1; ++i)
      if (!std::isfinite(static_cast<double>(ws.in[i]))) return 1;
    t_fin += now() - t0;

    const std::size_t n1 = n * kS1 * kS1, n2 = n * kS2 * kS2, n3 = n * kS3 * kS3;
    for (int s = 0; s < 2; ++s) {
      const float* input = ws.in.data() + (s ? 3 * n1 : 0);
      auto& col1 = s ? ws.col1b : ws.col1a;
      auto& y1 = s ? ws.y1b : ws.y1a;
      auto& p1 = s ? ws.p1b : ws.p1a;
      auto& m1 = s ? ws.m1b : ws.m1a;
      auto& col2 = s ? ws.col2b : ws.col2a;
      auto& y2 = s ? ws.y2b : ws.y2a;
      auto& p2 = s ? ws.p2b : ws.p2a;
      auto& m2 = s ? ws.m2b : ws.m2a;
      const auto& w1 = s ? params.conv1b_w : params.conv1a_w;
      const auto& b1 = s ? params.conv1b_b : params.conv1a_b;
      const auto& w2 = s ? params.conv2b_w : params.conv2a_w;
      const auto& b2 = s ? params.conv2b_b : params.conv2a_b;

      t0 = now();
      detail::im2col_3x3(input, n, 3, kS1, col1.data());
      t_im2col += now() - t0;
      t0 = now();
      std::fill(y1.begin(), y1.begin() + kC1 * n1, 0.f);
      gemm_nn(y1.data(), w1.ptr(), col1.data(), kC1, 27, n1);
      t_gemm += now() - t0;
      t0 = now();
      detail::add_bias_relu(y1.data(), b1.ptr(), kC1, n1);
      t_bias += now() - t0;
      t0 = now();
      detail::maxpool2(y1.data(), n, kC1, kS1, p1.data(), m1.data());
      t_pool += now() - t0;
      t0 = now();
      detail::im2col_3x3(p1.data(), n, kC1, kS2, col2.data());
      t_im2col += now() - t0;
      t0 = now();
      std::fill(y2.begin(), y2.begin() + kC2 * n2, 0.f);
      gemm_nn(y2.data(), w2.ptr(), col2.data(), kC2, 72, n2);
      t_gemm += now() - t0;
      t0 = now();
      detail::add_bias_relu(y2.data(), b2.ptr(), kC2, n2);
      t_bias += now() - t0;
      t0 = now();
      detail::maxpool2(y2.data(), n, kC2, kS2, p2.data(), m2.data());
      t_pool += now() - t0;
    }

    std::copy(ws.p2a.begin(), ws.p2a.begin() + nn_dims::kC2 * n3, ws.fused.begin());
    std::copy(ws.p2b.begin(), ws.p2b.begin() + nn_dims::kC2 * n3,
              ws.fused.begin() + nn_dims::kC2 * n3);
    t0 = now();
    detail::im2col_3x3(ws.fused.data(), n, kCf, kS3, ws.col3.data());
    t_im2col += now() - t0;
    t0 = now();
    std::fill(ws.y3.begin(), ws.y3.begin() + kCf * n3, 0.f);
    gemm_nn(ws.y3.data(), params.fusion_w.ptr(), ws.col3.data(), kCf, 288, n3);
    t_gemm += now() - t0;
    t0 = now();
    detail::add_bias_relu(ws.y3.data(), params.fusion_b.ptr(), kCf, n3);
    t_bias += now() - t0;

    t0 = now();
    const std::size_t plane3 = 64;
    for (int c = 0; c < kCf; ++c)
      for (std::size_t s = 0; s < n; ++s)
        std::copy(ws.y3.begin() + (static_cast<std::size_t>(c) * n + s) * plane3,
                  ws.y3.begin() + (static_cast<std::size_t>(c) * n + s + 1) * plane3,
                  ws.x4.begin() + s * kFlat + static_cast<std::size_t>(c) * plane3);
    std::fill(ws.h1.begin(), ws.h1.begin() + n * kFc, 0.f);
    gemm_nt(ws.h1.data(), ws.x4.data(), params.fc1_w.ptr(), n, kFlat, kFc);
    std::fill(ws.out.begin(), ws.out.begin() + n * 2, 0.f);
    gemm_nt(ws.out.data(), ws.h1.data(), params.head_w.ptr(), n, kFc, 2);
    t_fc += now() - t0;
  }

  const double per = 1e6 / (iters * 64.0);
  std::printf("pack   %7.1f us/sample\n", t_pack * per);
  std::printf("finchk %7.1f us/sample\n", t_fin * per);
  std::printf("im2col %7.1f us/sample\n", t_im2col * per);
  std::printf("gemm   %7.1f us/sample\n", t_gemm * per);
  std::printf("bias   %7.1f us/sample\n", t_bias * per);
  std::printf("pool   %7.1f us/sample\n", t_pool * per);
  std::printf("fc     %7.1f us/sample\n", t_fc * per);
  return 0;
}
