#include <chrono>
#include <cstdio>

#include "binpick/nn.hpp"

using namespace binpick;
using clk = std::chrono::steady_clock;
static double now() {
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

int main() {
  using namespace nn_dims;
  DepthNorm dn;
  Rng rng(1);
  std::vector<Patch> patches(64);
  std::vector<float> labels(64);
  for (auto& p : patches) {
    for (auto& v : p.rgb) v = static_cast<float>(rng.uniform01());
    for (auto& v : p.depth) v = static_cast<float>(0.4 + 0.1 * rng.uniform01());
  }
  auto params = init_params<float>(HeadKind::Classifier, 42);
  Workspace<float> ws;
  ws.ensure(64, 2);
  const std::size_t n = 64;
  const std::size_t n1 = n * 1024, n2 = n * 256, n3 = n * 64;

  // one full fwd to populate
  pack_batch(std::span<const Patch>(patches), dn, 0, n, ws);
  forward_packed(params, n, ws, true);
  auto grads = zero_params<float>(HeadKind::Classifier);
  head_loss_grad(params, n, ws, labels.data(), LossKind::CrossEntropy, true);

  const int iters = 60;
  double t_alloc = 0, t_fc = 0, t_unpack = 0, t_fusion = 0, t_col2im = 0,
         t_poolb = 0, t_convdw = 0, t_dcol = 0;

  for (int it = 0; it < iters; ++it) {
    double t0 = now();
    auto g = zero_params<float>(HeadKind::Classifier);
    t_alloc += now() - t0;

    const int od = 2;
    t0 = now();
    detail::gemm_tn(g.head_w.ptr(), ws.dout.data(), ws.h1.data(), n, od, kFc);
    std::fill(ws.dh1.begin(), ws.dh1.begin() + n * kFc, 0.f);
    gemm_nn(ws.dh1.data(), ws.dout.data(), params.head_w.ptr(), n, od, kFc);
    detail::relu_mask_grad(ws.dh1.data(), ws.h1.data(), n * kFc);
    detail::gemm_tn(g.fc1_w.ptr(), ws.dh1.data(), ws.x4.data(), n, kFc, kFlat);
    std::fill(ws.dx4.begin(), ws.dx4.begin() + n * kFlat, 0.f);
    gemm_nn(ws.dx4.data(), ws.dh1.data(), params.fc1_w.ptr(), n, kFc, kFlat);
    t_fc += now() - t0;

    t0 = now();
    const std::size_t plane3 = 64;
    for (int c = 0; c < kCf; ++c)
      for (std::size_t s = 0; s < n; ++s)
        std::copy(ws.dx4.begin() + s * kFlat + c * plane3,
                  ws.dx4.begin() + s * kFlat + (c + 1) * plane3,
                  ws.dy3.begin() + (static_cast<std::size_t>(c) * n + s) * plane3);
    detail::relu_mask_grad(ws.dy3.data(), ws.y3.data(), kCf * n3);
    t_unpack += now() - t0;

    t0 = now();
    gemm_nt(g.fusion_w.ptr(), ws.dy3.data(), ws.col3.data(), kCf, n3, 288);
    for (int k = 0; k < 288; ++k)
      for (int m = 0; m < kCf; ++m)
        ws.wt[k * 32 + m] = params.fusion_w.data[m * 288 + k];
    std::fill(ws.dcol3.begin(), ws.dcol3.begin() + 288 * n3, 0.f);
    gemm_nn(ws.dcol3.data(), ws.wt.data(), ws.dy3.data(), 288, kCf, n3);
    t_fusion += now() - t0;

    t0 = now();
    detail::col2im_3x3(ws.dcol3.data(), n, kCf, kS3, ws.dfused.data());
    t_col2im += now() - t0;

    std::copy(ws.dfused.begin(), ws.dfused.begin() + kC2 * n3, ws.dp2a.begin());
    std::copy(ws.dfused.begin() + kC2 * n3, ws.dfused.begin() + 2 * kC2 * n3,
              ws.dp2b.begin());

    for (int s = 0; s < 2; ++s) {
      auto& dp2 = s ? ws.dp2b : ws.dp2a;
      auto& m2 = s ? ws.m2b : ws.m2a;
      auto& y2 = s ? ws.y2b : ws.y2a;
      auto& dy2 = s ? ws.dy2b : ws.dy2a;
      auto& col2 = s ? ws.col2b : ws.col2a;
      auto& dcol2 = s ? ws.dcol2b : ws.dcol2a;
      auto& dp1 = s ? ws.dp1b : ws.dp1a;
      auto& m1 = s ? ws.m1b : ws.m1a;
      auto& y1 = s ? ws.y1b : ws.y1a;
      auto& dy1 = s ? ws.dy1b : ws.dy1a;
      const auto& w2 = s ? params.conv2b_w : params.conv2a_w;
      auto& gw2 = s ? g.conv2b_w : g.conv2a_w;

      t0 = now();
      detail::maxpool2_back(dp2.data(), m2.data(), n, kC2, kS2, dy2.data());
      detail::relu_mask_grad(dy2.data(), y2.data(), kC2 * n2);
      t_poolb += now() - t0;
      t0 = now();
      gemm_nt(gw2.ptr(), dy2.data(), col2.data(), kC2, n2, 72);
      t_convdw += now() - t0;
      t0 = now();
      for (int k = 0; k < 72; ++k)
        for (int m = 0; m < kC2; ++m)
          ws.wt[k * kC2 + m] = w2.data[m * 72 + k];
      std::fill(dcol2.begin(), dcol2.begin() + 72 * n2, 0.f);
      gemm_nn(dcol2.data(), ws.wt.data(), dy2.data(), 72, kC2, n2);
      t_dcol += now() - t0;
      t0 = now();
      detail::col2im_3x3(dcol2.data(), n, kC1, kS2, dp1.data());
      t_col2im += now() - t0;
      t0 = now();
      detail::maxpool2_back(dp1.data(), m1.data(), n, kC1, kS1, dy1.data());
      detail::relu_mask_grad(dy1.data(), y1.data(), kC1 * n1);
      t_poolb += now() - t0;
      t0 = now();
      if (s == 0) {
        gemm_nt(g.conv1a_w.ptr(), dy1.data(), ws.col1a.data(), kC1, n1, 27);
      } else {
        float gsum[72] = {};
        gemm_nt(gsum, dy1.data(), ws.col1b.data(), kC1, n1, 9);
      }
      t_convdw += now() - t0;
    }
  }

  const double per = 1e6 / (iters * 64.0);
  std::printf("alloc   %7.1f us/sample\n", t_alloc * per);
  std::printf("fc      %7.1f us/sample\n", t_fc * per);
  std::printf("unpack  %7.1f us/sample\n", t_unpack * per);
  std::printf("fusion  %7.1f us/sample\n", t_fusion * per);
  std::printf("col2im  %7.1f us/sample\n", t_col2im * per);
  std::printf("poolb   %7.1f us/sample\n", t_poolb * per);
  std::printf("convdw  %7.1f us/sample\n", t_convdw * per);
  std::printf("dcol    %7.1f us/sample\n", t_dcol * per);
  return 0;
}
