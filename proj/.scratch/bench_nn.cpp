#include <chrono>
#include <cstdio>

#include "binpick/nn.hpp"

using namespace binpick;
using clk = std::chrono::steady_clock;

int main() {
  DepthNorm dn;
  Rng rng(1);

  // random patches
  std::vector<Patch> patches(64);
  std::vector<float> labels(64);
  for (auto& p : patches) {
    for (auto& v : p.rgb) v = static_cast<float>(rng.uniform01());
    for (auto& v : p.depth) v = static_cast<float>(0.4 + 0.1 * rng.uniform01());
  }
  for (auto& l : labels) l = rng.bernoulli(0.5) ? 1.0f : 0.0f;

  auto params = init_params<float>(HeadKind::Classifier, 42);
  Workspace<float> ws;

  // forward-only benchmark
  std::vector<double> out(64 * 2);
  forward_batch(params, std::span<const Patch>(patches), dn, ws, out.data());
  auto t0 = clk::now();
  const int fwd_iters = 50;
  for (int i = 0; i < fwd_iters; ++i)
    forward_batch(params, std::span<const Patch>(patches), dn, ws, out.data());
  auto t1 = clk::now();
  double fwd_s = std::chrono::duration<double>(t1 - t0).count();
  double fwd_flops = 2.0 * 1.753e6 * 64 * fwd_iters;
  std::printf("forward: %.1f us/sample, %.2f GFLOP/s\n",
              fwd_s / (64.0 * fwd_iters) * 1e6, fwd_flops / fwd_s / 1e9);

  // fwd+bwd benchmark
  double loss = 0;
  auto g = backward(params, std::span<const Patch>(patches), labels.data(), dn,
                    LossKind::CrossEntropy, ws, &loss);
  t0 = clk::now();
  const int bwd_iters = 30;
  for (int i = 0; i < bwd_iters; ++i)
    g = backward(params, std::span<const Patch>(patches), labels.data(), dn,
                 LossKind::CrossEntropy, ws, &loss);
  t1 = clk::now();
  double bwd_s = std::chrono::duration<double>(t1 - t0).count();
  double bwd_flops = 2.0 * 4.81e6 * 64 * bwd_iters;
  std::printf("fwd+bwd: %.1f us/sample, %.2f GFLOP/s (loss %.4f)\n",
              bwd_s / (64.0 * bwd_iters) * 1e6, bwd_flops / bwd_s / 1e9, loss);

  // quick grad check in double
  auto dp = init_params<double>(HeadKind::Classifier, 7);
  std::vector<Patch> small(patches.begin(), patches.begin() + 4);
  auto gt0 = clk::now();
  double err = grad_check(dp, std::span<const Patch>(small), labels.data(), dn,
                          LossKind::CrossEntropy, 123);
  auto gt1 = clk::now();
  std::printf("grad_check classifier: max rel err %.3e (%.2f s)\n", err,
              std::chrono::duration<double>(gt1 - gt0).count());

  auto dr = init_params<double>(HeadKind::Regressor, 8);
  std::vector<float> targets(4, 0.3f);
  err = grad_check(dr, std::span<const Patch>(small), targets.data(), dn,
                   LossKind::Mse, 123);
  std::printf("grad_check regressor: max rel err %.3e\n", err);
  return 0;
}
