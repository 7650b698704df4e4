#include <cstdio>

#include "binpick/nn.hpp"

using namespace binpick;

int main() {
  DepthNorm dn;
  Rng rng(1);
  std::vector<Patch> patches(4);
  std::vector<float> labels = {0, 1, 1, 0};
  for (auto& p : patches) {
    for (auto& v : p.rgb) v = static_cast<float>(rng.uniform01());
    for (auto& v : p.depth) v = static_cast<float>(0.4 + 0.1 * rng.uniform01());
  }

  auto params = init_params<double>(HeadKind::Classifier, 7);
  Workspace<double> ws;
  auto grads = backward(params, std::span<const Patch>(patches), labels.data(),
                        dn, LossKind::CrossEntropy, ws);

  auto batch_loss = [&]() {
    pack_batch<double>(patches, dn, 0, patches.size(), ws);
    forward_packed(params, patches.size(), ws);
    return head_loss_grad(params, patches.size(), ws, labels.data(),
                          LossKind::CrossEntropy, false);
  };

  auto gs = tensor_ptrs(grads);
  std::size_t ti = 0;
  Rng prng(99);
  params.for_each([&](const char* name, Tensor<double>& t) {
    double worst4 = 0, worst6 = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t i = prng.uniform_index(t.size());
      const double orig = t.data[i];
      auto fd = [&](double h) {
        t.data[i] = orig + h;
        const double lp = batch_loss();
        t.data[i] = orig - h;
        const double lm = batch_loss();
        t.data[i] = orig;
        return (lp - lm) / (2 * h);
      };
      const double a = gs[ti]->data[i];
      auto rel = [&](double n) {
        return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
      };
      worst4 = std::max(worst4, rel(fd(1e-4)));
      worst6 = std::max(worst6, rel(fd(1e-6)));
    }
    std::printf("%-10s  h=1e-4: %.3e   h=1e-6: %.3e\n", name, worst4, worst6);
    ++ti;
  });
  return 0;
}
