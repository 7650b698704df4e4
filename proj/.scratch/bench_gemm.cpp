#include <algorithm>
#include <chrono>
#include <cstdio>
#include <vector>

using clk = std::chrono::steady_clock;

// variant A: n-block, k, m, n  (current)
template <typename T>
void gemm_a(T* C, const T* A, const T* B, std::size_t M, std::size_t K,
            std::size_t N) {
  constexpr std::size_t NB = 512;
  for (std::size_t n0 = 0; n0 < N; n0 += NB) {
    const std::size_t nb = std::min(NB, N - n0);
    for (std::size_t k = 0; k < K; ++k) {
      const T* __restrict brow = B + k * N + n0;
      for (std::size_t m = 0; m < M; ++m) {
        const T a = A[m * K + k];
        T* __restrict crow = C + m * N + n0;
        for (std::size_t n = 0; n < nb; ++n) crow[n] += a * brow[n];
      }
    }
  }
}

// variant B: n-block, m, k, n (crow hot across k)
template <typename T>
void gemm_b(T* C, const T* A, const T* B, std::size_t M, std::size_t K,
            std::size_t N) {
  constexpr std::size_t NB = 512;
  for (std::size_t n0 = 0; n0 < N; n0 += NB) {
    const std::size_t nb = std::min(NB, N - n0);
    for (std::size_t m = 0; m < M; ++m) {
      T* __restrict crow = C + m * N + n0;
      for (std::size_t k = 0; k < K; ++k) {
        const T a = A[m * K + k];
        const T* __restrict brow = B + k * N + n0;
        for (std::size_t n = 0; n < nb; ++n) crow[n] += a * brow[n];
      }
    }
  }
}

// variant C: 4-way m unroll, k inner, accumulate into C once per k-sweep
template <typename T>
void gemm_c(T* C, const T* A, const T* B, std::size_t M, std::size_t K,
            std::size_t N) {
  constexpr std::size_t NB = 256;
  for (std::size_t n0 = 0; n0 < N; n0 += NB) {
    const std::size_t nb = std::min(NB, N - n0);
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
      T acc0[NB] = {}, acc1[NB] = {}, acc2[NB] = {}, acc3[NB] = {};
      for (std::size_t k = 0; k < K; ++k) {
        const T* __restrict brow = B + k * N + n0;
        const T a0 = A[(m + 0) * K + k], a1 = A[(m + 1) * K + k];
        const T a2 = A[(m + 2) * K + k], a3 = A[(m + 3) * K + k];
        for (std::size_t n = 0; n < nb; ++n) {
          const T b = brow[n];
          acc0[n] += a0 * b;
          acc1[n] += a1 * b;
          acc2[n] += a2 * b;
          acc3[n] += a3 * b;
        }
      }
      for (std::size_t n = 0; n < nb; ++n) {
        C[(m + 0) * N + n0 + n] += acc0[n];
        C[(m + 1) * N + n0 + n] += acc1[n];
        C[(m + 2) * N + n0 + n] += acc2[n];
        C[(m + 3) * N + n0 + n] += acc3[n];
      }
    }
    for (; m < M; ++m) {
      T* __restrict crow = C + m * N + n0;
      for (std::size_t k = 0; k < K; ++k) {
        const T a = A[m * K + k];
        const T* __restrict brow = B + k * N + n0;
        for (std::size_t n = 0; n < nb; ++n) crow[n] += a * brow[n];
      }
    }
  }
}

template <typename F>
void bench(const char* name, F f, std::size_t M, std::size_t K, std::size_t N) {
  std::vector<float> A(M * K, 0.5f), B(K * N, 0.25f), C(M * N, 0.f);
  f(C.data(), A.data(), B.data(), M, K, N);  // warm
  const int iters = static_cast<int>(3e9 / (2.0 * M * K * N)) + 1;
  auto t0 = clk::now();
  for (int i = 0; i < iters; ++i) f(C.data(), A.data(), B.data(), M, K, N);
  auto t1 = clk::now();
  const double s = std::chrono::duration<double>(t1 - t0).count();
  std::printf("%s M=%zu K=%zu N=%zu: %.1f GFLOP/s\n", name, M, K, N,
              2.0 * M * K * N * iters / s / 1e9);
}

int main() {
  for (auto [M, K, N] : {std::tuple<std::size_t, std::size_t, std::size_t>{8, 27, 65536},
                         {16, 72, 16384},
                         {32, 288, 4096},
                         {64, 2048, 64}}) {
    bench("A", gemm_a<float>, M, K, N);
    bench("B", gemm_b<float>, M, K, N);
    bench("C", gemm_c<float>, M, K, N);
    std::printf("\n");
  }
  return 0;
}
