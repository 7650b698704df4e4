#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "binpick/scene.hpp"

namespace binpick {

inline constexpr int kRegionSize = 100;   // sliding window extent, pixels
inline constexpr int kGridSide = 17;      // 17x17 point grid per region
inline constexpr int kGridPoints = kGridSide * kGridSide;  // 289
inline constexpr int kPatchSize = 32;
inline constexpr int kRegionRows = 3, kRegionCols = 4;     // 12 regions

struct RegionCandidate {
  int top_row = 0, top_col = 0;
};

struct PointCandidate {
  int gi = 0, gj = 0;   // grid index, 0..16 each
  int row = 0, col = 0; // absolute pixel
};

// 32x32 crop centered on a point candidate. rgb is planar (3 planes),
// depth is raw meters; both row-major float32.
struct Patch {
  std::array<float, 3 * kPatchSize * kPatchSize> rgb{};
  std::array<float, kPatchSize * kPatchSize> depth{};
};

// 100x100 region average-pooled to 32x32, same layout as Patch.
using RegionImage = Patch;

using BinaryMap = std::array<std::uint8_t, kGridPoints>;  // 17x17 row-major

// 3 rows x 4 cols of 100x100 windows spanning the raster; row-major order.
inline std::vector<RegionCandidate> region_candidates(int raster_h, int raster_w) {
  if (raster_h < kRegionSize || raster_w < kRegionSize)
    throw std::invalid_argument("raster smaller than region window");
  std::vector<RegionCandidate> out;
  out.reserve(kRegionRows * kRegionCols);
  for (int i = 0; i < kRegionRows; ++i) {
    const int r = static_cast<int>(std::lround(
        static_cast<double>(i) * (raster_h - kRegionSize) / (kRegionRows - 1)));
    for (int j = 0; j < kRegionCols; ++j) {
      const int c = static_cast<int>(std::lround(
          static_cast<double>(j) * (raster_w - kRegionSize) / (kRegionCols - 1)));
      out.push_back({r, c});
    }
  }
  return out;
}

// 289 grid points at offsets 2 + 6k (k = 0..16) in both axes, row-major.
inline std::vector<PointCandidate> point_grid(const RegionCandidate& region) {
  std::vector<PointCandidate> out;
  out.reserve(kGridPoints);
  for (int i = 0; i < kGridSide; ++i)
    for (int j = 0; j < kGridSide; ++j)
      out.push_back({i, j, region.top_row + 2 + 6 * i, region.top_col + 2 + 6 * j});
  return out;
}

// 32x32 crop with the point at index (16,16); edge replication outside.
inline Patch extract_patch(const Observation& obs, int row, int col) {
  if (row < 0 || row >= obs.h || col < 0 || col >= obs.w)
    throw std::out_of_range("extract_patch: pixel out of bounds");
  Patch p;
  const size_t plane = static_cast<size_t>(obs.h) * obs.w;
  for (int i = 0; i < kPatchSize; ++i) {
    const int r = std::clamp(row - 16 + i, 0, obs.h - 1);
    for (int j = 0; j < kPatchSize; ++j) {
      const int c = std::clamp(col - 16 + j, 0, obs.w - 1);
      const size_t src = static_cast<size_t>(r) * obs.w + c;
      const int dst = i * kPatchSize + j;
      p.depth[dst] = static_cast<float>(obs.depth[src]);
      for (int ch = 0; ch < 3; ++ch)
        p.rgb[ch * kPatchSize * kPatchSize + dst] =
            static_cast<float>(obs.rgb[ch * plane + src]);
    }
  }
  return p;
}

namespace detail {

// Area-weighted average pooling of one 100x100 plane into 32x32.
template <typename Get>
inline void pool_plane(Get get, float* out) {
  constexpr double scale = static_cast<double>(kRegionSize) / kPatchSize;  // 3.125
  for (int oi = 0; oi < kPatchSize; ++oi) {
    const double y0 = oi * scale, y1 = (oi + 1) * scale;
    const int iy0 = static_cast<int>(std::floor(y0)), iy1 = static_cast<int>(std::ceil(y1));
    for (int oj = 0; oj < kPatchSize; ++oj) {
      const double x0 = oj * scale, x1 = (oj + 1) * scale;
      const int ix0 = static_cast<int>(std::floor(x0)), ix1 = static_cast<int>(std::ceil(x1));
      double acc = 0;
      for (int r = iy0; r < iy1 && r < kRegionSize; ++r) {
        const double wy = std::min<double>(r + 1, y1) - std::max<double>(r, y0);
        for (int c = ix0; c < ix1 && c < kRegionSize; ++c) {
          const double wx = std::min<double>(c + 1, x1) - std::max<double>(c, x0);
          acc += wy * wx * get(r, c);
        }
      }
      out[oi * kPatchSize + oj] = static_cast<float>(acc / (scale * scale));
    }
  }
}

}  // namespace detail

// Average-pools the 100x100 window to 32x32 (fractional bins area-weighted).
inline RegionImage downsample_region(const Observation& obs,
                                     const RegionCandidate& region) {
  if (region.top_row < 0 || region.top_col < 0 ||
      region.top_row + kRegionSize > obs.h || region.top_col + kRegionSize > obs.w)
    throw std::out_of_range("downsample_region: window outside raster");
  RegionImage img;
  const size_t plane = static_cast<size_t>(obs.h) * obs.w;
  detail::pool_plane(
      [&](int r, int c) {
        return obs.depth[static_cast<size_t>(region.top_row + r) * obs.w +
                         region.top_col + c];
      },
      img.depth.data());
  for (int ch = 0; ch < 3; ++ch) {
    detail::pool_plane(
        [&, ch](int r, int c) {
          return obs.rgb[ch * plane +
                         static_cast<size_t>(region.top_row + r) * obs.w +
                         region.top_col + c];
        },
        img.rgb.data() + ch * kPatchSize * kPatchSize);
  }
  return img;
}

// Fixed 5x5 weighting that prefers centered pickable points.
struct KernelE {
  std::array<double, 25> w{};

  // Symmetric reading of the published matrix (default).
  static KernelE symmetric() {
    KernelE k;
    k.w = {0.1, 0.3, 0.5, 0.3, 0.1,
           0.3, 0.5, 0.8, 0.5, 0.3,
           0.5, 0.8, 1.0, 0.8, 0.5,
           0.3, 0.5, 0.8, 0.5, 0.3,
           0.1, 0.3, 0.5, 0.3, 0.1};
    return k;
  }

  // The matrix exactly as published (asymmetric last row).
  static KernelE literal() {
    KernelE k = symmetric();
    k.w[21] = 0.5;
    k.w[22] = 0.8;
    k.w[23] = 0.3;
    return k;
  }
};

// Sliding dot product of the kernel over the map, zero padded, output 17x17.
inline std::array<double, kGridPoints> convolve_map(const BinaryMap& map,
                                                    const KernelE& kernel) {
  std::array<double, kGridPoints> out{};
  for (int i = 0; i < kGridSide; ++i) {
    for (int j = 0; j < kGridSide; ++j) {
      double acc = 0;
      for (int di = -2; di <= 2; ++di) {
        const int r = i + di;
        if (r < 0 || r >= kGridSide) continue;
        for (int dj = -2; dj <= 2; ++dj) {
          const int c = j + dj;
          if (c < 0 || c >= kGridSide) continue;
          if (map[r * kGridSide + c])
            acc += kernel.w[(di + 2) * 5 + (dj + 2)];
        }
      }
      out[i * kGridSide + j] = acc;
    }
  }
  return out;
}

// Most centered pickable point: among cells with map value 1, the one whose
// kernel response is largest; ties go to the smallest row-major index.
inline std::optional<std::pair<int, int>> select_point(
    const BinaryMap& map, const KernelE& kernel = KernelE::symmetric()) {
  const auto conv = convolve_map(map, kernel);
  int best = -1;
  double best_v = 0;
  for (int idx = 0; idx < kGridPoints; ++idx) {
    if (!map[idx]) continue;
    if (best < 0 || conv[idx] > best_v) {
      best = idx;
      best_v = conv[idx];
    }
  }
  if (best < 0) return std::nullopt;
  return std::make_pair(best / kGridSide, best % kGridSide);
}

}  // namespace binpick
