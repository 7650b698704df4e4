#pragma once

#include <span>
#include <vector>

#include "binpick/candidates.hpp"
#include "binpick/nn.hpp"
#include "binpick/scene.hpp"

namespace binpick {

// SGPA classifications for the 289 grid points of one region.
template <typename T>
BinaryMap sgpa_binary_map(const ModelParams<T>& sgpa, const Observation& obs,
                          const RegionCandidate& region, const DepthNorm& dn,
                          Workspace<T>& ws) {
  const auto points = point_grid(region);
  std::vector<Patch> patches;
  patches.reserve(points.size());
  for (const auto& pt : points) patches.push_back(extract_patch(obs, pt.row, pt.col));
  std::vector<double> logits(2 * patches.size());
  forward_batch(sgpa, std::span<const Patch>(patches), dn, ws, logits.data());
  BinaryMap map{};
  for (std::size_t i = 0; i < points.size(); ++i)
    map[i] = logits[2 * i + 1] > logits[2 * i] ? 1 : 0;
  return map;
}

// FRE suction scores for a set of region candidates (one forward each).
template <typename T>
std::vector<double> fre_scores(const ModelParams<T>& fre, const Observation& obs,
                               std::span<const RegionCandidate> regions,
                               const DepthNorm& dn, Workspace<T>& ws) {
  std::vector<Patch> images;
  images.reserve(regions.size());
  for (const auto& r : regions) images.push_back(downsample_region(obs, r));
  std::vector<double> raw(images.size());
  forward_batch(fre, std::span<const Patch>(images), dn, ws, raw.data());
  for (auto& v : raw) v = sigmoid(v);
  return raw;
}

// Region label for FRE training: the fraction of grid points the current
// SGPA-Net calls pickable. Always an exact multiple of 1/289.
template <typename T>
double make_region_label(const ModelParams<T>& sgpa, const Observation& obs,
                         const RegionCandidate& region, const DepthNorm& dn,
                         Workspace<T>& ws) {
  const BinaryMap map = sgpa_binary_map(sgpa, obs, region, dn, ws);
  int positives = 0;
  for (const auto v : map) positives += v;
  return static_cast<double>(positives) / static_cast<double>(kGridPoints);
}

}  // namespace binpick
