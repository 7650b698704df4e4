#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "binpick/candidates.hpp"
#include "binpick/rng.hpp"

namespace binpick {

struct PointSample {
  Patch patch;
  std::uint8_t label = 0;  // sensor feedback, 0 or 1
  std::uint64_t pick_index = 0;
  int row = 0, col = 0;    // pixel the pad was applied to
  bool relabeled = false;  // forced negative by the gradient rule
};

struct RegionSample {
  RegionImage image;
  float score = 0;  // fraction of pickable grid points, k/289
  std::uint64_t pick_index = 0;
  int top_row = 0, top_col = 0;
};

template <typename S>
struct Dataset {
  std::vector<S> samples;
  std::vector<std::uint64_t> source_seeds;

  std::size_t size() const { return samples.size(); }
};

using PointDataset = Dataset<PointSample>;
using RegionDataset = Dataset<RegionSample>;

// ---------------------------------------------------------------------------
// Dataset processing rules

// Largest single-pixel-step depth change in the patch, meters.
inline float max_depth_step(const Patch& p) {
  float worst = 0;
  for (int r = 0; r < kPatchSize; ++r) {
    for (int c = 0; c < kPatchSize; ++c) {
      const float v = p.depth[r * kPatchSize + c];
      if (c + 1 < kPatchSize)
        worst = std::max(worst, std::abs(p.depth[r * kPatchSize + c + 1] - v));
      if (r + 1 < kPatchSize)
        worst = std::max(worst, std::abs(p.depth[(r + 1) * kPatchSize + c] - v));
    }
  }
  return worst;
}

// Samples whose depth patch steps more than g_thr between adjacent pixels are
// forced to the negative class (the pad seal is unreliable near edges).
// Never flips 0 -> 1; idempotent.
inline PointDataset relabel_high_gradient(const PointDataset& ds,
                                          double g_thr = 0.002) {
  if (g_thr <= 0) throw std::invalid_argument("relabel: g_thr must be > 0");
  PointDataset out = ds;
  for (auto& s : out.samples) {
    if (max_depth_step(s.patch) > static_cast<float>(g_thr)) {
      s.label = 0;
      s.relabeled = true;
    }
  }
  return out;
}

namespace detail {

// Bilinear sample with edge replication.
inline float bilinear(const float* plane, double r, double c) {
  const double rc = std::clamp(r, 0.0, kPatchSize - 1.0);
  const double cc = std::clamp(c, 0.0, kPatchSize - 1.0);
  const int r0 = static_cast<int>(std::floor(rc));
  const int c0 = static_cast<int>(std::floor(cc));
  const int r1 = std::min(r0 + 1, kPatchSize - 1);
  const int c1 = std::min(c0 + 1, kPatchSize - 1);
  const double fr = rc - r0, fc = cc - c0;
  const double top = plane[r0 * kPatchSize + c0] * (1 - fc) +
                     plane[r0 * kPatchSize + c1] * fc;
  const double bot = plane[r1 * kPatchSize + c0] * (1 - fc) +
                     plane[r1 * kPatchSize + c1] * fc;
  return static_cast<float>(top * (1 - fr) + bot * fr);
}

inline void rotate_plane(const float* src, float* dst, double cos_t, double sin_t) {
  constexpr double ctr = (kPatchSize - 1) / 2.0;  // 15.5
  for (int r = 0; r < kPatchSize; ++r) {
    for (int c = 0; c < kPatchSize; ++c) {
      // inverse mapping: sample the source at the un-rotated position
      const double dy = r - ctr, dx = c - ctr;
      const double sr = ctr + dy * cos_t - dx * sin_t;
      const double sc = ctr + dy * sin_t + dx * cos_t;
      dst[r * kPatchSize + c] = bilinear(src, sr, sc);
    }
  }
}

}  // namespace detail

// Rotates the patch by k*22.5 degrees about the patch center, k = 0..15,
// bilinear with edge replication, rgb and depth transformed identically.
inline Patch rotate_patch(const Patch& p, int k) {
  if (k == 0) return p;
  const double t = k * (M_PI / 8.0);
  const double c = std::cos(t), s = std::sin(t);
  Patch out;
  constexpr int hw = kPatchSize * kPatchSize;
  for (int ch = 0; ch < 3; ++ch)
    detail::rotate_plane(p.rgb.data() + ch * hw, out.rgb.data() + ch * hw, c, s);
  detail::rotate_plane(p.depth.data(), out.depth.data(), c, s);
  return out;
}

// The 16 rotations of one sample; labels and metadata copied.
inline std::vector<PointSample> augment_rotations(const PointSample& s) {
  std::vector<PointSample> out;
  out.reserve(16);
  for (int k = 0; k < 16; ++k) {
    PointSample r = s;
    r.patch = rotate_patch(s.patch, k);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 70/30 split. Samples sharing a pick_index (rotation siblings) never
// straddle the split; with unique pick indices the sizes are exactly
// ceil(ratio*n) / rest.
template <typename S>
std::pair<Dataset<S>, Dataset<S>> split(const Dataset<S>& ds, double ratio,
                                        std::uint64_t seed) {
  if (ds.size() < 2) throw std::invalid_argument("split: need at least 2 samples");
  std::map<std::uint64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i)
    groups[ds.samples[i].pick_index].push_back(i);
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, idx] : groups) order.push_back(&idx);
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order.begin(), order.end());

  const std::size_t target = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(ds.size())));
  Dataset<S> train, val;
  train.source_seeds = ds.source_seeds;
  val.source_seeds = ds.source_seeds;
  std::size_t taken = 0;
  for (const auto* g : order) {
    auto& side = (taken < target) ? train : val;
    for (std::size_t i : *g) side.samples.push_back(ds.samples[i]);
    if (taken < target) taken += g->size();
  }
  return {std::move(train), std::move(val)};
}

// ---------------------------------------------------------------------------
// Persistence: manifest.json + samples.bin in a directory.
// Point record: 3x32x32 f32 rgb, 32x32 f32 depth, u8 label, u8 flags,
// u64 pick index; little-endian throughout.
// Region record: same planes, f32 score, u64 pick index, u16 row, u16 col.

namespace detail {

inline constexpr std::size_t kPlaneBytes = 4096 * sizeof(float);  // 4 planes

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

inline constexpr std::size_t kPointRecordBytes = 16384 + 1 + 1 + 8;
inline constexpr std::size_t kRegionRecordBytes = 16384 + 4 + 8 + 2 + 2;

struct DatasetError : std::runtime_error {
  enum class Kind { CorruptManifest, TruncatedPayload, CountMismatch };
  Kind kind;
  DatasetError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline void save(const PointDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::size_t positives = 0;
  for (const auto& s : ds.samples) positives += s.label;
  nlohmann::json m = {{"kind", "point"},
                      {"count", ds.samples.size()},
                      {"positives", positives},
                      {"record_bytes", kPointRecordBytes},
                      {"source_seeds", ds.source_seeds}};
  std::ofstream mf(dir + "/manifest.json");
  mf << m.dump(2) << "\n";
  std::ofstream f(dir + "/samples.bin", std::ios::binary);
  for (const auto& s : ds.samples) {
    f.write(reinterpret_cast<const char*>(s.patch.rgb.data()), 3 * 4096);
    f.write(reinterpret_cast<const char*>(s.patch.depth.data()), 4096);
    detail::put(f, s.label);
    const std::uint8_t flags = s.relabeled ? 1 : 0;
    detail::put(f, flags);
    detail::put(f, s.pick_index);
  }
  if (!f) throw std::runtime_error("failed writing " + dir + "/samples.bin");
}

inline void save(const RegionDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json m = {{"kind", "region"},
                      {"count", ds.samples.size()},
                      {"record_bytes", kRegionRecordBytes},
                      {"source_seeds", ds.source_seeds}};
  std::ofstream mf(dir + "/manifest.json");
  mf << m.dump(2) << "\n";
  std::ofstream f(dir + "/samples.bin", std::ios::binary);
  for (const auto& s : ds.samples) {
    f.write(reinterpret_cast<const char*>(s.image.rgb.data()), 3 * 4096);
    f.write(reinterpret_cast<const char*>(s.image.depth.data()), 4096);
    detail::put(f, s.score);
    detail::put(f, s.pick_index);
    detail::put(f, static_cast<std::uint16_t>(s.top_row));
    detail::put(f, static_cast<std::uint16_t>(s.top_col));
  }
  if (!f) throw std::runtime_error("failed writing " + dir + "/samples.bin");
}

namespace detail {

inline nlohmann::json load_manifest(const std::string& dir, const char* kind,
                                    std::size_t record_bytes) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf)
    throw DatasetError(DatasetError::Kind::CorruptManifest,
                       "missing manifest: " + dir);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(DatasetError::Kind::CorruptManifest,
                       "unparseable manifest: " + dir + ": " + e.what());
  }
  if (m.value("kind", "") != kind)
    throw DatasetError(DatasetError::Kind::CorruptManifest,
                       "wrong dataset kind in " + dir);
  if (m.value("record_bytes", std::size_t{0}) != record_bytes)
    throw DatasetError(DatasetError::Kind::CorruptManifest,
                       "unexpected record size in " + dir);
  const auto count = m.at("count").get<std::size_t>();
  std::error_code ec;
  const auto fsize = std::filesystem::file_size(dir + "/samples.bin", ec);
  if (ec)
    throw DatasetError(DatasetError::Kind::TruncatedPayload,
                       "missing samples.bin: " + dir);
  if (fsize != count * record_bytes)
    throw DatasetError(fsize < count * record_bytes
                           ? DatasetError::Kind::TruncatedPayload
                           : DatasetError::Kind::CountMismatch,
                       "payload size does not match manifest count: " + dir);
  return m;
}

}  // namespace detail

inline PointDataset load_point_dataset(const std::string& dir) {
  const auto m = detail::load_manifest(dir, "point", kPointRecordBytes);
  PointDataset ds;
  ds.source_seeds = m.value("source_seeds", std::vector<std::uint64_t>{});
  const auto count = m.at("count").get<std::size_t>();
  std::ifstream f(dir + "/samples.bin", std::ios::binary);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < count; ++i) {
    PointSample s;
    f.read(reinterpret_cast<char*>(s.patch.rgb.data()), 3 * 4096);
    f.read(reinterpret_cast<char*>(s.patch.depth.data()), 4096);
    std::uint8_t flags = 0;
    detail::get(f, s.label);
    detail::get(f, flags);
    detail::get(f, s.pick_index);
    s.relabeled = flags & 1;
    positives += s.label;
    ds.samples.push_back(std::move(s));
  }
  if (!f)
    throw DatasetError(DatasetError::Kind::TruncatedPayload,
                       "truncated payload: " + dir);
  if (m.contains("positives") && m.at("positives").get<std::size_t>() != positives)
    throw DatasetError(DatasetError::Kind::CountMismatch,
                       "manifest class balance does not match payload: " + dir);
  return ds;
}

inline RegionDataset load_region_dataset(const std::string& dir) {
  const auto m = detail::load_manifest(dir, "region", kRegionRecordBytes);
  RegionDataset ds;
  ds.source_seeds = m.value("source_seeds", std::vector<std::uint64_t>{});
  const auto count = m.at("count").get<std::size_t>();
  std::ifstream f(dir + "/samples.bin", std::ios::binary);
  for (std::size_t i = 0; i < count; ++i) {
    RegionSample s;
    f.read(reinterpret_cast<char*>(s.image.rgb.data()), 3 * 4096);
    f.read(reinterpret_cast<char*>(s.image.depth.data()), 4096);
    std::uint16_t r = 0, c = 0;
    detail::get(f, s.score);
    detail::get(f, s.pick_index);
    detail::get(f, r);
    detail::get(f, c);
    s.top_row = r;
    s.top_col = c;
    ds.samples.push_back(std::move(s));
  }
  if (!f)
    throw DatasetError(DatasetError::Kind::TruncatedPayload,
                       "truncated payload: " + dir);
  return ds;
}

}  // namespace binpick
