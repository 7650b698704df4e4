#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "binpick/rng.hpp"

namespace binpick {

// Orthographic overhead camera plane height above the box floor, meters.
// Floor pixels render at exactly this depth.
inline constexpr double kFloorDepth = 0.5;

enum class Archetype { FlatBox, TiltedBox, LyingCylinder, Sphere, Ramp };

inline const char* to_string(Archetype a) {
  switch (a) {
    case Archetype::FlatBox: return "flat_box";
    case Archetype::TiltedBox: return "tilted_box";
    case Archetype::LyingCylinder: return "lying_cylinder";
    case Archetype::Sphere: return "sphere";
    case Archetype::Ramp: return "ramp";
  }
  return "?";
}

inline Archetype archetype_from_string(const std::string& s) {
  if (s == "flat_box") return Archetype::FlatBox;
  if (s == "tilted_box") return Archetype::TiltedBox;
  if (s == "lying_cylinder") return Archetype::LyingCylinder;
  if (s == "sphere") return Archetype::Sphere;
  if (s == "ramp") return Archetype::Ramp;
  throw std::invalid_argument("unknown archetype: " + s);
}

// One archetype + size preset ("kind"). Sizes in meters; meaning of a/b/c:
//   FlatBox, TiltedBox:  a=length, b=width, c=height
//   LyingCylinder:       a=radius, b=axis length
//   Sphere:              a=radius
//   Ramp:                a=length (slope direction), b=width
// tilt_lo/tilt_hi (radians) bound the per-instance tilt sampled at placement
// (TiltedBox and Ramp only).
struct ObjectKind {
  std::string name;
  Archetype archetype = Archetype::FlatBox;
  double a = 0, b = 0, c = 0;
  double tilt_lo = 0, tilt_hi = 0;
};

namespace detail {
inline double deg(double d) { return d * M_PI / 180.0; }
}  // namespace detail

// Ten "known" kinds stand in for the ten training meshes. Tilt ranges of the
// tilted boxes straddle the oracle's 30 degree limit and sphere_xs is too
// curved to seal anywhere, so pickability has to be learned, not assumed.
inline const std::vector<ObjectKind>& known_kinds() {
  using detail::deg;
  static const std::vector<ObjectKind> k = {
      {"flatbox_s", Archetype::FlatBox, 0.060, 0.050, 0.030},
      {"flatbox_l", Archetype::FlatBox, 0.100, 0.080, 0.045},
      {"flatbox_wide", Archetype::FlatBox, 0.130, 0.050, 0.025},
      {"tiltbox_s", Archetype::TiltedBox, 0.070, 0.050, 0.030, deg(8), deg(42)},
      {"tiltbox_l", Archetype::TiltedBox, 0.090, 0.070, 0.035, deg(8), deg(42)},
      {"cyl_s", Archetype::LyingCylinder, 0.020, 0.070},
      {"cyl_l", Archetype::LyingCylinder, 0.030, 0.100},
      {"sphere_s", Archetype::Sphere, 0.035},
      {"sphere_l", Archetype::Sphere, 0.045},
      {"sphere_xs", Archetype::Sphere, 0.018},
  };
  return k;
}

// Held-out kinds: new size presets plus the Ramp archetype, which never
// appears in training.
inline const std::vector<ObjectKind>& unseen_kinds() {
  using detail::deg;
  static const std::vector<ObjectKind> k = {
      {"flatbox_m", Archetype::FlatBox, 0.080, 0.065, 0.050},
      {"flatbox_u", Archetype::FlatBox, 0.090, 0.040, 0.035},
      {"tiltbox_m", Archetype::TiltedBox, 0.080, 0.060, 0.030, deg(8), deg(25)},
      {"tiltbox_u", Archetype::TiltedBox, 0.065, 0.065, 0.040, deg(8), deg(28)},
      {"cyl_m", Archetype::LyingCylinder, 0.025, 0.085},
      {"cyl_u", Archetype::LyingCylinder, 0.035, 0.080},
      {"sphere_m", Archetype::Sphere, 0.040},
      {"sphere_u", Archetype::Sphere, 0.050},
      {"ramp_shallow", Archetype::Ramp, 0.080, 0.060, 0, deg(10), deg(25)},
      {"ramp_wide", Archetype::Ramp, 0.110, 0.070, 0, deg(10), deg(22)},
  };
  return k;
}

inline const ObjectKind& find_kind(const std::string& name) {
  for (const auto& k : known_kinds())
    if (k.name == name) return k;
  for (const auto& k : unseen_kinds())
    if (k.name == name) return k;
  throw std::invalid_argument("unknown object kind: " + name);
}

inline std::vector<std::string> kind_names(const std::vector<ObjectKind>& ks) {
  std::vector<std::string> out;
  for (const auto& k : ks) out.push_back(k.name);
  return out;
}

struct SceneConfig {
  int raster_h = 200;
  int raster_w = 300;
  double pitch_y = 0.0015;    // meters per pixel, row direction
  double pitch_x = 0.001667;  // meters per pixel, column direction
  double box_depth = 0.15;
  int num_objects = 10;
  std::vector<std::string> archetype_set = kind_names(known_kinds());
  std::uint64_t seed = 0;
};

struct Pose {
  double row = 0, col = 0;  // continuous pixel coordinates of the center
  double yaw = 0;           // radians
  double tilt = 0;          // radians; TiltedBox/Ramp only
};

struct ObjectInstance {
  int id = 0;
  ObjectKind kind;
  Pose pose;
  double lift = 0;  // resting height of the base above the floor (stacking)
};

struct DepthScene {
  SceneConfig config;
  std::vector<ObjectInstance> objects;
  int pick_count_since_rearrange = 0;
  int rearrange_epoch = 0;
  std::vector<std::string> warnings;  // transient; not serialized
};

// depth: meters from the camera plane, raster_h x raster_w row-major.
// rgb: three planes (R, G, B) of the same extent, values in [0,1].
struct Observation {
  int h = 0, w = 0;
  std::vector<double> depth;
  std::vector<double> rgb;  // planar, size 3*h*w

  double& at(int r, int c) { return depth[static_cast<size_t>(r) * w + c]; }
  double at(int r, int c) const { return depth[static_cast<size_t>(r) * w + c]; }
};

enum class PickCause { SealOk, NotOnObject, SurfaceTooSteep, SealLeak, NoiseFail };

inline const char* to_string(PickCause c) {
  switch (c) {
    case PickCause::SealOk: return "seal_ok";
    case PickCause::NotOnObject: return "not_on_object";
    case PickCause::SurfaceTooSteep: return "surface_too_steep";
    case PickCause::SealLeak: return "seal_leak";
    case PickCause::NoiseFail: return "noise_fail";
  }
  return "?";
}

struct PickOutcome {
  bool success = false;
  PickCause cause = PickCause::NotOnObject;
};

// Suction pad / seal oracle constants. Defaults model a ~20 mm cup.
struct OracleParams {
  int r_pad_px = 7;
  double theta_max_deg = 30.0;
  double eps_seal_m = 0.002;
  double p_noise = 0.0;
};

// ---------------------------------------------------------------------------
// Heightfield composition

struct HeightField {
  int h = 0, w = 0;
  std::vector<double> height;  // meters above floor
  std::vector<int> owner;      // object id, -1 for floor

  double& z(int r, int c) { return height[static_cast<size_t>(r) * w + c]; }
  double z(int r, int c) const { return height[static_cast<size_t>(r) * w + c]; }
  int& own(int r, int c) { return owner[static_cast<size_t>(r) * w + c]; }
  int own(int r, int c) const { return owner[static_cast<size_t>(r) * w + c]; }
};

namespace detail {

// Standalone height of an object resting on z=0, at metric offset (x, y)
// from its center, in its yawed frame. Returns 0 outside the footprint.
inline double standalone_height(const ObjectInstance& obj, double x, double y) {
  const double cy = std::cos(obj.pose.yaw), sy = std::sin(obj.pose.yaw);
  const double u = cy * x + sy * y;
  const double v = -sy * x + cy * y;
  const ObjectKind& k = obj.kind;
  switch (k.archetype) {
    case Archetype::FlatBox: {
      if (std::abs(u) <= k.a / 2 && std::abs(v) <= k.b / 2) return k.c;
      return 0;
    }
    case Archetype::TiltedBox: {
      // Box resting on its low edge: the visible top face is a plane of
      // inclination tilt over a foreshortened footprint.
      const double len = k.a * std::cos(obj.pose.tilt);
      if (std::abs(u) <= len / 2 && std::abs(v) <= k.b / 2)
        return 0.008 + (u + len / 2) * std::tan(obj.pose.tilt);
      return 0;
    }
    case Archetype::LyingCylinder: {
      const double r = k.a, len = k.b;
      if (std::abs(u) <= len / 2 && std::abs(v) < r)
        return r + std::sqrt(r * r - v * v);
      return 0;
    }
    case Archetype::Sphere: {
      const double r = k.a;
      const double d2 = u * u + v * v;
      if (d2 < r * r) return r + std::sqrt(r * r - d2);
      return 0;
    }
    case Archetype::Ramp: {
      if (std::abs(u) <= k.a / 2 && std::abs(v) <= k.b / 2)
        return (u + k.a / 2) * std::tan(obj.pose.tilt) + 1e-4;
      return 0;
    }
  }
  return 0;
}

// Conservative bounding radius (meters) of the footprint, for placement.
inline double bound_radius(const ObjectKind& k) {
  switch (k.archetype) {
    case Archetype::FlatBox:
    case Archetype::TiltedBox:
    case Archetype::Ramp:
      return 0.5 * std::hypot(k.a, k.b);
    case Archetype::LyingCylinder:
      return std::hypot(k.b / 2, k.a);
    case Archetype::Sphere:
      return k.a;
  }
  return 0;
}

}  // namespace detail

// Composes the scene bottom-up: each object rests at the maximum composite
// height under its footprint (objects placed later stack on earlier ones).
// The stored per-object lift is recomputed here so composition is a pure
// function of the object list order.
inline HeightField compose(const DepthScene& scene) {
  const auto& cfg = scene.config;
  HeightField hf;
  hf.h = cfg.raster_h;
  hf.w = cfg.raster_w;
  hf.height.assign(static_cast<size_t>(hf.h) * hf.w, 0.0);
  hf.owner.assign(static_cast<size_t>(hf.h) * hf.w, -1);

  std::vector<double> solo(static_cast<size_t>(hf.h) * hf.w);
  for (const auto& obj : scene.objects) {
    const double rb = detail::bound_radius(obj.kind);
    const int r0 = std::max(0, static_cast<int>(std::floor(obj.pose.row - rb / cfg.pitch_y)) - 1);
    const int r1 = std::min(hf.h - 1, static_cast<int>(std::ceil(obj.pose.row + rb / cfg.pitch_y)) + 1);
    const int c0 = std::max(0, static_cast<int>(std::floor(obj.pose.col - rb / cfg.pitch_x)) - 1);
    const int c1 = std::min(hf.w - 1, static_cast<int>(std::ceil(obj.pose.col + rb / cfg.pitch_x)) + 1);

    double lift = 0;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double x = (c - obj.pose.col) * cfg.pitch_x;
        const double y = (r - obj.pose.row) * cfg.pitch_y;
        const double hz = detail::standalone_height(obj, x, y);
        solo[static_cast<size_t>(r) * hf.w + c] = hz;
        if (hz > 0) lift = std::max(lift, hf.z(r, c));
      }
    }
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double hz = solo[static_cast<size_t>(r) * hf.w + c];
        if (hz > 0 && lift + hz > hf.z(r, c)) {
          hf.z(r, c) = lift + hz;
          hf.own(r, c) = obj.id;
        }
      }
    }
  }
  return hf;
}

// ---------------------------------------------------------------------------
// Scene generation and mutation

namespace detail {

inline void place_objects(DepthScene& scene, std::vector<ObjectKind> kinds,
                          Rng& rng) {
  const auto& cfg = scene.config;
  scene.objects.clear();
  HeightField hf;  // running composite for the stacking cap
  hf.h = cfg.raster_h;
  hf.w = cfg.raster_w;
  hf.height.assign(static_cast<size_t>(hf.h) * hf.w, 0.0);
  hf.owner.assign(static_cast<size_t>(hf.h) * hf.w, -1);

  const double cap = 2.0 * cfg.box_depth;
  int id = 0;
  for (const auto& kind : kinds) {
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      ObjectInstance obj;
      obj.id = id;
      obj.kind = kind;
      const double rb = detail::bound_radius(kind);
      const double mr = rb / cfg.pitch_y + 2, mc = rb / cfg.pitch_x + 2;
      if (2 * mr >= cfg.raster_h || 2 * mc >= cfg.raster_w)
        throw std::invalid_argument("object too large for raster: " + kind.name);
      obj.pose.row = rng.uniform(mr, cfg.raster_h - 1 - mr);
      obj.pose.col = rng.uniform(mc, cfg.raster_w - 1 - mc);
      obj.pose.yaw = rng.uniform(0, 2 * M_PI);
      if (kind.tilt_hi > 0) obj.pose.tilt = rng.uniform(kind.tilt_lo, kind.tilt_hi);

      // Tentatively compose to check the stacking cap.
      DepthScene probe = scene;
      probe.objects.push_back(obj);
      HeightField probe_hf = compose(probe);
      double top = 0;
      for (double z : probe_hf.height) top = std::max(top, z);
      if (top <= cap) {
        scene.objects.push_back(obj);
        hf = std::move(probe_hf);
        placed = true;
      }
    }
    if (!placed)
      scene.warnings.push_back("placement failed after retries, dropping " + kind.name);
    ++id;
  }
}

}  // namespace detail

// Deterministic per config.seed. When num_objects equals the archetype set
// size each kind appears exactly once (placement order shuffled); otherwise
// kinds are drawn uniformly with replacement.
inline DepthScene generate_scene(const SceneConfig& config) {
  if (config.num_objects < 0) throw std::invalid_argument("num_objects < 0");
  if (config.raster_h <= 0 || config.raster_w <= 0)
    throw std::invalid_argument("empty raster");
  DepthScene scene;
  scene.config = config;
  Rng rng(derive_seed(config.seed, "scene_gen"));

  std::vector<ObjectKind> kinds;
  const auto n = static_cast<size_t>(config.num_objects);
  if (!config.archetype_set.empty()) {
    if (n == config.archetype_set.size()) {
      for (const auto& name : config.archetype_set) kinds.push_back(find_kind(name));
      rng.shuffle(kinds.begin(), kinds.end());
    } else {
      for (size_t i = 0; i < n; ++i) {
        const auto j = rng.uniform_index(config.archetype_set.size());
        kinds.push_back(find_kind(config.archetype_set[j]));
      }
    }
  } else if (n > 0) {
    throw std::invalid_argument("num_objects > 0 with empty archetype_set");
  }
  detail::place_objects(scene, std::move(kinds), rng);
  return scene;
}

// Re-poses the remaining objects with a fresh stream from the scene RNG once
// 'threshold' picks have accumulated; identity otherwise.
inline DepthScene maybe_rearrange(const DepthScene& scene, int threshold = 50) {
  if (scene.pick_count_since_rearrange < threshold) return scene;
  DepthScene out = scene;
  out.pick_count_since_rearrange = 0;
  out.rearrange_epoch = scene.rearrange_epoch + 1;
  Rng rng(derive_seed(scene.config.seed, "rearrange",
                      static_cast<std::uint64_t>(out.rearrange_epoch)));
  std::vector<ObjectKind> kinds;
  for (const auto& o : scene.objects) kinds.push_back(o.kind);
  out.warnings.clear();
  detail::place_objects(out, std::move(kinds), rng);
  // keep original ids: place_objects renumbers from 0, restore by position
  for (size_t i = 0; i < out.objects.size() && i < scene.objects.size(); ++i)
    out.objects[i].id = scene.objects[i].id;
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

// Central differences with per-axis pitch; one-sided at the raster edge.
inline std::array<double, 3> normal_from_depth(const std::vector<double>& depth,
                                               int h, int w, double pitch_y,
                                               double pitch_x, int r, int c) {
  auto d = [&](int rr, int cc) { return depth[static_cast<size_t>(rr) * w + cc]; };
  // height = floor - depth, so dh/dx = -dd/dx
  double hx, hy;
  if (c == 0) hx = -(d(r, 1) - d(r, 0)) / pitch_x;
  else if (c == w - 1) hx = -(d(r, w - 1) - d(r, w - 2)) / pitch_x;
  else hx = -(d(r, c + 1) - d(r, c - 1)) / (2 * pitch_x);
  if (r == 0) hy = -(d(1, c) - d(0, c)) / pitch_y;
  else if (r == h - 1) hy = -(d(h - 1, c) - d(h - 2, c)) / pitch_y;
  else hy = -(d(r + 1, c) - d(r - 1, c)) / (2 * pitch_y);
  const double inv = 1.0 / std::sqrt(hx * hx + hy * hy + 1.0);
  return {-hx * inv, -hy * inv, inv};
}

inline std::array<double, 3> albedo_for(int owner_id, const DepthScene& scene) {
  if (owner_id < 0) return {0.30, 0.30, 0.33};  // floor
  const ObjectInstance* obj = nullptr;
  for (const auto& o : scene.objects)
    if (o.id == owner_id) { obj = &o; break; }
  std::uint64_t hsh = mix_seed(static_cast<std::uint64_t>(owner_id) + 17);
  if (obj) for (char ch : obj->kind.name) hsh = mix_seed(hsh ^ static_cast<std::uint64_t>(ch));
  auto chan = [&](int i) {
    return 0.25 + 0.65 * ((hsh >> (i * 16)) & 0xffff) / 65535.0;
  };
  return {chan(0), chan(1), chan(2)};
}

}  // namespace detail

// Lambertian shading under a fixed overhead light: rgb = albedo * nz.
inline Observation render(const DepthScene& scene) {
  const auto& cfg = scene.config;
  const HeightField hf = compose(scene);
  Observation obs;
  obs.h = cfg.raster_h;
  obs.w = cfg.raster_w;
  const size_t plane = static_cast<size_t>(obs.h) * obs.w;
  obs.depth.resize(plane);
  obs.rgb.resize(3 * plane);
  for (size_t i = 0; i < plane; ++i) obs.depth[i] = kFloorDepth - hf.height[i];

  std::vector<std::array<double, 3>> albedo_cache;
  for (int r = 0; r < obs.h; ++r) {
    for (int c = 0; c < obs.w; ++c) {
      const size_t i = static_cast<size_t>(r) * obs.w + c;
      const auto n = detail::normal_from_depth(obs.depth, obs.h, obs.w,
                                               cfg.pitch_y, cfg.pitch_x, r, c);
      const auto alb = detail::albedo_for(hf.owner[i], scene);
      const double shade = std::max(0.0, n[2]);
      for (int ch = 0; ch < 3; ++ch) obs.rgb[ch * plane + i] = alb[ch] * shade;
    }
  }
  return obs;
}

// Unit outward surface normal (x = column direction, y = row, z up).
inline std::array<double, 3> surface_normal(const Observation& obs,
                                            double pitch_y, double pitch_x,
                                            int r, int c) {
  if (r < 0 || r >= obs.h || c < 0 || c >= obs.w)
    throw std::out_of_range("surface_normal: pixel out of bounds");
  return detail::normal_from_depth(obs.depth, obs.h, obs.w, pitch_y, pitch_x, r, c);
}

// ---------------------------------------------------------------------------
// Suction oracle

// Geometric seal test at 'pixel', standing in for the vacuum feedback sensor:
//   (a) the topmost surface must belong to an object;
//   (b) the depth over the pad disk must fit a plane within eps_seal
//       (a step taller than the seal lip leaks);
//   (c) every surface normal over the pad disk must be within theta_max of
//       vertical;
//   (d) an optional Bernoulli(p_noise) flip to failure.
// (b) is tested before (c): a leaking step dominates the steepness cause.
inline PickOutcome suction_oracle(const DepthScene& scene, int row, int col,
                                  Rng& rng, const OracleParams& op = {}) {
  const auto& cfg = scene.config;
  if (row < 0 || row >= cfg.raster_h || col < 0 || col >= cfg.raster_w)
    throw std::out_of_range("suction_oracle: pixel out of bounds");

  const HeightField hf = compose(scene);
  if (hf.own(row, col) < 0) return {false, PickCause::NotOnObject};

  std::vector<double> depth(hf.height.size());
  for (size_t i = 0; i < depth.size(); ++i) depth[i] = kFloorDepth - hf.height[i];

  // Collect in-bounds pad-disk pixels.
  struct P { int r, c; double x, y, z; };
  std::vector<P> pad;
  const int rp = op.r_pad_px;
  for (int dr = -rp; dr <= rp; ++dr) {
    for (int dc = -rp; dc <= rp; ++dc) {
      if (dr * dr + dc * dc > rp * rp) continue;
      const int r = row + dr, c = col + dc;
      if (r < 0 || r >= cfg.raster_h || c < 0 || c >= cfg.raster_w) continue;
      pad.push_back({r, c, dc * cfg.pitch_x, dr * cfg.pitch_y,
                     depth[static_cast<size_t>(r) * cfg.raster_w + c]});
    }
  }

  // Least-squares plane z = a + b*x + c*y over the pad, max residual test.
  {
    double sx = 0, sy = 0, sz = 0, sxx = 0, sxy = 0, syy = 0, sxz = 0, syz = 0;
    const double n = static_cast<double>(pad.size());
    for (const auto& p : pad) {
      sx += p.x; sy += p.y; sz += p.z;
      sxx += p.x * p.x; sxy += p.x * p.y; syy += p.y * p.y;
      sxz += p.x * p.z; syz += p.y * p.z;
    }
    // Solve the 3x3 normal equations by Cramer's rule.
    const double m00 = n, m01 = sx, m02 = sy;
    const double m11 = sxx, m12 = sxy, m22 = syy;
    const double det = m00 * (m11 * m22 - m12 * m12) - m01 * (m01 * m22 - m12 * m02) +
                       m02 * (m01 * m12 - m11 * m02);
    double a = sz / n, b = 0, c = 0;
    if (std::abs(det) > 1e-30) {
      const double r0 = sz, r1 = sxz, r2 = syz;
      a = (r0 * (m11 * m22 - m12 * m12) - m01 * (r1 * m22 - m12 * r2) +
           m02 * (r1 * m12 - m11 * r2)) / det;
      b = (m00 * (r1 * m22 - m12 * r2) - r0 * (m01 * m22 - m12 * m02) +
           m02 * (m01 * r2 - r1 * m02)) / det;
      c = (m00 * (m11 * r2 - r1 * m12) - m01 * (m01 * r2 - r1 * m02) +
           r0 * (m01 * m12 - m11 * m02)) / det;
    }
    double worst = 0;
    for (const auto& p : pad)
      worst = std::max(worst, std::abs(p.z - (a + b * p.x + c * p.y)));
    if (worst > op.eps_seal_m) return {false, PickCause::SealLeak};
  }

  const double cos_max = std::cos(detail::deg(op.theta_max_deg));
  for (const auto& p : pad) {
    const auto nrm = detail::normal_from_depth(depth, cfg.raster_h, cfg.raster_w,
                                               cfg.pitch_y, cfg.pitch_x, p.r, p.c);
    if (nrm[2] < cos_max) return {false, PickCause::SurfaceTooSteep};
  }

  if (op.p_noise > 0 && rng.bernoulli(op.p_noise))
    return {false, PickCause::NoiseFail};
  return {true, PickCause::SealOk};
}

// Removes the topmost object at 'pixel' on success; always counts the pick.
inline DepthScene apply_pick(const DepthScene& scene, int row, int col,
                             const PickOutcome& outcome) {
  DepthScene out = scene;
  out.pick_count_since_rearrange++;
  if (!outcome.success) return out;
  const HeightField hf = compose(scene);
  const int id = hf.own(row, col);
  if (id < 0)
    throw std::invalid_argument("apply_pick: successful outcome but no object at pixel");
  for (auto it = out.objects.begin(); it != out.objects.end(); ++it) {
    if (it->id == id) {
      out.objects.erase(it);
      return out;
    }
  }
  throw std::invalid_argument("apply_pick: owner object missing from scene");
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json scene_to_json(const DepthScene& scene) {
  nlohmann::json j;
  j["config"] = {{"raster_h", scene.config.raster_h},
                 {"raster_w", scene.config.raster_w},
                 {"pitch_y", scene.config.pitch_y},
                 {"pitch_x", scene.config.pitch_x},
                 {"box_depth", scene.config.box_depth},
                 {"num_objects", scene.config.num_objects},
                 {"archetype_set", scene.config.archetype_set},
                 {"seed", scene.config.seed}};
  j["objects"] = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    j["objects"].push_back({{"id", o.id},
                            {"kind", o.kind.name},
                            {"row", o.pose.row},
                            {"col", o.pose.col},
                            {"yaw", o.pose.yaw},
                            {"tilt", o.pose.tilt}});
  }
  j["pick_count_since_rearrange"] = scene.pick_count_since_rearrange;
  j["rearrange_epoch"] = scene.rearrange_epoch;
  return j;
}

inline DepthScene scene_from_json(const nlohmann::json& j) {
  DepthScene s;
  const auto& c = j.at("config");
  s.config.raster_h = c.at("raster_h").get<int>();
  s.config.raster_w = c.at("raster_w").get<int>();
  s.config.pitch_y = c.at("pitch_y").get<double>();
  s.config.pitch_x = c.at("pitch_x").get<double>();
  s.config.box_depth = c.at("box_depth").get<double>();
  s.config.num_objects = c.at("num_objects").get<int>();
  s.config.archetype_set = c.at("archetype_set").get<std::vector<std::string>>();
  s.config.seed = c.at("seed").get<std::uint64_t>();
  for (const auto& jo : j.at("objects")) {
    ObjectInstance o;
    o.id = jo.at("id").get<int>();
    o.kind = find_kind(jo.at("kind").get<std::string>());
    o.pose.row = jo.at("row").get<double>();
    o.pose.col = jo.at("col").get<double>();
    o.pose.yaw = jo.at("yaw").get<double>();
    o.pose.tilt = jo.at("tilt").get<double>();
    s.objects.push_back(o);
  }
  s.pick_count_since_rearrange = j.at("pick_count_since_rearrange").get<int>();
  s.rearrange_epoch = j.at("rearrange_epoch").get<int>();
  return s;
}

// Observation export: <stem>.json header plus <stem>.bin with raw
// little-endian f32, row-major, depth plane then the three rgb planes.
inline void write_observation(const Observation& obs, const std::string& stem) {
  nlohmann::json hdr = {{"raster_h", obs.h},
                        {"raster_w", obs.w},
                        {"dtype", "f32le"},
                        {"planes", {"depth", "r", "g", "b"}}};
  std::ofstream jf(stem + ".json");
  jf << hdr.dump(2) << "\n";
  std::ofstream bf(stem + ".bin", std::ios::binary);
  auto put = [&](const std::vector<double>& v) {
    for (double d : v) {
      const float f = static_cast<float>(d);
      bf.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  };
  put(obs.depth);
  put(obs.rgb);
  if (!bf) throw std::runtime_error("failed to write " + stem + ".bin");
}

inline Observation read_observation(const std::string& stem) {
  std::ifstream jf(stem + ".json");
  if (!jf) throw std::runtime_error("missing observation header " + stem + ".json");
  nlohmann::json hdr = nlohmann::json::parse(jf);
  Observation obs;
  obs.h = hdr.at("raster_h").get<int>();
  obs.w = hdr.at("raster_w").get<int>();
  const size_t plane = static_cast<size_t>(obs.h) * obs.w;
  std::ifstream bf(stem + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("missing observation payload " + stem + ".bin");
  auto get = [&](std::vector<double>& v, size_t n) {
    v.resize(n);
    for (size_t i = 0; i < n; ++i) {
      float f;
      bf.read(reinterpret_cast<char*>(&f), sizeof(f));
      v[i] = f;
    }
  };
  get(obs.depth, plane);
  get(obs.rgb, 3 * plane);
  if (!bf) throw std::runtime_error("truncated observation payload " + stem + ".bin");
  return obs;
}

}  // namespace binpick
