#include "binpick/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace binpick;

namespace {

SceneConfig small_config(std::uint64_t seed, int num_objects) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.num_objects = num_objects;
  if (num_objects != static_cast<int>(cfg.archetype_set.size()) && num_objects > 0)
    cfg.archetype_set = kind_names(known_kinds());
  return cfg;
}

DepthScene single_object_scene(const ObjectKind& kind, double row, double col,
                               double yaw = 0, double tilt = 0) {
  DepthScene s;
  s.config = small_config(1, 0);
  ObjectInstance o;
  o.id = 0;
  o.kind = kind;
  o.pose = {row, col, yaw, tilt};
  s.objects.push_back(o);
  return s;
}

}  // namespace

TEST(GenerateScene, EmptyBoxIsFloorOnly) {
  const DepthScene s = generate_scene(small_config(7, 0));
  const Observation obs = render(s);
  for (double d : obs.depth) EXPECT_DOUBLE_EQ(d, kFloorDepth);
}

TEST(GenerateScene, DeterministicPerSeed) {
  const DepthScene a = generate_scene(small_config(7, 10));
  const DepthScene b = generate_scene(small_config(7, 10));
  EXPECT_EQ(scene_to_json(a).dump(), scene_to_json(b).dump());
  EXPECT_EQ(a.objects.size(), 10u);
}

TEST(GenerateScene, DifferentSeedsDiffer) {
  const DepthScene a = generate_scene(small_config(7, 10));
  const DepthScene b = generate_scene(small_config(8, 10));
  EXPECT_NE(scene_to_json(a).dump(), scene_to_json(b).dump());
}

TEST(Render, FlatBoxPlateau) {
  const ObjectKind box{"box", Archetype::FlatBox, 0.06, 0.05, 0.03};
  const DepthScene s = single_object_scene(box, 100, 150);
  const Observation obs = render(s);
  // interior of the footprint: depth = floor - height
  EXPECT_DOUBLE_EQ(obs.at(100, 150), kFloorDepth - 0.03);
  EXPECT_DOUBLE_EQ(obs.at(95, 140), kFloorDepth - 0.03);
  // far corner is floor
  EXPECT_DOUBLE_EQ(obs.at(5, 5), kFloorDepth);
}

TEST(Render, SphereApexDepth) {
  const double r = 0.035;
  const ObjectKind sph{"sph", Archetype::Sphere, r};
  const DepthScene s = single_object_scene(sph, 100, 150);
  const Observation obs = render(s);
  double min_depth = 1e9;
  for (double d : obs.depth) min_depth = std::min(min_depth, d);
  EXPECT_NEAR(min_depth, kFloorDepth - 2 * r, 1e-12);
  EXPECT_NEAR(obs.at(100, 150), kFloorDepth - 2 * r, 1e-12);
}

TEST(Render, ShadingInUnitRange) {
  const DepthScene s = generate_scene(small_config(3, 10));
  const Observation obs = render(s);
  for (double v : obs.rgb) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SurfaceNormal, FlatInteriorPointsUp) {
  const ObjectKind box{"box", Archetype::FlatBox, 0.06, 0.05, 0.03};
  const DepthScene s = single_object_scene(box, 100, 150);
  const Observation obs = render(s);
  const auto n = surface_normal(obs, s.config.pitch_y, s.config.pitch_x, 100, 150);
  EXPECT_DOUBLE_EQ(n[0], 0);
  EXPECT_DOUBLE_EQ(n[1], 0);
  EXPECT_DOUBLE_EQ(n[2], 1);
}

TEST(SurfaceNormal, UnitSlopePlane) {
  // synthetic observation: height rises 1 meter per meter along +x
  Observation obs;
  obs.h = 8;
  obs.w = 8;
  const double pitch = 0.001;
  obs.depth.resize(64);
  obs.rgb.assign(3 * 64, 0.0);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) obs.depth[r * 8 + c] = 1.0 - c * pitch;
  const auto n = surface_normal(obs, pitch, pitch, 4, 4);
  EXPECT_NEAR(n[0], -1 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(n[1], 0, 1e-12);
  EXPECT_NEAR(n[2], 1 / std::sqrt(2.0), 1e-12);
}

TEST(SurfaceNormal, SphereApexVertical) {
  const ObjectKind sph{"sph", Archetype::Sphere, 0.035};
  const DepthScene s = single_object_scene(sph, 100, 150);
  const Observation obs = render(s);
  const auto n = surface_normal(obs, s.config.pitch_y, s.config.pitch_x, 100, 150);
  EXPECT_NEAR(n[2], 1.0, 1e-6);
}

TEST(SurfaceNormal, EdgePixelsUseOneSidedDifferences) {
  Observation obs;
  obs.h = 4;
  obs.w = 4;
  obs.depth.assign(16, 0.5);
  obs.rgb.assign(48, 0.0);
  const auto n = surface_normal(obs, 0.001, 0.001, 0, 0);
  EXPECT_DOUBLE_EQ(n[2], 1.0);
  EXPECT_THROW(surface_normal(obs, 0.001, 0.001, -1, 0), std::out_of_range);
}

TEST(SuctionOracle, FlatBoxCenterSeals) {
  const ObjectKind box{"box", Archetype::FlatBox, 0.06, 0.05, 0.03};
  const DepthScene s = single_object_scene(box, 100, 150);
  Rng rng(0);
  const PickOutcome out = suction_oracle(s, 100, 150, rng);
  EXPECT_TRUE(out.success);
  EXPECT_EQ(out.cause, PickCause::SealOk);
}

TEST(SuctionOracle, FloorIsNotOnObject) {
  const DepthScene s = generate_scene(small_config(7, 0));
  Rng rng(0);
  const PickOutcome out = suction_oracle(s, 100, 150, rng);
  EXPECT_FALSE(out.success);
  EXPECT_EQ(out.cause, PickCause::NotOnObject);
}

TEST(SuctionOracle, SteepSphereFlankFails) {
  const double r = 0.035;
  const ObjectKind sph{"sph", Archetype::Sphere, r};
  const DepthScene s = single_object_scene(sph, 100, 150);
  // polar angle ~40 deg: offset = r*sin(40 deg) along +x from the apex
  const int dc = static_cast<int>(std::round(r * std::sin(40 * M_PI / 180.0) /
                                             s.config.pitch_x));
  Rng rng(0);
  const PickOutcome out = suction_oracle(s, 100, 150 + dc, rng);
  EXPECT_FALSE(out.success);
  EXPECT_EQ(out.cause, PickCause::SurfaceTooSteep);
}

TEST(SuctionOracle, BoxEdgeLeaks) {
  const ObjectKind box{"box", Archetype::FlatBox, 0.06, 0.05, 0.03};
  const DepthScene s = single_object_scene(box, 100, 150);
  // 0.06/2 = 0.03 m => 18 px half-length; 3 px inside the +x edge, so the
  // 7 px pad disk spans the 30 mm drop
  Rng rng(0);
  const PickOutcome out = suction_oracle(s, 100, 150 + 15, rng);
  EXPECT_FALSE(out.success);
  EXPECT_EQ(out.cause, PickCause::SealLeak);
}

TEST(SuctionOracle, TiltAtBoundary) {
  const ObjectKind tb{"tb", Archetype::TiltedBox, 0.08, 0.06, 0.03};
  DepthScene shallow = single_object_scene(tb, 100, 150, 0, 20 * M_PI / 180);
  DepthScene steep = single_object_scene(tb, 100, 150, 0, 40 * M_PI / 180);
  Rng rng(0);
  EXPECT_TRUE(suction_oracle(shallow, 100, 150, rng).success);
  const PickOutcome out = suction_oracle(steep, 100, 150, rng);
  EXPECT_FALSE(out.success);
  EXPECT_EQ(out.cause, PickCause::SurfaceTooSteep);
}

TEST(SuctionOracle, NoiseFlipsSuccess) {
  const ObjectKind box{"box", Archetype::FlatBox, 0.06, 0.05, 0.03};
  const DepthScene s = single_object_scene(box, 100, 150);
  OracleParams op;
  op.p_noise = 1.0;
  Rng rng(0);
  const PickOutcome out = suction_oracle(s, 100, 150, rng, op);
  EXPECT_FALSE(out.success);
  EXPECT_EQ(out.cause, PickCause::NoiseFail);
}

TEST(ApplyPick, SuccessRemovesTopmostObject) {
  DepthScene s = generate_scene(small_config(7, 10));
  const HeightField hf = compose(s);
  // find an object pixel
  int pr = -1, pc = -1;
  for (int r = 0; r < hf.h && pr < 0; ++r)
    for (int c = 0; c < hf.w && pr < 0; ++c)
      if (hf.own(r, c) >= 0) { pr = r; pc = c; }
  ASSERT_GE(pr, 0);
  const DepthScene after = apply_pick(s, pr, pc, {true, PickCause::SealOk});
  EXPECT_EQ(after.objects.size(), 9u);
  EXPECT_EQ(after.pick_count_since_rearrange, 1);
}

TEST(ApplyPick, FailureKeepsObjects) {
  DepthScene s = generate_scene(small_config(7, 10));
  const DepthScene after = apply_pick(s, 0, 0, {false, PickCause::NotOnObject});
  EXPECT_EQ(after.objects.size(), 10u);
  EXPECT_EQ(after.pick_count_since_rearrange, 1);
}

TEST(ApplyPick, DoublePickThrows) {
  const ObjectKind box{"box", Archetype::FlatBox, 0.06, 0.05, 0.03};
  DepthScene s = single_object_scene(box, 100, 150);
  const DepthScene after = apply_pick(s, 100, 150, {true, PickCause::SealOk});
  EXPECT_TRUE(after.objects.empty());
  EXPECT_THROW(apply_pick(after, 100, 150, {true, PickCause::SealOk}),
               std::invalid_argument);
}

TEST(HeightfieldMonotonicity, RemovingAnObjectOnlyRecedes) {
  DepthScene s = generate_scene(small_config(11, 10));
  const Observation before = render(s);
  DepthScene removed = s;
  removed.objects.erase(removed.objects.begin() + 3);
  const Observation after = render(removed);
  for (std::size_t i = 0; i < before.depth.size(); ++i)
    EXPECT_GE(after.depth[i] + 1e-12, before.depth[i]);
}

TEST(OracleSoundness, SealImpliesVerticalCenterNormal) {
  OracleParams op;
  const double cos_max = std::cos(op.theta_max_deg * M_PI / 180.0);
  int seals = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const DepthScene s = generate_scene(small_config(100 + seed, 10));
    const Observation obs = render(s);
    Rng rng(seed);
    Rng pix(seed * 77 + 1);
    for (int t = 0; t < 60; ++t) {
      const int r = static_cast<int>(pix.uniform_index(s.config.raster_h));
      const int c = static_cast<int>(pix.uniform_index(s.config.raster_w));
      const PickOutcome out = suction_oracle(s, r, c, rng, op);
      if (!out.success) continue;
      ++seals;
      const auto n = surface_normal(obs, s.config.pitch_y, s.config.pitch_x, r, c);
      EXPECT_GE(n[2], cos_max - 1e-9);
    }
  }
  EXPECT_GT(seals, 0);  // the property must actually get exercised
}

TEST(MaybeRearrange, BelowThresholdIsIdentity) {
  DepthScene s = generate_scene(small_config(7, 10));
  s.pick_count_since_rearrange = 49;
  const DepthScene after = maybe_rearrange(s);
  EXPECT_EQ(scene_to_json(after).dump(), scene_to_json(s).dump());
}

TEST(MaybeRearrange, AtThresholdReposesSameKinds) {
  DepthScene s = generate_scene(small_config(7, 10));
  s.pick_count_since_rearrange = 50;
  const DepthScene after = maybe_rearrange(s);
  EXPECT_EQ(after.pick_count_since_rearrange, 0);
  EXPECT_EQ(after.rearrange_epoch, 1);
  ASSERT_EQ(after.objects.size(), s.objects.size());
  bool any_moved = false;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    EXPECT_EQ(after.objects[i].kind.name, s.objects[i].kind.name);
    if (std::abs(after.objects[i].pose.row - s.objects[i].pose.row) > 1e-9)
      any_moved = true;
  }
  EXPECT_TRUE(any_moved);
}

TEST(MaybeRearrange, EmptySceneJustResetsCounter) {
  DepthScene s = generate_scene(small_config(7, 0));
  s.pick_count_since_rearrange = 50;
  const DepthScene after = maybe_rearrange(s);
  EXPECT_EQ(after.pick_count_since_rearrange, 0);
  EXPECT_TRUE(after.objects.empty());
}

TEST(SceneSerialization, JsonRoundTrip) {
  const DepthScene s = generate_scene(small_config(42, 10));
  const DepthScene back = scene_from_json(scene_to_json(s));
  EXPECT_EQ(scene_to_json(back).dump(), scene_to_json(s).dump());
  // the round-tripped scene renders identically
  const Observation a = render(s), b = render(back);
  EXPECT_EQ(a.depth, b.depth);
}

TEST(ObservationExport, HeaderPlusRawF32RoundTrip) {
  const DepthScene s = generate_scene(small_config(42, 5));
  const Observation obs = render(s);
  const std::string stem =
      (std::filesystem::temp_directory_path() / "binpick_obs_test").string();
  write_observation(obs, stem);
  const Observation back = read_observation(stem);
  ASSERT_EQ(back.h, obs.h);
  ASSERT_EQ(back.w, obs.w);
  for (std::size_t i = 0; i < obs.depth.size(); ++i)
    EXPECT_EQ(static_cast<float>(obs.depth[i]), static_cast<float>(back.depth[i]));
  std::filesystem::remove(stem + ".json");
  std::filesystem::remove(stem + ".bin");
}

TEST(Determinism, RenderIsBitIdentical) {
  const DepthScene s = generate_scene(small_config(9, 10));
  const Observation a = render(s), b = render(s);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.rgb, b.rgb);
}
