#include "binpick/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "binpick/detect.hpp"

using namespace binpick;

namespace {

Patch constant_patch(float depth, float rgb = 0.5f) {
  Patch p;
  p.rgb.fill(rgb);
  p.depth.fill(depth);
  return p;
}

Patch step_patch(float base, float drop) {
  Patch p = constant_patch(base);
  for (int r = 0; r < kPatchSize; ++r)
    for (int c = 16; c < kPatchSize; ++c) p.depth[r * kPatchSize + c] = base - drop;
  return p;
}

PointSample sample_with(Patch patch, std::uint8_t label, std::uint64_t pick) {
  PointSample s;
  s.patch = std::move(patch);
  s.label = label;
  s.pick_index = pick;
  return s;
}

Patch random_patch(Rng& rng) {
  Patch p;
  for (auto& v : p.rgb) v = static_cast<float>(rng.uniform01());
  for (auto& v : p.depth) v = static_cast<float>(0.5 - 0.1 * rng.uniform01());
  return p;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST(Relabel, ConstantPatchUntouched) {
  PointDataset ds;
  ds.samples.push_back(sample_with(constant_patch(0.45f), 1, 0));
  const PointDataset out = relabel_high_gradient(ds);
  EXPECT_EQ(out.samples[0].label, 1);
  EXPECT_FALSE(out.samples[0].relabeled);
}

TEST(Relabel, LargeStepForcesNegative) {
  PointDataset ds;
  ds.samples.push_back(sample_with(step_patch(0.5f, 0.03f), 1, 0));  // 30 mm step
  ds.samples.push_back(sample_with(step_patch(0.5f, 0.03f), 0, 1));
  const PointDataset out = relabel_high_gradient(ds);
  EXPECT_EQ(out.samples[0].label, 0);
  EXPECT_TRUE(out.samples[0].relabeled);
  EXPECT_EQ(out.samples[1].label, 0);
  EXPECT_TRUE(out.samples[1].relabeled);
}

TEST(Relabel, NeverFlipsUpAndIsIdempotent) {
  Rng rng(3);
  PointDataset ds;
  for (int i = 0; i < 40; ++i) {
    Patch p = random_patch(rng);
    if (i % 3 == 0) p = step_patch(0.5f, 0.05f);
    ds.samples.push_back(sample_with(std::move(p), rng.bernoulli(0.5) ? 1 : 0,
                                     static_cast<std::uint64_t>(i)));
  }
  const PointDataset once = relabel_high_gradient(ds);
  const PointDataset twice = relabel_high_gradient(once);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_LE(once.samples[i].label, ds.samples[i].label);  // no 0 -> 1
    EXPECT_EQ(once.samples[i].label, twice.samples[i].label);
    EXPECT_EQ(once.samples[i].relabeled, twice.samples[i].relabeled);
  }
}

TEST(Relabel, RejectsNonPositiveThreshold) {
  PointDataset ds;
  ds.samples.push_back(sample_with(constant_patch(0.5f), 1, 0));
  EXPECT_THROW(relabel_high_gradient(ds, 0.0), std::invalid_argument);
}

TEST(Rotations, IdentityAtKZero) {
  Rng rng(4);
  const PointSample s = sample_with(random_patch(rng), 1, 7);
  const auto rots = augment_rotations(s);
  ASSERT_EQ(rots.size(), 16u);
  EXPECT_EQ(rots[0].patch.depth, s.patch.depth);
  EXPECT_EQ(rots[0].patch.rgb, s.patch.rgb);
}

TEST(Rotations, HalfTurnIsExactFlip) {
  Rng rng(5);
  const PointSample s = sample_with(random_patch(rng), 1, 7);
  const Patch r = rotate_patch(s.patch, 8);
  for (int i = 0; i < kPatchSize; ++i)
    for (int j = 0; j < kPatchSize; ++j)
      EXPECT_NEAR(r.depth[i * kPatchSize + j],
                  s.patch.depth[(31 - i) * kPatchSize + (31 - j)], 1e-6);
}

TEST(Rotations, LabelsAndMetadataCopied) {
  Rng rng(6);
  PointSample s = sample_with(random_patch(rng), 1, 42);
  s.row = 10;
  s.col = 20;
  const auto rots = augment_rotations(s);
  ASSERT_EQ(rots.size(), 16u);
  for (const auto& r : rots) {
    EXPECT_EQ(r.label, 1);
    EXPECT_EQ(r.pick_index, 42u);
    EXPECT_EQ(r.row, 10);
  }
}

TEST(Rotations, MeanDepthApproximatelyPreserved) {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const Patch p = random_patch(rng);
    double base = 0;
    for (float d : p.depth) base += d;
    base /= p.depth.size();
    for (int k = 0; k < 16; ++k) {
      const Patch r = rotate_patch(p, k);
      double mean = 0;
      for (float d : r.depth) mean += d;
      mean /= r.depth.size();
      EXPECT_NEAR(mean, base, 1e-3);
    }
  }
}

TEST(Split, SeventyThirty) {
  PointDataset ds;
  Rng rng(8);
  for (int i = 0; i < 10; ++i)
    ds.samples.push_back(sample_with(random_patch(rng), 0, static_cast<std::uint64_t>(i)));
  const auto [train, val] = split(ds, 0.7, 1);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(val.size(), 3u);
}

TEST(Split, DeterministicPerSeedAndPartition) {
  PointDataset ds;
  Rng rng(9);
  for (int i = 0; i < 23; ++i)
    ds.samples.push_back(sample_with(random_patch(rng), 0, static_cast<std::uint64_t>(i)));
  const auto [a_train, a_val] = split(ds, 0.7, 5);
  const auto [b_train, b_val] = split(ds, 0.7, 5);
  auto ids = [](const PointDataset& d) {
    std::vector<std::uint64_t> out;
    for (const auto& s : d.samples) out.push_back(s.pick_index);
    return out;
  };
  EXPECT_EQ(ids(a_train), ids(b_train));
  EXPECT_EQ(ids(a_val), ids(b_val));
  // partition: union is everything, intersection empty
  std::set<std::uint64_t> seen;
  for (auto v : ids(a_train)) EXPECT_TRUE(seen.insert(v).second);
  for (auto v : ids(a_val)) EXPECT_TRUE(seen.insert(v).second);
  EXPECT_EQ(seen.size(), 23u);
}

TEST(Split, RotationSiblingsStayTogether) {
  PointDataset ds;
  Rng rng(10);
  for (int src = 0; src < 8; ++src) {
    const PointSample s = sample_with(random_patch(rng), 1, static_cast<std::uint64_t>(src));
    for (const auto& r : augment_rotations(s)) ds.samples.push_back(r);
  }
  const auto [train, val] = split(ds, 0.7, 3);
  std::set<std::uint64_t> train_ids, val_ids;
  for (const auto& s : train.samples) train_ids.insert(s.pick_index);
  for (const auto& s : val.samples) val_ids.insert(s.pick_index);
  for (auto id : train_ids) EXPECT_EQ(val_ids.count(id), 0u);
  EXPECT_EQ(train.size() + val.size(), ds.size());
  EXPECT_EQ(train.size() % 16, 0u);  // whole groups only
}

TEST(Split, TooSmallThrows) {
  PointDataset ds;
  Rng rng(11);
  ds.samples.push_back(sample_with(random_patch(rng), 0, 0));
  EXPECT_THROW(split(ds, 0.7, 0), std::invalid_argument);
}

TEST(RegionLabel, AllNegativeAndAllPositiveClassifiers) {
  const DepthScene scene = generate_scene([] {
    SceneConfig c;
    c.seed = 3;
    return c;
  }());
  const Observation obs = render(scene);
  const RegionCandidate region{50, 100};
  const DepthNorm dn{kFloorDepth, scene.config.box_depth};
  Workspace<float> ws;

  // zero weights with a biased head force a constant class
  auto all_neg = zero_params<float>(HeadKind::Classifier);
  all_neg.head_b.data[0] = 5.0f;  // logit(class 0) wins everywhere
  EXPECT_DOUBLE_EQ(make_region_label(all_neg, obs, region, dn, ws), 0.0);

  auto all_pos = zero_params<float>(HeadKind::Classifier);
  all_pos.head_b.data[1] = 5.0f;
  EXPECT_DOUBLE_EQ(make_region_label(all_pos, obs, region, dn, ws), 1.0);
}

TEST(RegionLabel, AlwaysAnExactMultipleOf289th) {
  const DepthScene scene = generate_scene([] {
    SceneConfig c;
    c.seed = 5;
    return c;
  }());
  const Observation obs = render(scene);
  const DepthNorm dn{kFloorDepth, scene.config.box_depth};
  Workspace<float> ws;
  const auto params = init_params<float>(HeadKind::Classifier, 17);
  for (const auto& region : region_candidates(obs.h, obs.w)) {
    const double label = make_region_label(params, obs, region, dn, ws);
    const double k = label * 289.0;
    EXPECT_NEAR(k, std::round(k), 1e-9);
    EXPECT_GE(label, 0.0);
    EXPECT_LE(label, 1.0);
    // agrees with counting the binary map directly
    const BinaryMap map = sgpa_binary_map(params, obs, region, dn, ws);
    int count = 0;
    for (auto v : map) count += v;
    EXPECT_DOUBLE_EQ(label, count / 289.0);
  }
}

TEST(Persistence, PointRoundTripBitExact) {
  namespace fs = std::filesystem;
  Rng rng(12);
  PointDataset ds;
  ds.source_seeds = {1, 2};
  for (int i = 0; i < 7; ++i) {
    PointSample s = sample_with(random_patch(rng), i % 2, static_cast<std::uint64_t>(i));
    s.relabeled = (i == 3);
    ds.samples.push_back(std::move(s));
  }
  const std::string dir = (fs::temp_directory_path() / "bp_point_ds").string();
  fs::remove_all(dir);
  save(ds, dir);
  const PointDataset back = load_point_dataset(dir);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.source_seeds, ds.source_seeds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].patch.depth, ds.samples[i].patch.depth);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].relabeled, ds.samples[i].relabeled);
    EXPECT_EQ(back.samples[i].pick_index, ds.samples[i].pick_index);
  }
  // save(load(x)) produces identical bytes
  const std::string dir2 = (fs::temp_directory_path() / "bp_point_ds2").string();
  fs::remove_all(dir2);
  save(back, dir2);
  EXPECT_EQ(file_bytes(dir + "/samples.bin"), file_bytes(dir2 + "/samples.bin"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(Persistence, EmptyDatasetRoundTrips) {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "bp_empty_ds").string();
  fs::remove_all(dir);
  PointDataset ds;
  save(ds, dir);
  const PointDataset back = load_point_dataset(dir);
  EXPECT_EQ(back.size(), 0u);
  fs::remove_all(dir);
}

TEST(Persistence, RegionRoundTrip) {
  namespace fs = std::filesystem;
  Rng rng(13);
  RegionDataset ds;
  for (int i = 0; i < 5; ++i) {
    RegionSample s;
    s.image = random_patch(rng);
    s.score = static_cast<float>((i * 37) % 290 / 289.0);
    s.pick_index = static_cast<std::uint64_t>(i);
    s.top_row = 50;
    s.top_col = 133;
    ds.samples.push_back(std::move(s));
  }
  const std::string dir = (fs::temp_directory_path() / "bp_region_ds").string();
  fs::remove_all(dir);
  save(ds, dir);
  const RegionDataset back = load_region_dataset(dir);
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].score, ds.samples[i].score);
    EXPECT_EQ(back.samples[i].top_col, 133);
    EXPECT_EQ(back.samples[i].image.rgb, ds.samples[i].image.rgb);
  }
  fs::remove_all(dir);
}

TEST(Persistence, CorruptManifestAndTruncationAreDistinctErrors) {
  namespace fs = std::filesystem;
  Rng rng(14);
  PointDataset ds;
  for (int i = 0; i < 3; ++i)
    ds.samples.push_back(sample_with(random_patch(rng), 1, static_cast<std::uint64_t>(i)));
  const std::string dir = (fs::temp_directory_path() / "bp_bad_ds").string();
  fs::remove_all(dir);
  save(ds, dir);

  {  // truncated payload
    const std::string bytes = file_bytes(dir + "/samples.bin");
    std::ofstream f(dir + "/samples.bin", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  try {
    load_point_dataset(dir);
    FAIL() << "expected truncation error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind, DatasetError::Kind::TruncatedPayload);
  }

  fs::remove_all(dir);
  save(ds, dir);
  {  // manifest count mismatch
    std::ifstream mf(dir + "/manifest.json");
    nlohmann::json m = nlohmann::json::parse(mf);
    mf.close();
    m["count"] = 2;
    std::ofstream out(dir + "/manifest.json");
    out << m.dump(2);
  }
  try {
    load_point_dataset(dir);
    FAIL() << "expected count mismatch error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind, DatasetError::Kind::CountMismatch);
  }

  {  // unparseable manifest
    std::ofstream out(dir + "/manifest.json");
    out << "{not json";
  }
  try {
    load_point_dataset(dir);
    FAIL() << "expected manifest error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind, DatasetError::Kind::CorruptManifest);
  }
  fs::remove_all(dir);
}
