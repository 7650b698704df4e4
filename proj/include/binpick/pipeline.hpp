#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "binpick/dataset.hpp"
#include "binpick/detect.hpp"
#include "binpick/nn.hpp"
#include "binpick/scene.hpp"

namespace binpick {

// ---------------------------------------------------------------------------
// Greedy-policy schedule

enum class ScheduleForm { Interpolated, Literal };

struct ScheduleParams {
  double alpha_e = 0.05;
  double alpha_s = 0.8;
  double alpha_d = 2000;
  ScheduleForm form = ScheduleForm::Interpolated;
};

// Fraction of picks executed by the greedy policy after n picks.
// Literal is the published formula, which collapses to 1 - alpha_s*e^(-n/aD)
// and drives exploration to zero; Interpolated keeps the residual alpha_e of
// exploration and is the default.
inline double greedy_fraction(double n, const ScheduleParams& sp) {
  if (n < 0) throw std::invalid_argument("greedy_fraction: n < 0");
  const double decay = std::exp(-n / sp.alpha_d);
  double p;
  if (sp.form == ScheduleForm::Literal)
    p = 1.0 - (sp.alpha_e + (sp.alpha_s - sp.alpha_e)) * decay;
  else
    p = 1.0 - (sp.alpha_e + (sp.alpha_s - sp.alpha_e) * decay);
  return std::clamp(p, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Run configuration (defaults mirror the published training setup)

struct RunConfig {
  SceneConfig scene;
  OracleParams oracle;
  ScheduleParams schedule;
  TrainConfig sgpa_train;
  TrainConfig fre_train;
  int sgpa_warm_epochs = 20;  // post-first-checkpoint budgets (warm start)
  int fre_warm_epochs = 60;
  std::uint64_t max_picks = 1000;
  double stop_threshold = 0.90;
  int checkpoint_every = 100;
  int rearrange_every = 50;
  int test_picks = 50;
  int final_test_picks = 150;
  double empty_threshold = 3.0 / 289.0;
  bool empty_box_refill = true;  // refill on EmptyBox; false stops the run
  int omission_trials = 200;
  int omission_max_objects = 3;
  double g_thr = 0.002;
  bool kernel_literal = false;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::vector<std::string> unseen_set = kind_names(unseen_kinds());

  RunConfig() {
    sgpa_train.optimizer = OptimizerKind::Sgd;
    sgpa_train.loss = LossKind::CrossEntropy;
    sgpa_train.epochs = 100;
    fre_train.optimizer = OptimizerKind::Adam;
    fre_train.loss = LossKind::Mse;
    fre_train.epochs = 300;
  }

  KernelE kernel() const {
    return kernel_literal ? KernelE::literal() : KernelE::symmetric();
  }
  DepthNorm depth_norm() const { return {kFloorDepth, scene.box_depth}; }
};

// ---------------------------------------------------------------------------
// Logs

struct PickLogEntry {
  std::uint64_t n = 0;
  bool greedy = false;
  bool fallback_random_point = false;  // greedy pick with all-zero binary map
  bool empty_box = false;              // EmptyBox signal fired (box refilled)
  int region_index = -1;
  int grid_i = -1, grid_j = -1;
  int row = -1, col = -1;
  PickOutcome outcome;
  int eval_count = 0;                  // model forwards used for the decision
  std::vector<double> fre_scores;      // 12 region scores; empty when random
  BinaryMap binary_map{};
  bool has_map = false;
  double wall_time_ms = 0;
};

struct CheckpointEntry {
  std::uint64_t n = 0;
  double success_rate = 0;
  double sgpa_train_loss = 0;
  double sgpa_val_acc = 0;
  double fre_val_mse = 0;
  double omission = 0;
  std::size_t point_samples = 0;
  std::size_t region_samples = 0;
};

struct MetricsLog {
  std::vector<CheckpointEntry> checkpoints;
};

// ---------------------------------------------------------------------------
// Decision helper shared by the learning loop and the test procedures

struct GreedyDecision {
  int region_index = -1;
  std::vector<double> scores;  // 12 FRE scores
  BinaryMap map{};
  bool has_map = false;
  bool fallback = false;
  bool empty_box = false;
  int grid_i = -1, grid_j = -1;
  int row = -1, col = -1;
  int eval_count = 0;
};

// FRE argmax region (ties: lowest index), SGPA binary map, kernel-E point.
// All-zero maps fall back to a uniformly random grid point so the pipeline
// never stalls; rng is consumed only in that case.
template <typename T>
GreedyDecision greedy_decision(const ModelParams<T>& sgpa,
                               const ModelParams<T>& fre, const Observation& obs,
                               const RunConfig& cfg, Rng& rng, Workspace<T>& ws) {
  GreedyDecision d;
  const auto regions = region_candidates(obs.h, obs.w);
  d.scores = fre_scores(fre, obs, std::span<const RegionCandidate>(regions),
                        cfg.depth_norm(), ws);
  d.eval_count += static_cast<int>(regions.size());
  d.region_index = 0;
  for (std::size_t i = 1; i < d.scores.size(); ++i)
    if (d.scores[i] > d.scores[d.region_index]) d.region_index = static_cast<int>(i);
  d.empty_box = d.scores[d.region_index] < cfg.empty_threshold;

  const RegionCandidate region = regions[d.region_index];
  d.map = sgpa_binary_map(sgpa, obs, region, cfg.depth_norm(), ws);
  d.has_map = true;
  d.eval_count += kGridPoints;
  const KernelE kernel = cfg.kernel();
  if (auto sel = select_point(d.map, kernel)) {
    d.grid_i = sel->first;
    d.grid_j = sel->second;
  } else {
    const auto flat = rng.uniform_index(kGridPoints);
    d.grid_i = static_cast<int>(flat) / kGridSide;
    d.grid_j = static_cast<int>(flat) % kGridSide;
    d.fallback = true;
  }
  d.row = region.top_row + 2 + 6 * d.grid_i;
  d.col = region.top_col + 2 + 6 * d.grid_j;
  return d;
}

// ---------------------------------------------------------------------------
// Learning state

struct LearningState {
  RunConfig cfg;
  DepthScene scene;
  ModelParams<float> sgpa;
  ModelParams<float> fre;
  PointDataset points;
  RegionDataset regions;
  std::vector<DepthScene> pending_obs;  // scene snapshots since last checkpoint
  std::vector<PickLogEntry> picklog;
  MetricsLog metrics;
  std::uint64_t n = 0;          // picks executed
  std::uint64_t refills = 0;    // fresh scenes generated
  int checkpoints_done = 0;
  Rng policy_rng{0};
  Rng oracle_rng{0};
  Workspace<float> ws;
};

inline DepthScene fresh_scene(const RunConfig& cfg, std::uint64_t index) {
  SceneConfig sc = cfg.scene;
  sc.seed = derive_seed(cfg.seed, "scene", index);
  return generate_scene(sc);
}

inline LearningState init_learning(const RunConfig& cfg) {
  LearningState st;
  st.cfg = cfg;
  st.scene = fresh_scene(cfg, st.refills++);
  st.sgpa = init_params<float>(HeadKind::Classifier, derive_seed(cfg.seed, "sgpa_init"));
  st.fre = init_params<float>(HeadKind::Regressor, derive_seed(cfg.seed, "fre_init"));
  st.points.source_seeds = {cfg.seed};
  st.regions.source_seeds = {cfg.seed};
  st.policy_rng = Rng(derive_seed(cfg.seed, "policy"));
  st.oracle_rng = Rng(derive_seed(cfg.seed, "oracle"));
  return st;
}

// One pick-and-place cycle: estimate region, pick point, execute, read the
// oracle, record sample and log. Greedy with probability greedy_fraction(n).
inline PickLogEntry& pick_step(LearningState& st) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig& cfg = st.cfg;
  PickLogEntry e;
  e.n = st.n;

  // The operator keeps the box stocked: a truly empty box is refilled before
  // the pick, like re-dumping objects into the real bin.
  if (st.scene.objects.empty() && cfg.empty_box_refill)
    st.scene = fresh_scene(cfg, st.refills++);

  Observation obs = render(st.scene);
  e.greedy = st.policy_rng.bernoulli(
      greedy_fraction(static_cast<double>(st.n), cfg.schedule));

  if (e.greedy) {
    GreedyDecision d = greedy_decision(st.sgpa, st.fre, obs, cfg, st.policy_rng, st.ws);
    e.eval_count = d.eval_count;
    if (d.empty_box) {
      e.empty_box = true;
      if (!cfg.empty_box_refill) {
        // EmptyBox ends the episode: no pick is executed.
        e.wall_time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        st.picklog.push_back(std::move(e));
        return st.picklog.back();
      }
      st.scene = fresh_scene(cfg, st.refills++);
      obs = render(st.scene);
      d = greedy_decision(st.sgpa, st.fre, obs, cfg, st.policy_rng, st.ws);
      e.eval_count += d.eval_count;
    }
    e.region_index = d.region_index;
    e.fre_scores = d.scores;
    e.binary_map = d.map;
    e.has_map = true;
    e.fallback_random_point = d.fallback;
    e.grid_i = d.grid_i;
    e.grid_j = d.grid_j;
    e.row = d.row;
    e.col = d.col;
  } else {
    const auto regions = region_candidates(obs.h, obs.w);
    e.region_index = static_cast<int>(st.policy_rng.uniform_index(regions.size()));
    const auto flat = st.policy_rng.uniform_index(kGridPoints);
    e.grid_i = static_cast<int>(flat) / kGridSide;
    e.grid_j = static_cast<int>(flat) % kGridSide;
    e.row = regions[e.region_index].top_row + 2 + 6 * e.grid_i;
    e.col = regions[e.region_index].top_col + 2 + 6 * e.grid_j;
  }

  e.outcome = suction_oracle(st.scene, e.row, e.col, st.oracle_rng, cfg.oracle);

  PointSample s;
  s.patch = extract_patch(obs, e.row, e.col);
  s.label = e.outcome.success ? 1 : 0;
  s.pick_index = st.n;
  s.row = e.row;
  s.col = e.col;
  st.points.samples.push_back(std::move(s));
  st.pending_obs.push_back(st.scene);

  st.scene = apply_pick(st.scene, e.row, e.col, e.outcome);
  st.scene = maybe_rearrange(st.scene, cfg.rearrange_every);
  st.n++;

  e.wall_time_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  st.picklog.push_back(std::move(e));
  return st.picklog.back();
}

// ---------------------------------------------------------------------------
// Test procedures (isolated from the learning state)

// Pure-greedy picks, one fresh scene per pick. Never touches the datasets.
template <typename T>
double greedy_test(const ModelParams<T>& sgpa, const ModelParams<T>& fre,
                   const RunConfig& cfg, const std::vector<std::string>& kinds,
                   int n_picks, std::uint64_t seed) {
  if (n_picks <= 0) throw std::invalid_argument("greedy_test: n_picks must be > 0");
  Workspace<T> ws;
  Rng rng(derive_seed(seed, "test_policy"));
  Rng orng(derive_seed(seed, "test_oracle"));
  int successes = 0;
  for (int i = 0; i < n_picks; ++i) {
    SceneConfig sc = cfg.scene;
    sc.archetype_set = kinds;
    sc.num_objects = static_cast<int>(kinds.size());
    sc.seed = derive_seed(seed, "test_scene", static_cast<std::uint64_t>(i));
    const DepthScene scene = generate_scene(sc);
    const Observation obs = render(scene);
    const GreedyDecision d = greedy_decision(sgpa, fre, obs, cfg, rng, ws);
    const PickOutcome out = suction_oracle(scene, d.row, d.col, orng, cfg.oracle);
    successes += out.success ? 1 : 0;
  }
  return static_cast<double>(successes) / n_picks;
}

// 150-pick final test on the given object set (known or held-out kinds).
template <typename T>
double final_test(const ModelParams<T>& sgpa, const ModelParams<T>& fre,
                  const RunConfig& cfg, const std::vector<std::string>& kinds,
                  int n_picks, std::uint64_t seed) {
  return greedy_test(sgpa, fre, cfg, kinds, n_picks, seed);
}

namespace detail {

inline bool region_has_object(const HeightField& hf, const RegionCandidate& r) {
  for (int dr = 0; dr < kRegionSize; ++dr)
    for (int dc = 0; dc < kRegionSize; ++dc)
      if (hf.own(r.top_row + dr, r.top_col + dc) >= 0) return true;
  return false;
}

}  // namespace detail

// Omission: fraction of region selections landing on a region that contains
// no object pixel. Scenes are sparse (1..max_objects objects) so that empty
// regions actually exist; the scorer is pluggable for oracle tests.
template <typename ScoreFn>
double measure_omission_with(ScoreFn score_regions, const RunConfig& cfg,
                             int trials, std::uint64_t seed) {
  if (trials <= 0) throw std::invalid_argument("measure_omission: trials must be > 0");
  Rng rng(derive_seed(seed, "omission"));
  int omitted = 0;
  for (int t = 0; t < trials; ++t) {
    SceneConfig sc = cfg.scene;
    sc.num_objects =
        1 + static_cast<int>(rng.uniform_index(
                static_cast<std::uint64_t>(std::max(1, cfg.omission_max_objects))));
    sc.seed = derive_seed(seed, "omission_scene", static_cast<std::uint64_t>(t));
    const DepthScene scene = generate_scene(sc);
    const Observation obs = render(scene);
    const HeightField hf = compose(scene);
    const auto regions = region_candidates(obs.h, obs.w);
    const std::vector<double> scores = score_regions(scene, obs, regions);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    if (!detail::region_has_object(hf, regions[best])) ++omitted;
  }
  return static_cast<double>(omitted) / trials;
}

template <typename T>
double measure_omission(const ModelParams<T>& fre, const RunConfig& cfg,
                        int trials, std::uint64_t seed) {
  Workspace<T> ws;
  return measure_omission_with(
      [&](const DepthScene&, const Observation& obs,
          const std::vector<RegionCandidate>& regions) {
        return fre_scores(fre, obs, std::span<const RegionCandidate>(regions),
                          cfg.depth_norm(), ws);
      },
      cfg, trials, seed);
}

// ---------------------------------------------------------------------------
// Region method comparison (two-step vs full coverage vs random region)

struct MethodReport {
  std::string method;
  int evals_per_decision = 0;
  double omission = 0;
  double success = 0;
};

// Whole-workspace point grid at 6 px stride with a 2 px margin (33x50 points
// on the default raster).
inline std::vector<std::pair<int, int>> full_coverage_grid(int raster_h,
                                                           int raster_w) {
  std::vector<std::pair<int, int>> pts;
  for (int r = 2; r + 2 < raster_h; r += 6)
    for (int c = 2; c + 2 < raster_w; c += 6) pts.emplace_back(r, c);
  return pts;
}

template <typename T>
std::vector<MethodReport> compare_region_methods(const ModelParams<T>& sgpa,
                                                 const ModelParams<T>& fre,
                                                 const RunConfig& cfg, int trials,
                                                 std::uint64_t seed) {
  if (trials <= 0) throw std::invalid_argument("compare: trials must be > 0");
  Workspace<T> ws;
  const KernelE kernel = cfg.kernel();
  const DepthNorm dn = cfg.depth_norm();

  MethodReport two{"fre_sgpa", 0, 0, 0};
  MethodReport full{"full_coverage", 0, 0, 0};
  MethodReport rnd{"random_region", 0, 0, 0};
  int two_om = 0, full_om = 0, rnd_om = 0;
  int two_ok = 0, full_ok = 0, rnd_ok = 0;

  Rng rrng(derive_seed(seed, "compare_random_region"));
  Rng frng(derive_seed(seed, "compare_fallback"));
  Rng orng(derive_seed(seed, "compare_oracle"));

  const auto grid_pts = full_coverage_grid(cfg.scene.raster_h, cfg.scene.raster_w);

  for (int t = 0; t < trials; ++t) {
    SceneConfig sc = cfg.scene;
    sc.num_objects = 1 + t % 2;  // the sparse regime the paper highlights
    sc.seed = derive_seed(seed, "compare_scene", static_cast<std::uint64_t>(t));
    const DepthScene scene = generate_scene(sc);
    const Observation obs = render(scene);
    const HeightField hf = compose(scene);
    const auto regions = region_candidates(obs.h, obs.w);

    // two-step
    {
      GreedyDecision d = greedy_decision(sgpa, fre, obs, cfg, frng, ws);
      two.evals_per_decision = d.eval_count;
      if (!detail::region_has_object(hf, regions[d.region_index])) ++two_om;
      if (suction_oracle(scene, d.row, d.col, orng, cfg.oracle).success) ++two_ok;
    }

    // full coverage: classify every grid point, kernel-E over the big map
    {
      std::vector<Patch> patches;
      patches.reserve(grid_pts.size());
      for (const auto& [r, c] : grid_pts) patches.push_back(extract_patch(obs, r, c));
      std::vector<double> logits(2 * patches.size());
      forward_batch(sgpa, std::span<const Patch>(patches), dn, ws, logits.data());
      full.evals_per_decision = static_cast<int>(patches.size());
      const int rows = (cfg.scene.raster_h - 5) / 6 + 1;
      const int cols = (cfg.scene.raster_w - 5) / 6 + 1;
      std::vector<std::uint8_t> map(grid_pts.size());
      for (std::size_t i = 0; i < grid_pts.size(); ++i)
        map[i] = logits[2 * i + 1] > logits[2 * i] ? 1 : 0;
      int best = -1;
      double best_v = 0;
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          if (!map[i * cols + j]) continue;
          double acc = 0;
          for (int di = -2; di <= 2; ++di) {
            for (int dj = -2; dj <= 2; ++dj) {
              const int r = i + di, c = j + dj;
              if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
              if (map[r * cols + c]) acc += kernel.w[(di + 2) * 5 + (dj + 2)];
            }
          }
          if (best < 0 || acc > best_v) {
            best = i * cols + j;
            best_v = acc;
          }
        }
      }
      int pr, pc;
      if (best >= 0) {
        pr = grid_pts[best].first;
        pc = grid_pts[best].second;
      } else {
        const auto flat = frng.uniform_index(grid_pts.size());
        pr = grid_pts[flat].first;
        pc = grid_pts[flat].second;
      }
      if (hf.own(pr, pc) < 0) ++full_om;  // picked a point with no object
      if (suction_oracle(scene, pr, pc, orng, cfg.oracle).success) ++full_ok;
    }

    // random region + SGPA
    {
      const int ri = static_cast<int>(rrng.uniform_index(regions.size()));
      const BinaryMap map = sgpa_binary_map(sgpa, obs, regions[ri], dn, ws);
      rnd.evals_per_decision = kGridPoints;
      int gi, gj;
      if (auto sel = select_point(map, kernel)) {
        gi = sel->first;
        gj = sel->second;
      } else {
        const auto flat = rrng.uniform_index(kGridPoints);
        gi = static_cast<int>(flat) / kGridSide;
        gj = static_cast<int>(flat) % kGridSide;
      }
      const int pr = regions[ri].top_row + 2 + 6 * gi;
      const int pc = regions[ri].top_col + 2 + 6 * gj;
      if (!detail::region_has_object(hf, regions[ri])) ++rnd_om;
      if (suction_oracle(scene, pr, pc, orng, cfg.oracle).success) ++rnd_ok;
    }
  }

  two.omission = static_cast<double>(two_om) / trials;
  two.success = static_cast<double>(two_ok) / trials;
  full.omission = static_cast<double>(full_om) / trials;
  full.success = static_cast<double>(full_ok) / trials;
  rnd.omission = static_cast<double>(rnd_om) / trials;
  rnd.success = static_cast<double>(rnd_ok) / trials;
  return {two, full, rnd};
}

// ---------------------------------------------------------------------------
// Checkpoint: dataset processing, training, 50-pick test

namespace detail {

inline void expand_rotations(const std::vector<PointSample>& canonical,
                             std::vector<Patch>& patches,
                             std::vector<float>& targets) {
  patches.clear();
  targets.clear();
  patches.reserve(canonical.size() * 16);
  targets.reserve(canonical.size() * 16);
  for (const auto& s : canonical) {
    for (int k = 0; k < 16; ++k) {
      patches.push_back(rotate_patch(s.patch, k));
      targets.push_back(static_cast<float>(s.label));
    }
  }
}

}  // namespace detail

// Every 100 picks: relabel, build FRE labels with the latest SGPA-Net, train
// both nets (warm start after the first checkpoint), then run the 50-pick
// greedy test on fresh scenes. Test picks never enter the datasets.
inline CheckpointEntry checkpoint(LearningState& st) {
  const RunConfig& cfg = st.cfg;
  const DepthNorm dn = cfg.depth_norm();
  const int k = ++st.checkpoints_done;

  // (1) dataset processing: relabel, then label the new observations for FRE
  // with the latest trained SGPA-Net (the one that produced this window)
  st.points = relabel_high_gradient(st.points, cfg.g_thr);
  const std::uint64_t first_pick = st.n - st.pending_obs.size();
  for (std::size_t i = 0; i < st.pending_obs.size(); ++i) {
    const Observation obs = render(st.pending_obs[i]);
    const auto regions = region_candidates(obs.h, obs.w);
    for (const auto& r : regions) {
      RegionSample rs;
      rs.image = downsample_region(obs, r);
      rs.score = static_cast<float>(make_region_label(st.sgpa, obs, r, dn, st.ws));
      rs.top_row = r.top_row;
      rs.top_col = r.top_col;
      rs.pick_index = first_pick + i;
      st.regions.samples.push_back(std::move(rs));
    }
  }
  st.pending_obs.clear();

  // (2) train SGPA then FRE
  CheckpointEntry entry;
  entry.n = st.n;
  {
    auto [train_c, val_c] = split(st.points, 0.7, derive_seed(cfg.seed, "sgpa_split", k));
    std::vector<Patch> tp;
    std::vector<float> tt;
    detail::expand_rotations(train_c.samples, tp, tt);
    std::vector<Patch> vp;
    std::vector<float> vt;
    for (const auto& s : val_c.samples) {
      vp.push_back(s.patch);
      vt.push_back(static_cast<float>(s.label));
    }
    TrainConfig tc = cfg.sgpa_train;
    if (k > 1) tc.epochs = cfg.sgpa_warm_epochs;
    const TrainHistory hist =
        train(st.sgpa, std::span<const Patch>(tp), tt, std::span<const Patch>(vp),
              vt, tc, dn, derive_seed(cfg.seed, "sgpa_train", k));
    if (!hist.epochs.empty()) {
      entry.sgpa_train_loss = hist.epochs.back().train_loss;
      entry.sgpa_val_acc = hist.epochs.back().val_acc;
    }
  }
  {
    auto [train_c, val_c] = split(st.regions, 0.7, derive_seed(cfg.seed, "fre_split", k));
    std::vector<Patch> tp;
    std::vector<float> tt;
    for (const auto& s : train_c.samples) {
      tp.push_back(s.image);
      tt.push_back(s.score);
    }
    std::vector<Patch> vp;
    std::vector<float> vt;
    for (const auto& s : val_c.samples) {
      vp.push_back(s.image);
      vt.push_back(s.score);
    }
    TrainConfig tc = cfg.fre_train;
    if (k > 1) tc.epochs = cfg.fre_warm_epochs;
    const TrainHistory hist =
        train(st.fre, std::span<const Patch>(tp), tt, std::span<const Patch>(vp),
              vt, tc, dn, derive_seed(cfg.seed, "fre_train", k));
    if (!hist.epochs.empty()) entry.fre_val_mse = hist.epochs.back().val_loss;
  }

  // (3) 50-pick greedy test on fresh scenes
  entry.success_rate =
      greedy_test(st.sgpa, st.fre, cfg, cfg.scene.archetype_set, cfg.test_picks,
                  derive_seed(cfg.seed, "checkpoint_test", k));
  entry.omission = measure_omission(st.fre, cfg, cfg.omission_trials,
                                    derive_seed(cfg.seed, "checkpoint_omission", k));
  entry.point_samples = st.points.size();
  entry.region_samples = st.regions.size();
  st.metrics.checkpoints.push_back(entry);
  return entry;
}

// ---------------------------------------------------------------------------
// The full self-supervised learning loop

struct RunResult {
  MetricsLog metrics;
  std::vector<PickLogEntry> picklog;
  ModelParams<float> sgpa;
  ModelParams<float> fre;
  PointDataset points;
  RegionDataset regions;
  std::uint64_t picks_executed = 0;
  bool stopped_early = false;
};

// Deterministic per (config, seed): loops pick_step, checkpoints every 100
// picks, stops at max_picks or when the checkpoint success rate reaches
// stop_threshold (the published stop rule).
inline RunResult run_learning(const RunConfig& cfg) {
  LearningState st = init_learning(cfg);
  bool stopped = false;
  while (st.n < cfg.max_picks) {
    const PickLogEntry& e = pick_step(st);
    if (e.empty_box && !cfg.empty_box_refill) break;  // episode ended
    if (cfg.checkpoint_every > 0 && st.n % cfg.checkpoint_every == 0) {
      const CheckpointEntry c = checkpoint(st);
      if (c.success_rate >= cfg.stop_threshold) {
        stopped = true;
        break;
      }
    }
  }
  RunResult res;
  res.metrics = std::move(st.metrics);
  res.picklog = std::move(st.picklog);
  res.sgpa = std::move(st.sgpa);
  res.fre = std::move(st.fre);
  res.points = std::move(st.points);
  res.regions = std::move(st.regions);
  res.picks_executed = st.n;
  res.stopped_early = stopped;
  return res;
}

// ---------------------------------------------------------------------------
// Exports

inline std::string metrics_csv(const MetricsLog& m) {
  std::string out =
      "n,success_rate,sgpa_train_loss,sgpa_val_acc,fre_val_mse,omission,"
      "point_samples,region_samples\n";
  char buf[256];
  for (const auto& c : m.checkpoints) {
    std::snprintf(buf, sizeof(buf), "%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%zu,%zu\n",
                  static_cast<unsigned long long>(c.n), c.success_rate,
                  c.sgpa_train_loss, c.sgpa_val_acc, c.fre_val_mse, c.omission,
                  c.point_samples, c.region_samples);
    out += buf;
  }
  return out;
}

inline nlohmann::json metrics_json(const MetricsLog& m) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : m.checkpoints) {
    j.push_back({{"n", c.n},
                 {"success_rate", c.success_rate},
                 {"sgpa_train_loss", c.sgpa_train_loss},
                 {"sgpa_val_acc", c.sgpa_val_acc},
                 {"fre_val_mse", c.fre_val_mse},
                 {"omission", c.omission},
                 {"point_samples", c.point_samples},
                 {"region_samples", c.region_samples}});
  }
  return j;
}

inline nlohmann::json picklog_entry_json(const PickLogEntry& e) {
  nlohmann::json j = {{"n", e.n},
                      {"mode", e.greedy ? "greedy" : "random"},
                      {"region", e.region_index},
                      {"grid", {e.grid_i, e.grid_j}},
                      {"pixel", {e.row, e.col}},
                      {"success", e.outcome.success},
                      {"cause", to_string(e.outcome.cause)},
                      {"eval_count", e.eval_count},
                      {"wall_time_ms", e.wall_time_ms}};
  if (e.greedy) {
    j["fre_scores"] = e.fre_scores;
    std::string map;
    map.reserve(kGridPoints);
    for (const auto v : e.binary_map) map.push_back(v ? '1' : '0');
    j["binary_map"] = map;
    j["fallback_random_point"] = e.fallback_random_point;
  }
  if (e.empty_box) j["empty_box"] = true;
  return j;
}

}  // namespace binpick
