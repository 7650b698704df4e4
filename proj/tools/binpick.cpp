// binpick: self-supervised suction-grasp learning in a synthetic bin.
//   learn     run the learning loop, write metrics/logs/weights/datasets
//   test      n-pick greedy test with trained weights (known or unseen set)
//   compare   region-method comparison table (two-step / full / random)
//   gradcheck finite-difference check of the network gradients

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "binpick/config.hpp"
#include "binpick/dataset.hpp"
#include "binpick/nn.hpp"
#include "binpick/pipeline.hpp"

namespace fs = std::filesystem;
using namespace binpick;

namespace {

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

void apply_overrides(RunConfig& cfg, const std::string& kernel,
                     const std::string& schedule, std::uint64_t* seed,
                     const std::string& out) {
  if (!kernel.empty()) {
    if (kernel == "symmetric") cfg.kernel_literal = false;
    else if (kernel == "literal") cfg.kernel_literal = true;
    else throw ConfigError("--kernel must be symmetric or literal");
  }
  if (!schedule.empty()) {
    if (schedule == "interpolated") cfg.schedule.form = ScheduleForm::Interpolated;
    else if (schedule == "literal") cfg.schedule.form = ScheduleForm::Literal;
    else throw ConfigError("--schedule must be interpolated or literal");
  }
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
}

int cmd_learn(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const RunResult res = run_learning(cfg);

  write_atomic(cfg.out_dir + "/metrics.csv", metrics_csv(res.metrics));
  write_atomic(cfg.out_dir + "/metrics.json", metrics_json(res.metrics).dump(2) + "\n");
  {
    std::string jsonl;
    for (const auto& e : res.picklog) jsonl += picklog_entry_json(e).dump() + "\n";
    write_atomic(cfg.out_dir + "/picklog.jsonl", jsonl);
  }
  write_atomic(cfg.out_dir + "/resolved_config.json", config_to_json(cfg).dump(2) + "\n");

  const std::string sgpa_tmp = cfg.out_dir + "/sgpa_weights.bin.tmp";
  save_weights(res.sgpa, sgpa_tmp);
  fs::rename(sgpa_tmp, cfg.out_dir + "/sgpa_weights.bin");
  const std::string fre_tmp = cfg.out_dir + "/fre_weights.bin.tmp";
  save_weights(res.fre, fre_tmp);
  fs::rename(fre_tmp, cfg.out_dir + "/fre_weights.bin");

  save(res.points, cfg.out_dir + "/point_dataset");
  save(res.regions, cfg.out_dir + "/region_dataset");

  std::printf("picks: %llu%s\n", static_cast<unsigned long long>(res.picks_executed),
              res.stopped_early ? " (stopped at success threshold)" : "");
  if (!res.metrics.checkpoints.empty()) {
    const auto& last = res.metrics.checkpoints.back();
    std::printf("final checkpoint: n=%llu success=%.3f omission=%.3f\n",
                static_cast<unsigned long long>(last.n), last.success_rate,
                last.omission);
  }
  return 0;
}

int cmd_test(const RunConfig& cfg, const std::string& weights_dir, bool unseen,
             int n_picks, std::uint64_t seed) {
  if (n_picks <= 0) throw ConfigError("--n must be > 0");
  const auto sgpa = load_weights<float>(weights_dir + "/sgpa_weights.bin");
  const auto fre = load_weights<float>(weights_dir + "/fre_weights.bin");
  const auto& kinds = unseen ? cfg.unseen_set : cfg.scene.archetype_set;
  const double rate = final_test(sgpa, fre, cfg, kinds, n_picks, seed);
  const int ok = static_cast<int>(std::lround(rate * n_picks));
  std::printf("%d/%d picks succeeded, success rate %.4f (%s objects)\n", ok,
              n_picks, rate, unseen ? "unseen" : "known");
  return 0;
}

int cmd_compare(const RunConfig& cfg, const std::string& weights_dir,
                const std::string& out_path, int trials, std::uint64_t seed) {
  const auto sgpa = load_weights<float>(weights_dir + "/sgpa_weights.bin");
  const auto fre = load_weights<float>(weights_dir + "/fre_weights.bin");
  const auto rows = compare_region_methods(sgpa, fre, cfg, trials, seed);
  std::string csv = "method,eval_count,omission,success\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%.10g\n", r.method.c_str(),
                  r.evals_per_decision, r.omission, r.success);
    csv += buf;
  }
  write_atomic(out_path, csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double inject_error) {
  DepthNorm dn;
  Rng rng(derive_seed(seed, "gradcheck_data"));
  std::vector<Patch> patches(4);
  std::vector<float> cls_targets(4), reg_targets(4);
  for (auto& p : patches) {
    for (auto& v : p.rgb) v = static_cast<float>(rng.uniform01());
    for (auto& v : p.depth)
      v = static_cast<float>(kFloorDepth - 0.12 * rng.uniform01());
  }
  for (auto& t : cls_targets) t = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  for (auto& t : reg_targets) t = static_cast<float>(rng.uniform01());

  auto cls = init_params<double>(HeadKind::Classifier, derive_seed(seed, "cls"));
  auto reg = init_params<double>(HeadKind::Regressor, derive_seed(seed, "reg"));
  const double e1 =
      grad_check(cls, std::span<const Patch>(patches), cls_targets.data(), dn,
                 LossKind::CrossEntropy, seed, inject_error);
  const double e2 =
      grad_check(reg, std::span<const Patch>(patches), reg_targets.data(), dn,
                 LossKind::Mse, seed, inject_error);
  const double worst = std::max(e1, e2);
  std::printf("classifier head: max relative error %.3e\n", e1);
  std::printf("regressor head:  max relative error %.3e\n", e2);
  std::printf("worst: %.3e (%s)\n", worst, worst < 1e-4 ? "PASS" : "FAIL");
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised suction-grasp affordance learning sandbox"};
  app.require_subcommand(1);

  std::string config_path, out_dir, weights_dir, kernel, schedule, compare_out;
  std::uint64_t seed = 0;
  bool seed_set = false, unseen = false;
  int n_picks = 150, trials = 100;
  double inject_error = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config path");
    sub->add_option("--seed", seed, "master seed")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--kernel", kernel, "kernel E variant: symmetric|literal");
    sub->add_option("--schedule", schedule,
                    "Eq.-1 form: interpolated|literal");
  };

  CLI::App* learn = app.add_subcommand("learn", "run the learning loop");
  add_common(learn);
  learn->add_option("--out", out_dir, "output directory");

  CLI::App* test = app.add_subcommand("test", "greedy pick test with weights");
  add_common(test);
  test->add_option("--weights", weights_dir, "directory with *_weights.bin")
      ->required();
  test->add_flag("--unseen", unseen, "use the held-out object set");
  test->add_option("--n", n_picks, "number of test picks");

  CLI::App* compare = app.add_subcommand("compare", "region method comparison");
  add_common(compare);
  compare->add_option("--weights", weights_dir, "directory with *_weights.bin")
      ->required();
  compare->add_option("--out", compare_out, "CSV output path");
  compare->add_option("--trials", trials, "decisions per method");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "gradient finite-difference check");
  gradcheck->add_option("--seed", seed, "seed");
  gradcheck->add_option("--inject-error", inject_error, "test hook: corrupt a gradient")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    apply_overrides(cfg, kernel, schedule, seed_set ? &seed : nullptr, out_dir);

    if (learn->parsed()) return cmd_learn(cfg);
    if (test->parsed())
      return cmd_test(cfg, weights_dir, unseen, n_picks,
                      seed_set ? seed : cfg.seed);
    if (compare->parsed())
      return cmd_compare(cfg, weights_dir,
                         compare_out.empty() ? "compare.csv" : compare_out, trials,
                         seed_set ? seed : cfg.seed);
    if (gradcheck->parsed()) return cmd_gradcheck(seed, inject_error);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
