#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "binpick/pipeline.hpp"

namespace binpick {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& ok,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!ok.count(key))
      throw ConfigError("unknown config key '" + key + "' in " + where);
}

template <typename T>
void opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("bad value for config key '") + key + "'");
    }
  }
}

}  // namespace detail

// Parses a RunConfig with full defaulting; unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  detail::reject_unknown(j, {"scene", "oracle", "schedule", "sgpa_train",
                             "fre_train", "pipeline", "kernel", "seed",
                             "out_dir", "unseen_set"},
                         "top level");
  using detail::opt;
  using detail::reject_unknown;

  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    reject_unknown(s, {"raster_h", "raster_w", "pitch_y", "pitch_x", "box_depth",
                       "num_objects", "archetype_set"},
                   "scene");
    opt(s, "raster_h", cfg.scene.raster_h);
    opt(s, "raster_w", cfg.scene.raster_w);
    opt(s, "pitch_y", cfg.scene.pitch_y);
    opt(s, "pitch_x", cfg.scene.pitch_x);
    opt(s, "box_depth", cfg.scene.box_depth);
    opt(s, "num_objects", cfg.scene.num_objects);
    opt(s, "archetype_set", cfg.scene.archetype_set);
  }
  if (j.contains("oracle")) {
    const auto& s = j.at("oracle");
    reject_unknown(s, {"r_pad_px", "theta_max_deg", "eps_seal_m", "p_noise"},
                   "oracle");
    opt(s, "r_pad_px", cfg.oracle.r_pad_px);
    opt(s, "theta_max_deg", cfg.oracle.theta_max_deg);
    opt(s, "eps_seal_m", cfg.oracle.eps_seal_m);
    opt(s, "p_noise", cfg.oracle.p_noise);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown(s, {"alpha_e", "alpha_s", "alpha_d", "form"}, "schedule");
    opt(s, "alpha_e", cfg.schedule.alpha_e);
    opt(s, "alpha_s", cfg.schedule.alpha_s);
    opt(s, "alpha_d", cfg.schedule.alpha_d);
    std::string form = "interpolated";
    opt(s, "form", form);
    if (form == "interpolated") cfg.schedule.form = ScheduleForm::Interpolated;
    else if (form == "literal") cfg.schedule.form = ScheduleForm::Literal;
    else throw ConfigError("schedule.form must be 'interpolated' or 'literal'");
  }
  auto parse_train = [&](const char* name, TrainConfig& tc, int& warm) {
    if (!j.contains(name)) return;
    const auto& s = j.at(name);
    reject_unknown(s, {"optimizer", "loss", "learning_rate", "momentum",
                       "weight_decay", "beta1", "beta2", "eps", "epochs",
                       "warm_epochs", "batch_size"},
                   name);
    std::string optname = tc.optimizer == OptimizerKind::Sgd ? "sgd" : "adam";
    opt(s, "optimizer", optname);
    if (optname == "sgd") tc.optimizer = OptimizerKind::Sgd;
    else if (optname == "adam") tc.optimizer = OptimizerKind::Adam;
    else throw ConfigError(std::string(name) + ".optimizer must be 'sgd' or 'adam'");
    std::string lossname = tc.loss == LossKind::CrossEntropy ? "cross_entropy" : "mse";
    opt(s, "loss", lossname);
    if (lossname == "cross_entropy") tc.loss = LossKind::CrossEntropy;
    else if (lossname == "mse") tc.loss = LossKind::Mse;
    else throw ConfigError(std::string(name) + ".loss must be 'cross_entropy' or 'mse'");
    opt(s, "learning_rate", tc.learning_rate);
    opt(s, "momentum", tc.momentum);
    opt(s, "weight_decay", tc.weight_decay);
    opt(s, "beta1", tc.beta1);
    opt(s, "beta2", tc.beta2);
    opt(s, "eps", tc.eps);
    opt(s, "epochs", tc.epochs);
    opt(s, "warm_epochs", warm);
    opt(s, "batch_size", tc.batch_size);
    if (tc.epochs < 0 || tc.batch_size <= 0)
      throw ConfigError(std::string(name) + ": epochs/batch_size out of range");
  };
  parse_train("sgpa_train", cfg.sgpa_train, cfg.sgpa_warm_epochs);
  parse_train("fre_train", cfg.fre_train, cfg.fre_warm_epochs);

  if (j.contains("pipeline")) {
    const auto& s = j.at("pipeline");
    reject_unknown(s, {"max_picks", "stop_threshold", "checkpoint_every",
                       "rearrange_every", "test_picks", "final_test_picks",
                       "empty_threshold", "empty_box_action", "omission_trials",
                       "omission_max_objects", "g_thr"},
                   "pipeline");
    opt(s, "max_picks", cfg.max_picks);
    opt(s, "stop_threshold", cfg.stop_threshold);
    opt(s, "checkpoint_every", cfg.checkpoint_every);
    opt(s, "rearrange_every", cfg.rearrange_every);
    opt(s, "test_picks", cfg.test_picks);
    opt(s, "final_test_picks", cfg.final_test_picks);
    opt(s, "empty_threshold", cfg.empty_threshold);
    std::string action = cfg.empty_box_refill ? "refill" : "stop";
    opt(s, "empty_box_action", action);
    if (action == "refill") cfg.empty_box_refill = true;
    else if (action == "stop") cfg.empty_box_refill = false;
    else throw ConfigError("pipeline.empty_box_action must be 'refill' or 'stop'");
    opt(s, "omission_trials", cfg.omission_trials);
    opt(s, "omission_max_objects", cfg.omission_max_objects);
    opt(s, "g_thr", cfg.g_thr);
  }
  if (j.contains("kernel")) {
    const std::string k = j.at("kernel").get<std::string>();
    if (k == "symmetric") cfg.kernel_literal = false;
    else if (k == "literal") cfg.kernel_literal = true;
    else throw ConfigError("kernel must be 'symmetric' or 'literal'");
  }
  detail::opt(j, "seed", cfg.seed);
  detail::opt(j, "out_dir", cfg.out_dir);
  detail::opt(j, "unseen_set", cfg.unseen_set);

  // sanity bounds
  if (!(cfg.schedule.alpha_e >= 0 && cfg.schedule.alpha_e <= cfg.schedule.alpha_s &&
        cfg.schedule.alpha_s <= 1))
    throw ConfigError("schedule: need 0 <= alpha_e <= alpha_s <= 1");
  if (cfg.schedule.alpha_d <= 0) throw ConfigError("schedule.alpha_d must be > 0");
  if (cfg.scene.num_objects < 0) throw ConfigError("scene.num_objects must be >= 0");
  for (const auto& name : cfg.scene.archetype_set) find_kind(name);
  for (const auto& name : cfg.unseen_set) find_kind(name);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["scene"] = {{"raster_h", cfg.scene.raster_h},
                {"raster_w", cfg.scene.raster_w},
                {"pitch_y", cfg.scene.pitch_y},
                {"pitch_x", cfg.scene.pitch_x},
                {"box_depth", cfg.scene.box_depth},
                {"num_objects", cfg.scene.num_objects},
                {"archetype_set", cfg.scene.archetype_set}};
  j["oracle"] = {{"r_pad_px", cfg.oracle.r_pad_px},
                 {"theta_max_deg", cfg.oracle.theta_max_deg},
                 {"eps_seal_m", cfg.oracle.eps_seal_m},
                 {"p_noise", cfg.oracle.p_noise}};
  j["schedule"] = {
      {"alpha_e", cfg.schedule.alpha_e},
      {"alpha_s", cfg.schedule.alpha_s},
      {"alpha_d", cfg.schedule.alpha_d},
      {"form", cfg.schedule.form == ScheduleForm::Literal ? "literal" : "interpolated"}};
  auto train_json = [](const TrainConfig& tc, int warm) {
    return nlohmann::json{
        {"optimizer", tc.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"},
        {"loss", tc.loss == LossKind::CrossEntropy ? "cross_entropy" : "mse"},
        {"learning_rate", tc.learning_rate},
        {"momentum", tc.momentum},
        {"weight_decay", tc.weight_decay},
        {"beta1", tc.beta1},
        {"beta2", tc.beta2},
        {"eps", tc.eps},
        {"epochs", tc.epochs},
        {"warm_epochs", warm},
        {"batch_size", tc.batch_size}};
  };
  j["sgpa_train"] = train_json(cfg.sgpa_train, cfg.sgpa_warm_epochs);
  j["fre_train"] = train_json(cfg.fre_train, cfg.fre_warm_epochs);
  j["pipeline"] = {{"max_picks", cfg.max_picks},
                   {"stop_threshold", cfg.stop_threshold},
                   {"checkpoint_every", cfg.checkpoint_every},
                   {"rearrange_every", cfg.rearrange_every},
                   {"test_picks", cfg.test_picks},
                   {"final_test_picks", cfg.final_test_picks},
                   {"empty_threshold", cfg.empty_threshold},
                   {"empty_box_action", cfg.empty_box_refill ? "refill" : "stop"},
                   {"omission_trials", cfg.omission_trials},
                   {"omission_max_objects", cfg.omission_max_objects},
                   {"g_thr", cfg.g_thr}};
  j["kernel"] = cfg.kernel_literal ? "literal" : "symmetric";
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["unseen_set"] = cfg.unseen_set;
  return j;
}

}  // namespace binpick
