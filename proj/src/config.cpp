#include "grasp/config.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include "grasp/errors.hpp"

namespace grasp {
namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": bad numeric value '" + value + "'");
  }
}

float parse_float(const std::string& key, const std::string& value) {
  return static_cast<float>(parse_double(key, value));
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError(key + ": expected integer, got '" + value + "'");
  }
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": bad unsigned value '" + value + "'");
  }
}

// Comma-separated float list, e.g. "-20,0,20".
std::vector<float> parse_float_list(const std::string& key,
                                    const std::string& value) {
  std::vector<float> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_float(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
  AugmentationConfig& a = cfg.augment;
  TrainConfig& t = cfg.train;
  ReptileConfig& r = cfg.reptile;
  ControllerConfig& c = cfg.controller;
  if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "pos_rotation_range") a.pos_rotation_range = parse_float(key, value);
  else if (key == "neg_rotation_range") a.neg_rotation_range = parse_float(key, value);
  else if (key == "neg_center_exclusion_radius") a.neg_center_exclusion_radius = parse_float(key, value);
  else if (key == "brightness_lo") a.brightness_lo = parse_float(key, value);
  else if (key == "brightness_hi") a.brightness_hi = parse_float(key, value);
  else if (key == "contrast_lo") a.contrast_lo = parse_float(key, value);
  else if (key == "contrast_hi") a.contrast_hi = parse_float(key, value);
  else if (key == "cross_negative_fraction") a.cross_negative_fraction = parse_float(key, value);
  else if (key == "iterations") t.iterations = parse_int(key, value);
  else if (key == "batch_size") t.batch_size = parse_int(key, value);
  else if (key == "lr") t.lr = parse_double(key, value);
  else if (key == "beta1") t.beta1 = parse_double(key, value);
  else if (key == "beta2") t.beta2 = parse_double(key, value);
  else if (key == "scheme") t.scheme = parse_scheme(value);
  else if (key == "eval_every") t.eval_every = parse_int(key, value);
  else if (key == "val_positives") t.val_positives = parse_int(key, value);
  else if (key == "val_negatives") t.val_negatives = parse_int(key, value);
  else if (key == "pos_fraction") t.pos_fraction = parse_float(key, value);
  else if (key == "outer_iterations") r.outer_iterations = parse_int(key, value);
  else if (key == "outer_step") r.outer_step = parse_double(key, value);
  else if (key == "meta_batch") r.meta_batch = parse_int(key, value);
  else if (key == "inner_iterations") r.inner_iterations = parse_int(key, value);
  else if (key == "inner_batch") r.inner_batch = parse_int(key, value);
  else if (key == "inner_lr") r.inner_lr = parse_double(key, value);
  else if (key == "inner_beta1") r.inner_beta1 = parse_double(key, value);
  else if (key == "finetune_iterations") r.finetune_iterations = parse_int(key, value);
  else if (key == "finetune_batch") r.finetune_batch = parse_int(key, value);
  else if (key == "gain_mm_per_px") c.gain_mm_per_px = parse_float(key, value);
  else if (key == "max_step_mm") c.max_step_mm = parse_float(key, value);
  else if (key == "center_tol_px") c.center_tol_px = parse_float(key, value);
  else if (key == "rotation_set_deg") c.rotation_set_deg = parse_float_list(key, value);
  else if (key == "rotation_step_deg") c.rotation_step_deg = parse_float(key, value);
  else if (key == "max_steps") c.max_steps = parse_int(key, value);
  else if (key == "max_offset_mm") c.max_offset_mm = parse_float(key, value);
  else if (key == "max_yaw_deg") c.max_yaw_deg = parse_float(key, value);
  else if (key == "pos_tol_mm") c.pos_tol_mm = parse_float(key, value);
  else if (key == "yaw_tol_deg") c.yaw_tol_deg = parse_float(key, value);
  else if (key == "lost_threshold") c.lost_threshold = parse_float(key, value);
  else if (key == "lost_patience") c.lost_patience = parse_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
  // The training and Reptile pipelines carry their own augment copies.
  t.augment = a;
  r.augment = a;
  t.seed = cfg.seed;
  r.seed = cfg.seed;
}

void merge_run_config(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#') continue;
    const std::string at = path + ":" + std::to_string(lineno);
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(at + ": expected key=value");
    }
    try {
      apply_config_entry(cfg, trim(entry.substr(0, eq)),
                         trim(entry.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(at + ": " + e.what());
    }
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  merge_run_config(cfg, path);
  return cfg;
}

}  // namespace grasp
