#pragma once

#include <cstdint>
#include <string>

#include "grasp/augment.hpp"
#include "grasp/controller.hpp"
#include "grasp/train.hpp"

namespace grasp {

// Union of every module's tunables plus the run seed. Loaded from a
// key=value file, then overridden by command-line flags (override wins).
struct RunConfig {
  std::uint64_t seed = 0;
  AugmentationConfig augment;
  TrainConfig train;
  ReptileConfig reptile;
  ControllerConfig controller;
};

// Applies one key=value assignment. Unknown key or unparsable value raises
// ConfigError. The augment block is mirrored into train.augment and
// reptile.augment after every assignment, so order never matters.
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);

// Parses a key=value file: one entry per line, `#` comments, blank lines
// ignored. Raises ConfigError with the line number on any bad line, and
// NotFoundError when the file cannot be opened. Does not validate
// cross-field invariants; call the per-module validators before use.
RunConfig load_run_config(const std::string& path);

// Same parse applied on top of an existing config.
void merge_run_config(RunConfig& cfg, const std::string& path);

}  // namespace grasp
