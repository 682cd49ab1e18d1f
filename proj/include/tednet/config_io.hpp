#pragma once

// Plain key=value configuration files ('#' starts a comment) layered on top
// of a named preset. Keys mirror the model, training and phantom fields;
// unknown keys are rejected.

#include <string>

#include "tednet/model.hpp"
#include "tednet/training.hpp"
#include "tednet/volume.hpp"

namespace tednet {

enum class Preset { kPaper, kDesk };

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    PhantomSpec phantom;
};

RunConfig preset_config(Preset preset);

Preset parse_preset(const std::string& name);

// Applies one key=value assignment; throws ConfigError on unknown keys or
// unparseable values.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig load_run_config(Preset preset, const std::string& config_path);

}  // namespace tednet
