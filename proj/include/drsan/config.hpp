#pragma once

#include <map>
#include <string>

#include "drsan/data.hpp"
#include "drsan/train.hpp"

namespace drsan {

// Everything a command needs, filled from defaults, then a config file, then
// command-line flags (last writer wins).
struct AppConfig {
  TrainConfig train;
  SceneConfig scene;
  int scene_images = 8;       // gen-data image count
  std::string checkpoint;     // model file for eval/predict
  std::string roi_dir;        // optional per-image masks for eval
};

// Plain text `key = value` lines; '#' starts a comment. Unknown keys are an
// error.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies one key; throws ConfigError on unknown keys or bad values.
void apply_key(AppConfig& cfg, const std::string& key, const std::string& value);

void apply_config_file(AppConfig& cfg, const std::string& path);

}  // namespace drsan
