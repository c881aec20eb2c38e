#include "drsan/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace drsan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs an unsigned integer, got '" + v + "'");
  }
}

bool to_onoff(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' needs on/off, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                        ": empty key");
    kv[key] = value;
  }
  return kv;
}

void apply_key(AppConfig& cfg, const std::string& key, const std::string& value) {
  TrainConfig& t = cfg.train;
  SceneConfig& s = cfg.scene;
  if (key == "seed") {
    t.seed = to_u64(key, value);
    s.seed = t.seed;
  } else if (key == "iterations") t.iterations = to_int(key, value);
  else if (key == "n") t.n = to_int(key, value);
  else if (key == "mode") t.mode = mode_from_string(value);
  else if (key == "context") t.use_context = to_onoff(key, value);
  else if (key == "context_flatten") t.context_flatten = to_onoff(key, value);
  else if (key == "lr0") t.lr0 = to_double(key, value);
  else if (key == "lr_decay") t.lr_decay = to_double(key, value);
  else if (key == "lr_decay_every") t.lr_decay_every = to_int(key, value);
  else if (key == "beta1") t.beta1 = to_double(key, value);
  else if (key == "beta2") t.beta2 = to_double(key, value);
  else if (key == "adam_eps") t.adam_eps = to_double(key, value);
  else if (key == "grad_clip") t.grad_clip = to_double(key, value);
  else if (key == "init_sigma") t.init_sigma = to_double(key, value);
  else if (key == "init_trunc") t.init_trunc = to_double(key, value);
  else if (key == "sigma") t.sigma = to_double(key, value);
  else if (key == "image_h") { t.image_h = to_int(key, value); s.height = t.image_h; }
  else if (key == "image_w") { t.image_w = to_int(key, value); s.width = t.image_w; }
  else if (key == "width_mult") t.width_mult = to_int(key, value);
  else if (key == "region_h") t.region_h = to_int(key, value);
  else if (key == "region_w") t.region_w = to_int(key, value);
  else if (key == "map_encode_dim") t.map_encode_dim = to_int(key, value);
  else if (key == "lstm_hidden") t.lstm_hidden = to_int(key, value);
  else if (key == "ctx_hidden") t.ctx_hidden = to_int(key, value);
  else if (key == "s_min") t.s_min = to_double(key, value);
  else if (key == "log_every") t.log_every = to_int(key, value);
  else if (key == "checkpoint_every") t.checkpoint_every = to_int(key, value);
  else if (key == "dataset") t.dataset = value;
  else if (key == "out") t.out = value;
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "roi_dir") cfg.roi_dir = value;
  else if (key == "scene_images") cfg.scene_images = to_int(key, value);
  else if (key == "scene_count_min") s.count_min = to_int(key, value);
  else if (key == "scene_count_max") s.count_max = to_int(key, value);
  else if (key == "scene_radius_min") s.radius_min = to_double(key, value);
  else if (key == "scene_radius_max") s.radius_max = to_double(key, value);
  else if (key == "scene_perspective") s.perspective = to_double(key, value);
  else if (key == "scene_rotation_deg") s.rotation_deg = to_double(key, value);
  else if (key == "scene_noise") s.noise = to_double(key, value);
  else if (key == "scene_aspect") s.aspect = to_double(key, value);
  else if (key == "scene_min_separation") s.min_separation = to_double(key, value);
  else
    throw ConfigError("config: unknown key '" + key + "'");
}

void apply_config_file(AppConfig& cfg, const std::string& path) {
  for (const auto& [key, value] : parse_config_file(path))
    apply_key(cfg, key, value);
}

}  // namespace drsan
