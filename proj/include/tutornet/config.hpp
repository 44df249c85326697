#pragma once

// Flat key=value run configuration. Unknown keys are rejected so typos
// fail loudly; absent keys take documented defaults; command-line flags
// override file values (applied by the CLI after parsing).

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tutornet/curriculum.hpp"
#include "tutornet/nets.hpp"
#include "tutornet/synth.hpp"
#include "tutornet/trainer.hpp"

namespace tutornet {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& is, const std::string& origin) {
  KeyValues out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + t + "'");
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, value);
  }
  return out;
}

inline KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return parse_key_values(is, path.string());
}

// ---- scene recipe files ------------------------------------------------------

inline SceneRecipe recipe_from_keys(const KeyValues& kvs) {
  SceneRecipe r;
  for (const auto& [key, value] : kvs) {
    if (key == "width") r.width = static_cast<int>(detail::to_int(key, value));
    else if (key == "height") r.height = static_cast<int>(detail::to_int(key, value));
    else if (key == "n_points_min") r.n_points_min = static_cast<int>(detail::to_int(key, value));
    else if (key == "n_points_max") r.n_points_max = static_cast<int>(detail::to_int(key, value));
    else if (key == "cluster_count_min") r.cluster_count_min = static_cast<int>(detail::to_int(key, value));
    else if (key == "cluster_count_max") r.cluster_count_max = static_cast<int>(detail::to_int(key, value));
    else if (key == "cluster_spread") r.cluster_spread = detail::to_double(key, value);
    else if (key == "blob_radius_min") r.blob_radius_min = detail::to_double(key, value);
    else if (key == "blob_radius_max") r.blob_radius_max = detail::to_double(key, value);
    else if (key == "background") {
      if (value == "flat") r.background = SceneRecipe::Background::flat;
      else if (value == "noise") r.background = SceneRecipe::Background::noise;
      else throw ConfigError("key 'background': expected flat or noise, got '" + value + "'");
    }
    else if (key == "noise_sigma") r.noise_sigma = detail::to_double(key, value);
    else if (key == "seed") r.seed = static_cast<std::uint64_t>(detail::to_int(key, value));
    else throw ConfigError("unknown recipe key '" + key + "'");
  }
  try {
    r.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return r;
}

// ---- training config files ---------------------------------------------------

// Raw values; specs are built afterwards so that width multipliers and the
// weight floor land in the right places.
struct TrainFileValues {
  CurriculumParams curriculum;  // defaults: t=0.5 margin=0.8 s=1000 alphas 1e-2/1e-3
  int epochs = 6;
  std::uint64_t seed = 1;
  std::string mode = "sf-tn";
  std::string main_net = "dense-tiny";
  int tutor_depth = 15;
  Rational main_width{1, 1};
  Rational tutor_width{1, 8};
  std::string optimizer = "sgd";
  double momentum = 0.9;
  int checkpoint_every = 0;
  double sigma = 15.0;
};

inline TrainFileValues train_values_from_keys(const KeyValues& kvs) {
  TrainFileValues v;
  for (const auto& [key, value] : kvs) {
    if (key == "t") v.curriculum.t_floor = detail::to_double(key, value);
    else if (key == "margin") v.curriculum.margin = detail::to_double(key, value);
    else if (key == "scale_factor") v.curriculum.scale_factor = detail::to_double(key, value);
    else if (key == "alpha_main") v.curriculum.alpha_main = detail::to_double(key, value);
    else if (key == "alpha_tutor") v.curriculum.alpha_tutor = detail::to_double(key, value);
    else if (key == "epochs") v.epochs = static_cast<int>(detail::to_int(key, value));
    else if (key == "seed") v.seed = static_cast<std::uint64_t>(detail::to_int(key, value));
    else if (key == "mode") v.mode = value;
    else if (key == "main_net") v.main_net = value;
    else if (key == "tutor_depth") v.tutor_depth = static_cast<int>(detail::to_int(key, value));
    else if (key == "main_width") v.main_width = parse_rational(value);
    else if (key == "tutor_width") v.tutor_width = parse_rational(value);
    else if (key == "optimizer") v.optimizer = value;
    else if (key == "momentum") v.momentum = detail::to_double(key, value);
    else if (key == "checkpoint_every") v.checkpoint_every = static_cast<int>(detail::to_int(key, value));
    else if (key == "sigma") v.sigma = detail::to_double(key, value);
    else throw ConfigError("unknown training key '" + key + "'");
  }
  return v;
}

inline TrainConfig build_train_config(const TrainFileValues& v) {
  TrainConfig cfg;
  try {
    cfg.curriculum = v.curriculum;
    cfg.curriculum.validate();
    cfg.epochs = v.epochs;
    cfg.seed = v.seed;
    cfg.mode = parse_mode(v.mode);
    cfg.main_spec = main_net_spec(v.main_net, v.main_width);
    cfg.tutor_spec = tutornet_spec(v.tutor_depth, v.tutor_width);
    set_weight_floor(cfg.tutor_spec, cfg.curriculum.t_floor);
    if (v.optimizer == "sgd") cfg.optimizer.kind = Optimizer::Kind::sgd;
    else if (v.optimizer == "sgd-momentum") cfg.optimizer.kind = Optimizer::Kind::sgd_momentum;
    else throw ConfigError("optimizer must be sgd or sgd-momentum, got '" + v.optimizer + "'");
    cfg.optimizer.momentum = v.momentum;
    cfg.checkpoint_every = v.checkpoint_every;
    cfg.sigma = v.sigma;
    if (!(cfg.sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

}  // namespace tutornet
