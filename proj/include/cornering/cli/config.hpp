#pragma once

// JSON run configuration: defaults merged with a user file (unknown keys
// rejected) and then with command-line overrides.

#include <string>
#include <vector>

#include "cornering/io.hpp"
#include "cornering/persist.hpp"
#include "cornering/pidl.hpp"
#include "cornering/rdl.hpp"

namespace cornering::cli {

using json = nlohmann::json;

/// Raised for invalid configuration; carries every offending field.
class ConfigError : public ParseError {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : ParseError(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
    return out;
  }
  std::vector<std::string> problems_;
};

inline bool compatible(const json& def, const json& val) {
  if (def.is_null()) return true;
  if (def.is_number()) return val.is_number();
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_string()) return val.is_string();
  if (def.is_array()) return val.is_array();
  if (def.is_object()) return val.is_object();
  return false;
}

inline void merge_into(json& base, const json& overlay, const std::string& path,
                       std::vector<std::string>& problems) {
  for (const auto& [key, value] : overlay.items()) {
    const std::string field = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) {
      problems.push_back("unknown field '" + field + "'");
      continue;
    }
    json& slot = base[key];
    if (!compatible(slot, value)) {
      problems.push_back("field '" + field + "' has the wrong type");
      continue;
    }
    if (slot.is_object() && value.is_object()) {
      merge_into(slot, value, field, problems);
    } else {
      slot = value;
    }
  }
}

/// Defaults overlaid with the optional config file.
inline json load_config(json defaults, const std::string& path) {
  if (path.empty()) return defaults;
  const json file = io::read_json(path);
  if (!file.is_object()) throw ConfigError({path + ": config must be an object"});
  std::vector<std::string> problems;
  merge_into(defaults, file, "", problems);
  if (!problems.empty()) {
    for (auto& p : problems) p = path + ": " + p;
    throw ConfigError(problems);
  }
  return defaults;
}

inline json vehicle_defaults() { return io::vehicle_to_json(VehicleParams{}); }

inline json pidl_defaults() {
  const PidlConfig c;
  return json{{"alpha_weights", c.alpha_weights},
              {"constancy_weight", c.constancy_weight},
              {"iterations", c.iterations},
              {"lr", c.lr},
              {"decay", c.decay},
              {"z_mean", c.z_mean},
              {"z_range", c.z_range},
              {"seed", c.seed},
              {"standardize", c.standardize},
              {"early_stop_window", c.early_stop_window},
              {"early_stop_tolerance", c.early_stop_tolerance}};
}

inline PidlConfig pidl_from_json(const json& j) {
  PidlConfig c;
  c.alpha_weights = j.at("alpha_weights").get<std::array<double, 2>>();
  c.constancy_weight = j.at("constancy_weight").get<double>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.decay = j.at("decay").get<double>();
  c.z_mean = j.at("z_mean").get<std::array<double, 2>>();
  c.z_range = j.at("z_range").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.standardize = j.at("standardize").get<bool>();
  c.early_stop_window = j.at("early_stop_window").get<std::size_t>();
  c.early_stop_tolerance = j.at("early_stop_tolerance").get<double>();
  c.validate();
  return c;
}

inline json rdl_training_defaults() {
  const RdlConfig c;
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"decay", c.decay},
              {"stride", c.stride},
              {"lstm_hidden", c.lstm_hidden},
              {"head_hidden", c.head_hidden},
              {"z_mean", c.z_mean},
              {"z_range", c.z_range},
              {"seed", c.seed}};
}

inline RdlConfig rdl_from_json(const json& j) {
  RdlConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.decay = j.at("decay").get<double>();
  c.stride = j.at("stride").get<std::size_t>();
  c.lstm_hidden = j.at("lstm_hidden").get<Eigen::Index>();
  c.head_hidden = j.at("head_hidden").get<Eigen::Index>();
  c.z_mean = j.at("z_mean").get<std::array<double, 2>>();
  c.z_range = j.at("z_range").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json dataset_defaults() {
  const DatasetConfig d;
  return json{{"grid", {d.grid_min, d.grid_max}},
              {"maneuver", io::maneuver_to_json(d.maneuver)},
              {"noise", nullptr},
              {"smoothing_window", d.smoothing_window}};
}

inline DatasetConfig dataset_from_json(const json& j) {
  DatasetConfig d;
  d.grid_min = j.at("grid").at(0).get<int>();
  d.grid_max = j.at("grid").at(1).get<int>();
  d.maneuver = io::maneuver_from_json(j.at("maneuver"));
  if (!j.at("noise").is_null()) d.noise = io::noise_from_json(j.at("noise"));
  d.smoothing_window = j.at("smoothing_window").get<std::size_t>();
  return d;
}

}  // namespace cornering::cli
