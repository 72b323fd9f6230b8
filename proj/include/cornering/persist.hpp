#pragma once

// Persistence of trained models and labelled datasets.

#include <filesystem>
#include <string>

#include "cornering/io.hpp"
#include "cornering/nn/serialize.hpp"
#include "cornering/pidl.hpp"
#include "cornering/rdl.hpp"

namespace cornering::io {

inline json standardization_to_json(const Standardization& s) {
  return json{{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
              {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

inline Standardization standardization_from_json(const json& j) {
  Standardization s;
  nn::vector_from_json(j.at("mean"), s.mean);
  nn::vector_from_json(j.at("scale"), s.scale);
  return s;
}

inline json rdl_model_to_json(const RdlModel& m) {
  return json{{"version", kVersion},
              {"network", nn::to_json(m.network)},
              {"standardization", standardization_to_json(m.standardization)},
              {"stride", m.stride},
              {"loss_curve", m.loss_curve}};
}

inline RdlModel rdl_model_from_json(const json& j) {
  try {
    return RdlModel{nn::regressor_from_json(j.at("network")),
                    standardization_from_json(j.at("standardization")),
                    j.at("stride").get<std::size_t>(),
                    j.at("loss_curve").get<std::vector<double>>()};
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  }
}

inline json pidl_model_to_json(const PidlSession& s) {
  return json{{"version", kVersion},
              {"network", nn::to_json(s.network())},
              {"standardization",
               standardization_to_json(s.features().standardization)}};
}

inline json maneuver_to_json(const Maneuver& m) {
  return json{{"amplitude", m.amplitude}, {"frequency_hz", m.frequency_hz},
              {"v_x", m.v_x},             {"dt", m.dt},
              {"duration", m.duration}};
}

inline Maneuver maneuver_from_json(const json& j) {
  Maneuver m;
  for (const auto& [key, value] : j.items()) {
    if (key == "amplitude") m.amplitude = value.get<double>();
    else if (key == "frequency_hz") m.frequency_hz = value.get<double>();
    else if (key == "v_x") m.v_x = value.get<double>();
    else if (key == "dt") m.dt = value.get<double>();
    else if (key == "duration") m.duration = value.get<double>();
    else throw ParseError("unknown maneuver field '" + key + "'");
  }
  return m;
}

/// Writes one trajectory CSV per item plus manifest.json.
inline void write_dataset(const std::filesystem::path& dir,
                          const LabeledDataset& ds) {
  std::filesystem::create_directories(dir);
  json labels = json::array();
  for (std::size_t k = 0; k < ds.items.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "item_%03zu.csv", k);
    write_trajectory(dir / name, ds.items[k].trajectory);
    labels.push_back({{"file", name},
                      {"caf", ds.items[k].caf},
                      {"car", ds.items[k].car}});
  }
  json manifest{{"version", kVersion},
                {"grid", {ds.config.grid_min, ds.config.grid_max}},
                {"maneuver", maneuver_to_json(ds.config.maneuver)},
                {"noise", ds.config.noise ? noise_to_json(*ds.config.noise)
                                          : json(nullptr)},
                {"seed", ds.config.noise ? ds.config.noise->seed : 0},
                {"smoothing_window", ds.config.smoothing_window},
                {"labels", labels}};
  write_json(dir / "manifest.json", manifest);
}

inline LabeledDataset read_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  LabeledDataset ds;
  try {
    ds.config.grid_min = manifest.at("grid").at(0).get<int>();
    ds.config.grid_max = manifest.at("grid").at(1).get<int>();
    ds.config.maneuver = maneuver_from_json(manifest.at("maneuver"));
    if (!manifest.at("noise").is_null()) {
      ds.config.noise = noise_from_json(manifest.at("noise"));
    }
    ds.config.smoothing_window = manifest.at("smoothing_window").get<std::size_t>();
    for (const auto& item : manifest.at("labels")) {
      ds.items.push_back({read_trajectory(dir / item.at("file").get<std::string>()),
                          item.at("caf").get<double>(),
                          item.at("car").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  return ds;
}

}  // namespace cornering::io
