#pragma once

// Subcommands of the `cornering` executable. Every command reads a JSON
// config (defaults overlaid by --config, then by flags), and every JSON it
// writes carries the tool version and a config_hash over the effective
// config plus the digests of the input files.

#include "CLI11.hpp"

#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cornering/cli/config.hpp"
#include "cornering/control.hpp"
#include "cornering/io.hpp"
#include "cornering/persist.hpp"
#include "cornering/pidl.hpp"
#include "cornering/rdl.hpp"
#include "cornering/tirefit.hpp"

namespace cornering::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3 };

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Shared helpers ------------------------------------------------------------

inline json file_digest(const std::string& path) {
  return json{{"path", path}, {"fnv1a", io::hex64(io::fnv1a(io::read_file(path)))}};
}

inline json stamp(json report, const json& bound) {
  report["version"] = io::kVersion;
  report["config_hash"] = io::config_hash(bound);
  return report;
}

template <class T>
void override_field(json& cfg, const char* pointer, const std::optional<T>& v) {
  if (v) cfg[json::json_pointer(pointer)] = *v;
}

inline json nullable(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline SlipConvention slip_convention_from(const json& v) {
  const auto s = v.get<std::string>();
  if (s == "model") return SlipConvention::kModel;
  if (s == "printed") return SlipConvention::kPrinted;
  throw ConfigError({"slip_convention must be 'model' or 'printed'"});
}

inline PeakRule peak_rule_from(const json& v) {
  const auto s = v.get<std::string>();
  if (s == "max_force") return PeakRule::kMaxForce;
  if (s == "fitted") return PeakRule::kFitted;
  throw ConfigError({"pacejka_peak must be 'max_force' or 'fitted'"});
}

/// Adds derived channels unless the input already has them.
inline Trajectory prepare_input(const Trajectory& tr, const std::string& mode,
                                std::size_t window, const std::string& source) {
  if (mode == "always" || (mode == "auto" && !tr.has_derived())) {
    return derive_signals(tr, window);
  }
  if (mode != "auto" && mode != "never") {
    throw ConfigError({"derive must be one of auto, always, never"});
  }
  if (!tr.has_derived()) {
    throw MissingField(source + ": vy, rdot and vydot required when derive is 'never'");
  }
  return tr;
}

/// Error of the stiffness pair on the trajectory: replay the recorded inputs
/// and integrate |dv_y| + |dr| over time.
inline double replay_error(const Trajectory& measured, const VehicleParams& p,
                           double caf, double car) {
  return trajectory_error(measured, replay(p, caf, car, measured));
}

inline fs::path indexed_path(const fs::path& base, std::size_t k, std::size_t n) {
  if (n <= 1) return base;
  fs::path out = base;
  out.replace_filename(base.stem().string() + "_" + std::to_string(k) +
                       base.extension().string());
  return out;
}

inline void emit(const json& report, const std::string& path, Streams& s) {
  if (path.empty()) {
    s.out << report.dump(2) << "\n";
  } else {
    io::write_json(path, report);
  }
}

// simulate ------------------------------------------------------------------

inline json simulate_defaults() {
  return json{{"vehicle", vehicle_defaults()},
              {"caf", 8.14},
              {"car", 9.71},
              {"maneuver",
               {{"kind", "sine"},
                {"amplitude", 0.1},
                {"frequency_hz", 0.5},
                {"t_step", 0.0},
                {"period", 2.0},
                {"start", 1.0}}},
              {"v_x", 1.2},
              {"dt", 0.01},
              {"duration", 10.0},
              {"initial_state", {0.0, 0.0}}};
}

inline SteeringSchedule steering_from_json(const json& m) {
  const auto kind = m.at("kind").get<std::string>();
  const double amp = m.at("amplitude").get<double>();
  if (kind == "sine") return sine_steer(amp, m.at("frequency_hz").get<double>());
  if (kind == "step") return step_steer(amp, m.at("t_step").get<double>());
  if (kind == "lane_change") {
    return lane_change_steer(amp, m.at("period").get<double>(),
                             m.at("start").get<double>());
  }
  throw ConfigError({"maneuver.kind must be one of sine, step, lane_change"});
}

inline Trajectory simulate_from_config(const json& cfg) {
  const VehicleParams p = io::vehicle_from_json(cfg.at("vehicle"));
  const auto x0 = cfg.at("initial_state").get<std::vector<double>>();
  if (x0.size() != 2) throw ConfigError({"initial_state must have two entries"});
  return simulate(p, cfg.at("caf").get<double>(), cfg.at("car").get<double>(),
                  steering_from_json(cfg.at("maneuver")),
                  cfg.at("v_x").get<double>(), cfg.at("dt").get<double>(),
                  cfg.at("duration").get<double>(),
                  Eigen::Vector2d(x0[0], x0[1]));
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<double> caf, car, amplitude, frequency, v_x, dt, duration;
  std::optional<std::string> maneuver;
};

inline int cmd_simulate(const SimulateArgs& a, Streams& s) {
  json cfg = load_config(simulate_defaults(), a.config);
  override_field(cfg, "/caf", a.caf);
  override_field(cfg, "/car", a.car);
  override_field(cfg, "/maneuver/kind", a.maneuver);
  override_field(cfg, "/maneuver/amplitude", a.amplitude);
  override_field(cfg, "/maneuver/frequency_hz", a.frequency);
  override_field(cfg, "/v_x", a.v_x);
  override_field(cfg, "/dt", a.dt);
  override_field(cfg, "/duration", a.duration);
  const Trajectory tr = simulate_from_config(cfg);
  io::write_trajectory(a.out, tr);
  const json bound{{"command", "simulate"}, {"config", cfg}};
  io::write_json(a.out + ".json",
                 stamp(json{{"command", "simulate"},
                            {"config", cfg},
                            {"samples", tr.size()},
                            {"output", a.out}},
                       bound));
  s.out << "wrote " << tr.size() << " samples to " << a.out << "\n";
  return kOk;
}

// sensors -------------------------------------------------------------------

inline json sensors_defaults() {
  return json{{"noise", io::noise_to_json(NoiseModel{})},
              {"derive", false},
              {"smoothing_window", 5}};
}

struct SensorsArgs {
  std::string config;
  std::string in;
  std::string out;
  std::optional<double> sigma_r, sigma_ay, bias_r, bias_ay;
  std::optional<std::uint64_t> seed;
  bool derive = false;
};

inline int cmd_sensors(const SensorsArgs& a, Streams& s) {
  json cfg = load_config(sensors_defaults(), a.config);
  override_field(cfg, "/noise/sigma_r", a.sigma_r);
  override_field(cfg, "/noise/sigma_ay", a.sigma_ay);
  override_field(cfg, "/noise/bias_r", a.bias_r);
  override_field(cfg, "/noise/bias_ay", a.bias_ay);
  override_field(cfg, "/noise/seed", a.seed);
  if (a.derive) cfg["derive"] = true;
  const Trajectory clean = io::read_trajectory(a.in);
  Trajectory sensed =
      synthesize_sensors(clean, io::noise_from_json(cfg.at("noise")));
  if (cfg.at("derive").get<bool>()) {
    sensed = derive_signals(sensed, cfg.at("smoothing_window").get<std::size_t>());
  }
  io::write_trajectory(a.out, sensed);
  const json bound{{"command", "sensors"}, {"config", cfg}, {"inputs", {file_digest(a.in)}}};
  io::write_json(a.out + ".json",
                 stamp(json{{"command", "sensors"},
                            {"config", cfg},
                            {"input", a.in},
                            {"output", a.out}},
                       bound));
  s.out << "wrote " << sensed.size() << " samples to " << a.out << "\n";
  return kOk;
}

// estimate ------------------------------------------------------------------

inline json estimate_defaults() {
  return json{{"vehicle", vehicle_defaults()},
              {"method", "pidl"},
              {"derive", "auto"},
              {"smoothing_window", 5},
              {"reference", true},
              {"aggregate", false},
              {"slip_convention", "model"},
              {"pacejka_peak", "max_force"},
              {"pidl", pidl_defaults()}};
}

struct MethodRun {
  StiffnessEstimate estimate;
  json details = json::object();
};

inline MethodRun run_method(Method m, const Trajectory& derived,
                            const VehicleParams& p, const json& cfg,
                            RdlModel* model) {
  MethodRun run;
  switch (m) {
    case Method::kPidl:
      run.estimate = train_pidl(derived, p, pidl_from_json(cfg.at("pidl")));
      break;
    case Method::kRdl:
      if (model == nullptr) throw UsageError("rdl estimation needs a trained model");
      run.estimate = predict_rdl(*model, derived);
      run.estimate.loss_curve = model->loss_curve;
      break;
    case Method::kPacejka: {
      PacejkaFit front;
      PacejkaFit rear;
      run.estimate = estimate_pacejka(derived, p, &front, &rear,
                                      slip_convention_from(cfg.at("slip_convention")),
                                      peak_rule_from(cfg.at("pacejka_peak")));
      run.details["front_fit"] = io::fit_report(front);
      run.details["rear_fit"] = io::fit_report(rear);
      break;
    }
  }
  return run;
}

inline json run_report(const std::string& input, const MethodRun& run) {
  const auto& e = run.estimate;
  json j{{"input", input},
         {"caf", e.caf},
         {"car", e.car},
         {"iterations", e.loss_curve.empty() ? json(nullptr) : json(e.loss_curve.size())},
         {"final_loss", e.loss_curve.empty() ? json(nullptr) : json(e.loss_curve.back())},
         {"trajectory_error", nullable(e.replay_error)}};
  for (const auto& [k, v] : run.details.items()) j[k] = v;
  return j;
}

struct EstimateArgs {
  std::string config;
  std::vector<std::string> inputs;
  std::string model;
  std::string out;
  std::string loss_curve;
  std::optional<std::string> method;
  std::optional<std::size_t> iterations;
  std::optional<std::uint64_t> seed;
  bool aggregate = false;
  bool no_reference = false;
};

inline int cmd_estimate(const EstimateArgs& a, Streams& s) {
  json cfg = load_config(estimate_defaults(), a.config);
  override_field(cfg, "/method", a.method);
  override_field(cfg, "/pidl/iterations", a.iterations);
  override_field(cfg, "/pidl/seed", a.seed);
  if (a.aggregate) cfg["aggregate"] = true;
  if (a.no_reference) cfg["reference"] = false;

  const Method method = parse_method(cfg.at("method").get<std::string>());
  const VehicleParams p = io::vehicle_from_json(cfg.at("vehicle"));
  if (cfg.at("aggregate").get<bool>() && a.inputs.size() < 2) {
    throw ConfigError({"aggregate needs at least two inputs"});
  }
  std::optional<RdlModel> model;
  json bound{{"command", "estimate"}, {"config", cfg}, {"inputs", json::array()}};
  if (method == Method::kRdl) {
    if (a.model.empty()) throw ConfigError({"--model is required for method rdl"});
    model = io::rdl_model_from_json(io::read_json(a.model));
    bound["model"] = file_digest(a.model);
  }
  for (const auto& in : a.inputs) bound["inputs"].push_back(file_digest(in));

  json runs = json::array();
  std::vector<StiffnessEstimate> estimates;
  for (std::size_t k = 0; k < a.inputs.size(); ++k) {
    const std::string& in = a.inputs[k];
    const Trajectory derived =
        prepare_input(io::read_trajectory(in), cfg.at("derive").get<std::string>(),
                      cfg.at("smoothing_window").get<std::size_t>(), in);
    MethodRun run;
    try {
      run = run_method(method, derived, p, cfg, model ? &*model : nullptr);
    } catch (const Error&) {
      s.err << in << ": " << to_string(method) << " estimation failed\n";
      throw;
    }
    if (cfg.at("reference").get<bool>()) {
      run.estimate.replay_error =
          replay_error(derived, p, run.estimate.caf, run.estimate.car);
    }
    if (!a.loss_curve.empty() && !run.estimate.loss_curve.empty()) {
      io::write_file(indexed_path(a.loss_curve, k, a.inputs.size()),
                     io::loss_curve_to_csv(run.estimate.loss_curve));
    }
    runs.push_back(run_report(in, run));
    estimates.push_back(run.estimate);
    s.err << in << ": caf=" << run.estimate.caf << " car=" << run.estimate.car
          << "\n";
  }

  json report{{"command", "estimate"}, {"method", to_string(method)}, {"runs", runs}};
  if (runs.size() == 1) {
    for (const char* key : {"caf", "car", "iterations", "final_loss", "trajectory_error"}) {
      report[key] = runs[0][key];
    }
  } else {
    double caf = 0.0;
    double car = 0.0;
    for (const auto& e : estimates) {
      caf += e.caf;
      car += e.car;
    }
    report["caf"] = caf / static_cast<double>(estimates.size());
    report["car"] = car / static_cast<double>(estimates.size());
  }
  if (cfg.at("aggregate").get<bool>()) {
    const AggregateEstimate agg = aggregate(estimates);
    report["caf"] = agg.mean_caf;
    report["car"] = agg.mean_car;
    report["rel_unc"] = {{"caf", agg.rel_unc_caf}, {"car", agg.rel_unc_car}};
  }
  emit(stamp(report, bound), a.out, s);
  return kOk;
}

// train-rdl -----------------------------------------------------------------

inline json train_rdl_defaults() {
  return json{{"vehicle", vehicle_defaults()},
              {"dataset", dataset_defaults()},
              {"training", rdl_training_defaults()}};
}

struct TrainRdlArgs {
  std::string config;
  std::string out;
  std::string dataset_dir;
  std::string from_dataset;
  std::string loss_curve;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

inline RdlModel train_from_config(const json& cfg, const std::string& from_dataset,
                                  const std::string& dataset_dir, Streams& s) {
  const VehicleParams p = io::vehicle_from_json(cfg.at("vehicle"));
  const LabeledDataset ds =
      from_dataset.empty()
          ? generate_grid_dataset(p, dataset_from_json(cfg.at("dataset")))
          : io::read_dataset(from_dataset);
  if (!dataset_dir.empty()) io::write_dataset(dataset_dir, ds);
  s.err << "training on " << ds.items.size() << " trajectories\n";
  return train_rdl(ds, rdl_from_json(cfg.at("training")));
}

inline int cmd_train_rdl(const TrainRdlArgs& a, Streams& s) {
  json cfg = load_config(train_rdl_defaults(), a.config);
  override_field(cfg, "/training/epochs", a.epochs);
  override_field(cfg, "/training/seed", a.seed);
  json bound{{"command", "train-rdl"}, {"config", cfg}};
  if (!a.from_dataset.empty()) {
    bound["dataset"] = file_digest((fs::path(a.from_dataset) / "manifest.json").string());
  }
  const RdlModel model = train_from_config(cfg, a.from_dataset, a.dataset_dir, s);
  json doc = io::rdl_model_to_json(model);
  doc["config"] = cfg;
  io::write_json(a.out, stamp(doc, bound));
  if (!a.loss_curve.empty()) {
    io::write_file(a.loss_curve, io::loss_curve_to_csv(model.loss_curve));
  }
  s.out << "final training loss " << io::format_number(model.loss_curve.back())
        << ", model written to " << a.out << "\n";
  return kOk;
}

// compare -------------------------------------------------------------------

inline json compare_defaults() {
  return json{{"vehicle", vehicle_defaults()},
              {"methods", {"pidl", "rdl", "pacejka"}},
              {"derive", "auto"},
              {"smoothing_window", 5},
              {"slip_convention", "model"},
              {"pacejka_peak", "max_force"},
              {"pidl", pidl_defaults()},
              {"rdl", {{"dataset", dataset_defaults()},
                       {"training", rdl_training_defaults()}}}};
}

struct CompareArgs {
  std::string config;
  std::vector<std::string> inputs;
  std::string model;
  std::string out;
  std::string table;
  std::string plot_dir;
  std::optional<std::uint64_t> seed;
};

inline int cmd_compare(const CompareArgs& a, Streams& s) {
  json cfg = load_config(compare_defaults(), a.config);
  override_field(cfg, "/pidl/seed", a.seed);
  const VehicleParams p = io::vehicle_from_json(cfg.at("vehicle"));
  std::vector<Method> methods;
  for (const auto& m : cfg.at("methods")) methods.push_back(parse_method(m.get<std::string>()));
  if (methods.empty()) throw ConfigError({"methods must not be empty"});

  json inputs = json::array();
  for (const auto& in : a.inputs) inputs.push_back(file_digest(in));
  std::vector<Trajectory> data;
  for (const auto& in : a.inputs) {
    data.push_back(prepare_input(io::read_trajectory(in),
                                 cfg.at("derive").get<std::string>(),
                                 cfg.at("smoothing_window").get<std::size_t>(), in));
  }

  json method_hashes = json::object();
  std::optional<RdlModel> model;
  for (Method m : methods) {
    json bound{{"command", "compare"}, {"method", to_string(m)},
               {"vehicle", cfg.at("vehicle")}, {"derive", cfg.at("derive")},
               {"smoothing_window", cfg.at("smoothing_window")}, {"inputs", inputs}};
    if (m == Method::kPidl) bound["pidl"] = cfg.at("pidl");
    if (m == Method::kPacejka) {
      bound["slip_convention"] = cfg.at("slip_convention");
      bound["pacejka_peak"] = cfg.at("pacejka_peak");
    }
    if (m == Method::kRdl) {
      if (!a.model.empty()) {
        bound["model"] = file_digest(a.model);
      } else {
        bound["rdl"] = cfg.at("rdl");
      }
    }
    method_hashes[to_string(m)] = {{"config_hash", io::config_hash(bound)}};
  }

  json rows = json::array();
  std::string table = "dataset";
  for (Method m : methods) {
    const std::string name = to_string(m);
    table += ',' + name + "_caf," + name + "_car," + name + "_trajectory_error," +
             name + "_status";
  }
  table += '\n';
  json summary = json::object();
  for (Method m : methods) summary[to_string(m)] = json::object();
  for (std::size_t k = 0; k < data.size(); ++k) {
    std::vector<std::pair<std::string, Trajectory>> responses;
    json results = json::object();
    std::string line = a.inputs[k];
    for (Method m : methods) {
      const std::string name = to_string(m);
      json result{{"config_hash", method_hashes[name]["config_hash"]}};
      try {
        if (m == Method::kRdl && !model) {
          model = a.model.empty()
                      ? train_from_config(json{{"vehicle", cfg.at("vehicle")},
                                               {"dataset", cfg.at("rdl").at("dataset")},
                                               {"training", cfg.at("rdl").at("training")}},
                                          "", "", s)
                      : io::rdl_model_from_json(io::read_json(a.model));
        }
        MethodRun run = run_method(m, data[k], p, cfg, model ? &*model : nullptr);
        const Trajectory sim = replay(p, run.estimate.caf, run.estimate.car, data[k]);
        const double err = trajectory_error(data[k], sim);
        result["caf"] = run.estimate.caf;
        result["car"] = run.estimate.car;
        result["trajectory_error"] = err;
        result["status"] = "ok";
        responses.emplace_back(name, sim);
        auto& sm = summary[name];
        sm["sum"] = sm.value("sum", 0.0) + err;
        sm["count"] = sm.value("count", 0) + 1;
      } catch (const Error& e) {
        result["caf"] = nullptr;
        result["car"] = nullptr;
        result["trajectory_error"] = nullptr;
        result["status"] = std::string("failed: ") + e.what();
        summary[name]["failures"] = summary[name].value("failures", 0) + 1;
      }
      auto cell = [&](const char* key) {
        return result[key].is_null() ? std::string()
                                     : io::format_number(result[key].get<double>());
      };
      std::string status = result["status"].get<std::string>();
      for (char& c : status) {
        if (c == ',' || c == '\n') c = ';';
      }
      line += ',' + cell("caf") + ',' + cell("car") + ',' + cell("trajectory_error") +
              ',' + status;
      results[name] = result;
    }
    table += line + '\n';
    rows.push_back({{"dataset", a.inputs[k]}, {"methods", results}});
    if (!a.plot_dir.empty()) {
      std::string csv = "t,vy_measured,r_measured";
      for (const auto& [name, sim] : responses) csv += ",vy_" + name + ",r_" + name;
      csv += '\n';
      const Trajectory& d = data[k];
      for (std::size_t i = 0; i < d.size(); ++i) {
        csv += io::format_number(d.t[i]) + ',' + io::format_number(d.v_y[i]) + ',' +
               io::format_number(d.r[i]);
        for (const auto& [name, sim] : responses) {
          csv += ',' + io::format_number(sim.v_y[i]) + ',' + io::format_number(sim.r[i]);
        }
        csv += '\n';
      }
      const fs::path plot = fs::path(a.plot_dir) /
          (fs::path(a.inputs[k]).stem().string() + "_" + std::to_string(k) + "_responses.csv");
      io::write_file(plot, csv);
    }
  }

  json means = json::object();
  for (auto& [name, sm] : summary.items()) {
    const int count = sm.value("count", 0);
    means[name] = {{"mean_trajectory_error",
                    count > 0 ? json(sm["sum"].get<double>() / count) : json(nullptr)},
                   {"succeeded", count},
                   {"failures", sm.value("failures", 0)}};
  }
  if (!a.table.empty()) io::write_file(a.table, table);
  const json bound{{"command", "compare"}, {"config", cfg}, {"inputs", inputs},
                   {"model", a.model.empty() ? json(nullptr) : file_digest(a.model)}};
  emit(stamp(json{{"command", "compare"},
                  {"rows", rows},
                  {"summary", means},
                  {"methods", method_hashes}},
             bound),
       a.out, s);
  return kOk;
}

// closed-loop ---------------------------------------------------------------

inline json scenario_defaults() {
  json update_pidl = pidl_defaults();
  update_pidl["iterations"] = online_pidl_config(0).iterations;
  return json{{"vehicle", vehicle_defaults()},
              {"dt", 0.01},
              {"duration", 15.0},
              {"plant", json::array({{{"start", 0.0}, {"caf", 8.14}, {"car", 9.71}}})},
              {"driver", {{"amplitude", 0.1}, {"frequency_hz", 0.5}, {"v_x", 1.2}}},
              {"design",
               {{"caf", 8.14},
                {"car", 9.71},
                {"state_weights", {1.0, 1.0}},
                {"input_weights", {1.0, 1.0}},
                {"gain", nullptr}}},
              {"initial_estimate", nullptr},
              {"mode", "compare"},
              {"update",
               {{"period", 2.0},
                {"window", 4.0},
                {"noise", io::noise_to_json(NoiseModel{})},
                {"smoothing_window", 5},
                {"pidl", update_pidl}}}};
}

struct Scenario {
  VehicleParams vehicle;
  ClosedLoopConfig sim;
  PlantSchedule plant;
  double amplitude = 0.1;
  double frequency_hz = 0.5;
  double v_x = 1.2;
  double design_caf = 8.14;
  double design_car = 9.71;
  Eigen::Vector2d state_weights = Eigen::Vector2d::Ones();
  Eigen::Vector2d input_weights = Eigen::Vector2d::Ones();
  std::optional<Eigen::Matrix2d> gain;
  double initial_caf = 8.14;
  double initial_car = 9.71;
  std::string mode = "compare";
  double period = 2.0;
  double window = 4.0;
  NoiseModel noise;
  std::size_t smoothing_window = 5;
  PidlConfig pidl = online_pidl_config(0);
};

/// Parses and validates a scenario; every problem found is reported at once.
inline Scenario parse_scenario(const json& doc, json* effective = nullptr) {
  std::vector<std::string> problems;
  json cfg = scenario_defaults();
  if (!doc.is_object()) throw ConfigError({"scenario must be a JSON object"});
  merge_into(cfg, doc, "", problems);
  if (effective) *effective = cfg;

  Scenario sc;
  auto number = [&](const json& parent, const char* key, const std::string& field,
                    auto pred, const char* rule) -> double {
    const json& v = parent.at(key);
    if (!v.is_number()) {
      problems.push_back("field '" + field + "' must be a number");
      return 0.0;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x) || !pred(x)) problems.push_back("field '" + field + "' " + rule);
    return x;
  };
  auto positive = [](double x) { return x > 0; };
  auto non_negative = [](double x) { return x >= 0; };
  auto any = [](double) { return true; };

  const json& veh = cfg.at("vehicle");
  for (const char* key : {"mass", "yaw_inertia", "dist_front", "dist_rear", "nominal_speed"}) {
    const double x = number(veh, key, std::string("vehicle.") + key, positive, "must be positive");
    if (std::string(key) == "mass") sc.vehicle.mass = x;
    if (std::string(key) == "yaw_inertia") sc.vehicle.yaw_inertia = x;
    if (std::string(key) == "dist_front") sc.vehicle.dist_front = x;
    if (std::string(key) == "dist_rear") sc.vehicle.dist_rear = x;
    if (std::string(key) == "nominal_speed") sc.vehicle.nominal_speed = x;
  }
  sc.sim.dt = number(cfg, "dt", "dt", positive, "must be positive");
  sc.sim.duration = number(cfg, "duration", "duration", positive, "must be positive");
  if (sc.sim.dt > 0 && sc.sim.duration > 0 && sc.sim.duration < sc.sim.dt) {
    problems.push_back("field 'duration' must be at least dt");
  }

  const json& plant = cfg.at("plant");
  if (!plant.is_array() || plant.empty()) {
    problems.push_back("field 'plant' must be a non-empty array of segments");
  } else {
    for (std::size_t k = 0; k < plant.size(); ++k) {
      const std::string base = "plant[" + std::to_string(k) + "]";
      const json& seg = plant[k];
      if (!seg.is_object()) {
        problems.push_back("field '" + base + "' must be an object");
        continue;
      }
      for (const auto& [key, v] : seg.items()) {
        if (key != "start" && key != "caf" && key != "car") {
          problems.push_back("unknown field '" + base + "." + key + "'");
        }
      }
      auto field = [&](const char* key, auto pred, const char* rule) {
        if (!seg.contains(key)) {
          problems.push_back("field '" + base + "." + key + "' is missing");
          return 0.0;
        }
        return number(seg, key, base + "." + key, pred, rule);
      };
      PlantSegment ps;
      ps.start = field("start", non_negative, "must be non-negative");
      ps.caf = field("caf", positive, "must be positive");
      ps.car = field("car", positive, "must be positive");
      if (k == 0 && ps.start != 0.0) {
        problems.push_back("field '" + base + ".start' must be 0 for the first segment");
      }
      if (k > 0 && !sc.plant.segments.empty() &&
          !(ps.start > sc.plant.segments.back().start)) {
        problems.push_back("field '" + base + ".start' must exceed the previous segment start");
      }
      sc.plant.segments.push_back(ps);
    }
  }

  const json& drv = cfg.at("driver");
  sc.amplitude = number(drv, "amplitude", "driver.amplitude", any, "must be finite");
  sc.frequency_hz = number(drv, "frequency_hz", "driver.frequency_hz", non_negative,
                           "must be non-negative");
  sc.v_x = number(drv, "v_x", "driver.v_x", positive, "must be positive");

  const json& des = cfg.at("design");
  sc.design_caf = number(des, "caf", "design.caf", positive, "must be positive");
  sc.design_car = number(des, "car", "design.car", positive, "must be positive");
  for (const auto& [key, strict] : {std::pair{"state_weights", false},
                                    std::pair{"input_weights", true}}) {
    const json& w = des.at(key);
    const std::string field = std::string("design.") + key;
    if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
      problems.push_back("field '" + field + "' must be an array of two numbers");
      continue;
    }
    Eigen::Vector2d v(w[0].get<double>(), w[1].get<double>());
    if (strict ? (v.array() <= 0).any() : (v.array() < 0).any()) {
      problems.push_back("field '" + field + (strict ? "' entries must be positive"
                                                      : "' entries must be non-negative"));
    }
    (strict ? sc.input_weights : sc.state_weights) = v;
  }

  const json& gain = des.at("gain");
  if (!gain.is_null()) {
    bool ok = gain.is_array() && gain.size() == 2;
    Eigen::Matrix2d k = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; ok && i < 2; ++i) {
      ok = gain[i].is_array() && gain[i].size() == 2;
      for (std::size_t j = 0; ok && j < 2; ++j) {
        ok = gain[i][j].is_number() && std::isfinite(gain[i][j].get<double>());
        if (ok) {
          k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              gain[i][j].get<double>();
        }
      }
    }
    if (ok) {
      sc.gain = k;
    } else {
      problems.push_back("field 'design.gain' must be null or a 2x2 array of numbers");
    }
  }

  const json& init = cfg.at("initial_estimate");
  if (init.is_null()) {
    sc.initial_caf = sc.design_caf;
    sc.initial_car = sc.design_car;
  } else if (!init.is_object()) {
    problems.push_back("field 'initial_estimate' must be an object or null");
  } else {
    for (const auto& [key, v] : init.items()) {
      if (key != "caf" && key != "car") {
        problems.push_back("unknown field 'initial_estimate." + key + "'");
      }
    }
    if (!init.contains("caf") || !init.contains("car")) {
      problems.push_back("field 'initial_estimate' needs caf and car");
    } else {
      sc.initial_caf = number(init, "caf", "initial_estimate.caf", positive, "must be positive");
      sc.initial_car = number(init, "car", "initial_estimate.car", positive, "must be positive");
    }
  }

  const json& mode = cfg.at("mode");
  if (!mode.is_string() || (mode != "compare" && mode != "stale" && mode != "updated")) {
    problems.push_back("field 'mode' must be one of compare, stale, updated");
  } else {
    sc.mode = mode.get<std::string>();
  }

  const json& up = cfg.at("update");
  sc.period = number(up, "period", "update.period", positive, "must be positive");
  sc.window = number(up, "window", "update.window", positive, "must be positive");
  if (sc.sim.dt > 0 && sc.window > 0 && sc.window < 2 * sc.sim.dt) {
    problems.push_back("field 'update.window' must span at least two samples");
  }
  try {
    sc.noise = io::noise_from_json(up.at("noise"));
  } catch (const std::exception& e) {
    problems.push_back(std::string("field 'update.noise': ") + e.what());
  }
  const json& sw = up.at("smoothing_window");
  if (!sw.is_number_integer() || sw.get<long long>() < 1 || sw.get<long long>() % 2 == 0) {
    problems.push_back("field 'update.smoothing_window' must be a positive odd integer");
  } else {
    sc.smoothing_window = sw.get<std::size_t>();
  }
  try {
    sc.pidl = pidl_from_json(up.at("pidl"));
  } catch (const std::exception& e) {
    problems.push_back(std::string("field 'update.pidl': ") + e.what());
  }

  if (!problems.empty()) throw ConfigError(problems);
  return sc;
}

struct ClosedLoopOutcome {
  ControllerGain gain;
  std::optional<ClosedLoopResult> stale;
  std::optional<ClosedLoopResult> updated;
};

inline ControllerGain scenario_gain(const Scenario& sc) {
  if (!sc.gain) {
    return synthesize_gain(sc.vehicle, sc.design_caf, sc.design_car, sc.v_x,
                           sc.state_weights, sc.input_weights, sc.sim.dt);
  }
  ControllerGain g;
  g.K = *sc.gain;
  g.design_caf = sc.design_caf;
  g.design_car = sc.design_car;
  g.dt = sc.sim.dt;
  if (!(closed_loop_radius(g, sc.vehicle, sc.design_caf, sc.design_car, sc.v_x) < 1.0)) {
    throw SynthesisError("explicit gain does not stabilize the design plant");
  }
  return g;
}

inline ClosedLoopOutcome run_scenario(const Scenario& sc) {
  const ControllerGain gain = scenario_gain(sc);
  const DriverSchedule driver = sine_driver(sc.amplitude, sc.frequency_hz, sc.v_x);
  const ReferenceState ref0 =
      ReferenceState::from(sc.vehicle, sc.initial_caf, sc.initial_car);
  ClosedLoopOutcome out;
  out.gain = gain;
  if (sc.mode != "updated") {
    out.stale = closed_loop_sim(sc.vehicle, sc.plant, gain, driver, ref0,
                                std::nullopt, sc.sim);
  }
  if (sc.mode != "stale") {
    UpdatePolicy pol;
    pol.period = sc.period;
    pol.window = sc.window;
    pol.noise = sc.noise;
    pol.smoothing_window = sc.smoothing_window;
    pol.estimator = OnlinePidlEstimator(sc.vehicle, sc.pidl);
    out.updated = closed_loop_sim(sc.vehicle, sc.plant, gain, driver, ref0, pol, sc.sim);
  }
  return out;
}

inline std::string reference_csv(const ClosedLoopResult& r) {
  std::string out = "t,r_ref,ay_ref\n";
  for (std::size_t i = 0; i < r.r_ref.size(); ++i) {
    out += io::format_number(r.trajectory.t[i]) + ',' + io::format_number(r.r_ref[i]) +
           ',' + io::format_number(r.ay_ref[i]) + '\n';
  }
  return out;
}

inline json events_json(const std::vector<Event>& events) {
  json out = json::array();
  for (const auto& e : events) out.push_back({{"t", e.time}, {"event", e.description}});
  return out;
}

struct ClosedLoopArgs {
  std::string scenario;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

inline int cmd_closed_loop(const ClosedLoopArgs& a, Streams& s) {
  json doc = io::read_json(a.scenario);
  if (a.seed && doc.is_object()) {
    doc["update"]["noise"]["seed"] = *a.seed;
    doc["update"]["pidl"]["seed"] = *a.seed;
  }
  json effective;
  Scenario sc;
  try {
    sc = parse_scenario(doc, &effective);
  } catch (const ConfigError& e) {
    std::vector<std::string> problems = e.problems();
    for (auto& p : problems) p = a.scenario + ": " + p;
    throw ConfigError(problems);
  }
  const ClosedLoopOutcome res = run_scenario(sc);
  const fs::path dir(a.out_dir);
  json runs = json::object();
  json iae = json::object();
  for (const auto& [name, r] : {std::pair{"stale", &res.stale}, std::pair{"updated", &res.updated}}) {
    if (!*r) continue;
    io::write_trajectory(dir / (std::string(name) + ".csv"), (*r)->trajectory);
    io::write_file(dir / (std::string(name) + "_ref.csv"), reference_csv(**r));
    runs[name] = {{"yaw_iae", (*r)->yaw_iae}, {"events", events_json((*r)->events)}};
    iae[name] = (*r)->yaw_iae;
    s.out << name << " yaw_iae " << io::format_number((*r)->yaw_iae) << "\n";
  }
  json corners = json::array();
  for (const auto& c : robustness_failures(res.gain, sc.vehicle, sc.v_x)) {
    corners.push_back({c.caf, c.car});
  }
  const Eigen::Matrix2d& k = res.gain.K;
  json summary{{"command", "closed-loop"}, {"scenario", effective}, {"runs", runs},
               {"yaw_iae", iae},
               {"gain", {{"K", {{k(0, 0), k(0, 1)}, {k(1, 0), k(1, 1)}}},
                         {"unstable_grid_corners", corners}}}};
  if (res.stale && res.updated) {
    summary["relative_improvement"] =
        (res.stale->yaw_iae - res.updated->yaw_iae) / res.stale->yaw_iae;
  }
  const json bound{{"command", "closed-loop"}, {"config", effective}};
  io::write_json(dir / "summary.json", stamp(summary, bound));
  return kOk;
}

// Entry point ---------------------------------------------------------------

inline int report_config_error(const std::vector<std::string>& problems, Streams& s) {
  for (const auto& p : problems) s.err << "error: " << p << "\n";
  return kConfigError;
}

/// Runs an action, mapping exceptions to exit codes: configuration and input
/// problems give 2, numerical and training failures give 3.
inline int guarded(const std::function<int()>& action, Streams& s) {
  try {
    return action();
  } catch (const ConfigError& e) {
    return report_config_error(e.problems(), s);
  } catch (const ParseError& e) {
    return report_config_error({e.what()}, s);
  } catch (const InvalidParameter& e) {
    return report_config_error({e.what()}, s);
  } catch (const UsageError& e) {
    return report_config_error({e.what()}, s);
  } catch (const MissingField& e) {
    return report_config_error({e.what()}, s);
  } catch (const ShapeMismatch& e) {
    return report_config_error({e.what()}, s);
  } catch (const json::exception& e) {
    return report_config_error({std::string("invalid configuration value: ") + e.what()}, s);
  } catch (const fs::filesystem_error& e) {
    return report_config_error({e.what()}, s);
  } catch (const Error& e) {
    s.err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  Streams s{out, err};
  CLI::App app{"Cornering stiffness identification and yaw-rate regulation"};
  app.name("cornering");
  app.set_version_flag("--version", std::string(io::kVersion));
  app.require_subcommand(1);

  std::function<int()> action;

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate the linear single-track model");
  c_sim->add_option("--config", sim.config, "JSON config file")->check(CLI::ExistingFile);
  c_sim->add_option("--out", sim.out, "Trajectory CSV to write")->required();
  c_sim->add_option("--caf", sim.caf, "Front cornering stiffness");
  c_sim->add_option("--car", sim.car, "Rear cornering stiffness");
  c_sim->add_option("--maneuver", sim.maneuver, "sine, step or lane_change");
  c_sim->add_option("--amplitude", sim.amplitude, "Steering amplitude (rad)");
  c_sim->add_option("--frequency", sim.frequency, "Sine steering frequency (Hz)");
  c_sim->add_option("--vx", sim.v_x, "Longitudinal speed (m/s)");
  c_sim->add_option("--dt", sim.dt, "Sample period (s)");
  c_sim->add_option("--duration", sim.duration, "Duration (s)");
  c_sim->callback([&] { action = [&] { return cmd_simulate(sim, s); }; });

  SensorsArgs sen;
  auto* c_sen = app.add_subcommand("sensors", "Corrupt a clean trajectory into IMU-style readings");
  c_sen->add_option("--config", sen.config, "JSON config file")->check(CLI::ExistingFile);
  c_sen->add_option("--in", sen.in, "Clean trajectory CSV")->required();
  c_sen->add_option("--out", sen.out, "Sensor trajectory CSV to write")->required();
  c_sen->add_option("--sigma-r", sen.sigma_r, "Yaw-rate noise std (rad/s)");
  c_sen->add_option("--sigma-ay", sen.sigma_ay, "Lateral acceleration noise std (m/s^2)");
  c_sen->add_option("--bias-r", sen.bias_r, "Yaw-rate bias");
  c_sen->add_option("--bias-ay", sen.bias_ay, "Lateral acceleration bias");
  c_sen->add_option("--seed", sen.seed, "Noise seed");
  c_sen->add_flag("--derive", sen.derive, "Also write derived vy, rdot and vydot");
  c_sen->callback([&] { action = [&] { return cmd_sensors(sen, s); }; });

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Estimate cornering stiffness from trajectories");
  c_est->add_option("--config", est.config, "JSON config file")->check(CLI::ExistingFile);
  c_est->add_option("--method", est.method, "pidl, rdl or pacejka");
  c_est->add_option("--in", est.inputs, "Trajectory CSV (repeatable)")->required();
  c_est->add_option("--model", est.model, "Trained RDL model (method rdl)");
  c_est->add_option("--out", est.out, "Report JSON (default: stdout)");
  c_est->add_option("--loss-curve", est.loss_curve, "Loss curve CSV");
  c_est->add_option("--iterations", est.iterations, "PIDL iteration cap");
  c_est->add_option("--seed", est.seed, "PIDL initialization seed");
  c_est->add_flag("--aggregate", est.aggregate, "Report mean and half-range uncertainty");
  c_est->add_flag("--no-reference", est.no_reference, "Skip the replay trajectory error");
  c_est->callback([&] { action = [&] { return cmd_estimate(est, s); }; });

  TrainRdlArgs tr;
  auto* c_tr = app.add_subcommand("train-rdl", "Train the supervised sequence regressor");
  c_tr->add_option("--config", tr.config, "JSON config file")->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "Model JSON to write")->required();
  c_tr->add_option("--dataset-dir", tr.dataset_dir, "Also write the labelled dataset here");
  c_tr->add_option("--from-dataset", tr.from_dataset, "Train on a dataset directory")
      ->check(CLI::ExistingDirectory);
  c_tr->add_option("--loss-curve", tr.loss_curve, "Per-epoch loss CSV");
  c_tr->add_option("--epochs", tr.epochs, "Training epochs");
  c_tr->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  c_tr->callback([&] { action = [&] { return cmd_train_rdl(tr, s); }; });

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Compare estimation methods across datasets");
  c_cmp->add_option("--config", cmp.config, "JSON config file")->check(CLI::ExistingFile);
  c_cmp->add_option("--in", cmp.inputs, "Trajectory CSV (repeatable)")->required();
  c_cmp->add_option("--model", cmp.model, "Trained RDL model (else trained inline)");
  c_cmp->add_option("--out", cmp.out, "Report JSON (default: stdout)");
  c_cmp->add_option("--table", cmp.table, "Comparison table CSV");
  c_cmp->add_option("--plot-dir", cmp.plot_dir, "Directory for response CSVs");
  c_cmp->add_option("--seed", cmp.seed, "PIDL initialization seed");
  c_cmp->callback([&] { action = [&] { return cmd_compare(cmp, s); }; });

  ClosedLoopArgs cl;
  auto* c_cl = app.add_subcommand("closed-loop", "Run a yaw-rate regulation scenario");
  c_cl->add_option("--scenario", cl.scenario, "Scenario JSON")->required();
  c_cl->add_option("--out-dir", cl.out_dir, "Output directory")->required();
  c_cl->add_option("--seed", cl.seed, "Sensor noise and estimator seed");
  c_cl->callback([&] { action = [&] { return cmd_closed_loop(cl, s); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  return guarded(action, s);
}

}  // namespace cornering::cli
