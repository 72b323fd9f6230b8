#pragma once

// File formats: trajectory CSV, axle CSV, loss-curve CSV and JSON helpers.
// Numbers are written with 17 significant digits so that text round-trips
// reproduce the in-memory doubles.

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cornering/dynamics.hpp"
#include "cornering/error.hpp"
#include "cornering/tirefit.hpp"

namespace cornering::io {

using json = nlohmann::json;

#ifdef CORNERING_VERSION
inline constexpr const char* kVersion = CORNERING_VERSION;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif

inline constexpr const char* kTrajectoryHeader =
    "t,vx,vy,r,ay,rdot,vydot,delta1,delta2";

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the canonical (key-sorted, compact) serialization.
inline std::string config_hash(const json& config) {
  return hex64(fnv1a(config.dump()));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << content;
}

inline json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
}

/// Parses a CSV with a header row into named columns. Empty cells are
/// reported through `present`.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  std::vector<std::vector<bool>> present;
};

inline Table parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  Table table;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  table.names = split(line, ',');
  table.columns.resize(table.names.size());
  table.present.resize(table.names.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    const std::string where = source + ":" + std::to_string(line_no);
    if (cells.size() != table.names.size()) {
      throw ParseError(where + ": expected " +
                       std::to_string(table.names.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        table.columns[c].push_back(0.0);
        table.present[c].push_back(false);
      } else {
        table.columns[c].push_back(parse_number(cells[c], where));
        table.present[c].push_back(true);
      }
    }
  }
  return table;
}

}  // namespace detail

inline std::string trajectory_to_csv(const Trajectory& tr) {
  std::string out = std::string(kTrajectoryHeader) + "\n";
  auto cell = [](const std::vector<double>& s, std::size_t i) {
    return s.empty() ? std::string() : format_number(s[i]);
  };
  for (std::size_t i = 0; i < tr.size(); ++i) {
    out += cell(tr.t, i) + ',' + cell(tr.v_x, i) + ',' + cell(tr.v_y, i) + ',' +
           cell(tr.r, i) + ',' + cell(tr.a_y, i) + ',' + cell(tr.r_dot, i) +
           ',' + cell(tr.v_y_dot, i) + ',' + cell(tr.delta1, i) + ',' +
           cell(tr.delta2, i) + '\n';
  }
  return out;
}

/// Reads a trajectory CSV. Columns may appear in any order; t, vx, r,
/// delta1 and delta2 are required, the rest may be absent or left empty.
inline Trajectory trajectory_from_csv(const std::string& text,
                                      const std::string& source) {
  const detail::Table table = detail::parse_csv(text, source);
  static const std::map<std::string, std::vector<double> Trajectory::*> fields{
      {"t", &Trajectory::t},         {"vx", &Trajectory::v_x},
      {"vy", &Trajectory::v_y},      {"r", &Trajectory::r},
      {"ay", &Trajectory::a_y},      {"rdot", &Trajectory::r_dot},
      {"vydot", &Trajectory::v_y_dot}, {"delta1", &Trajectory::delta1},
      {"delta2", &Trajectory::delta2}};
  Trajectory tr;
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    const auto it = fields.find(table.names[c]);
    if (it == fields.end()) {
      throw ParseError(source + ":1: unknown column '" + table.names[c] + "'");
    }
    const auto& present = table.present[c];
    std::size_t count = 0;
    for (bool b : present) count += b ? 1 : 0;
    if (count == 0) continue;
    if (count != present.size()) {
      std::size_t row = 0;
      while (present[row]) ++row;
      throw ParseError(source + ":" + std::to_string(row + 2) +
                       ": missing value in column '" + table.names[c] + "'");
    }
    tr.*(it->second) = table.columns[c];
  }
  for (const char* req : {"t", "vx", "r", "delta1", "delta2"}) {
    if ((tr.*(fields.at(req))).empty()) {
      throw ParseError(source + ": required column '" + req + "' missing");
    }
  }
  if (tr.t.size() < 2) throw ParseError(source + ": fewer than two samples");
  tr.dt = tr.t[1] - tr.t[0];
  try {
    tr.validate();
  } catch (const Error& e) {
    throw ParseError(source + ": " + e.what());
  }
  return tr;
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
  return trajectory_from_csv(read_file(path), path.string());
}

inline void write_trajectory(const std::filesystem::path& path,
                             const Trajectory& tr) {
  write_file(path, trajectory_to_csv(tr));
}

inline std::string axle_to_csv(const AxleData& d) {
  std::string out = "alpha,fy\n";
  for (std::size_t i = 0; i < d.alpha.size(); ++i) {
    out += format_number(d.alpha[i]) + ',' + format_number(d.f_y[i]) + '\n';
  }
  return out;
}

inline AxleData axle_from_csv(const std::string& text, const std::string& source,
                              Axle axle = Axle::kFront) {
  const detail::Table table = detail::parse_csv(text, source);
  if (table.names != std::vector<std::string>{"alpha", "fy"}) {
    throw ParseError(source + ":1: expected header 'alpha,fy'");
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t row = 0; row < table.present[c].size(); ++row) {
      if (!table.present[c][row]) {
        throw ParseError(source + ":" + std::to_string(row + 2) +
                         ": missing value");
      }
    }
  }
  return AxleData{table.columns[0], table.columns[1], axle};
}

inline json fit_report(const PacejkaFit& fit) {
  return json{{"B", fit.coeffs.B},
              {"C", fit.coeffs.C},
              {"D", fit.coeffs.D},
              {"E", fit.coeffs.E},
              {"rms", fit.residual_rms},
              {"stiffness", stiffness_from_fit(fit.coeffs)}};
}

inline std::string loss_curve_to_csv(const std::vector<double>& curve) {
  std::string out = "iter,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out += std::to_string(i) + ',' + format_number(curve[i]) + '\n';
  }
  return out;
}

inline json vehicle_to_json(const VehicleParams& p) {
  return json{{"mass", p.mass},
              {"yaw_inertia", p.yaw_inertia},
              {"dist_front", p.dist_front},
              {"dist_rear", p.dist_rear},
              {"nominal_speed", p.nominal_speed}};
}

inline VehicleParams vehicle_from_json(const json& j) {
  VehicleParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "mass") p.mass = value.get<double>();
    else if (key == "yaw_inertia") p.yaw_inertia = value.get<double>();
    else if (key == "dist_front") p.dist_front = value.get<double>();
    else if (key == "dist_rear") p.dist_rear = value.get<double>();
    else if (key == "nominal_speed") p.nominal_speed = value.get<double>();
    else throw ParseError("unknown vehicle field '" + key + "'");
  }
  p.validate();
  return p;
}

inline json noise_to_json(const NoiseModel& n) {
  return json{{"sigma_r", n.sigma_r}, {"sigma_ay", n.sigma_ay},
              {"bias_r", n.bias_r},   {"bias_ay", n.bias_ay},
              {"seed", n.seed}};
}

inline NoiseModel noise_from_json(const json& j) {
  NoiseModel n;
  for (const auto& [key, value] : j.items()) {
    if (key == "sigma_r") n.sigma_r = value.get<double>();
    else if (key == "sigma_ay") n.sigma_ay = value.get<double>();
    else if (key == "bias_r") n.bias_r = value.get<double>();
    else if (key == "bias_ay") n.bias_ay = value.get<double>();
    else if (key == "seed") n.seed = value.get<std::uint64_t>();
    else throw ParseError("unknown noise field '" + key + "'");
  }
  if (n.sigma_r < 0 || n.sigma_ay < 0) {
    throw ParseError("noise sigmas must be non-negative");
  }
  return n;
}

}  // namespace cornering::io
