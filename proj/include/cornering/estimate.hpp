#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cornering/error.hpp"

namespace cornering {

enum class Method { kPidl, kRdl, kPacejka };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kPidl: return "pidl";
    case Method::kRdl: return "rdl";
    case Method::kPacejka: return "pacejka";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  if (s == "pidl") return Method::kPidl;
  if (s == "rdl") return Method::kRdl;
  if (s == "pacejka") return Method::kPacejka;
  throw ParseError("unknown estimation method '" + s + "'");
}

/// A front/rear cornering stiffness pair with how it was obtained.
struct StiffnessEstimate {
  double caf = 0.0;  // N/rad
  double car = 0.0;  // N/rad
  Method method = Method::kPidl;
  std::vector<double> loss_curve;
  std::optional<double> replay_error;
};

}  // namespace cornering
