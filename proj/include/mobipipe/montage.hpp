#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mobipipe/common.hpp"

namespace mobipipe {

struct MontagePosition {
  std::string label;
  double x = 0.0;  // toward the nose
  double y = 0.0;  // toward the left ear
  double z = 0.0;  // up
};

namespace montage_detail {

// azimuth: degrees from the nose, positive toward the left ear
// inclination: degrees down from the vertex
inline MontagePosition site(const char* label, double azimuth_deg,
                            double inclination_deg) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double in = inclination_deg * std::numbers::pi / 180.0;
  return {label, std::sin(in) * std::cos(az), std::sin(in) * std::sin(az),
          std::cos(in)};
}

}  // namespace montage_detail

// Idealized unit-sphere coordinates for the 32-channel cap. The equatorial
// ring follows the classic nasion-inion proportions; TP9/TP10 sit below it.
inline const std::vector<MontagePosition>& standard_montage_32() {
  using montage_detail::site;
  static const std::vector<MontagePosition> sites = {
      site("Fp1", 18.0, 90.0),    site("Fp2", -18.0, 90.0),
      site("Fpz", 0.0, 90.0),     site("F7", 54.0, 90.0),
      site("F8", -54.0, 90.0),    site("F3", 39.0, 59.4),
      site("F4", -39.0, 59.4),    site("Fz", 0.0, 45.0),
      site("FC5", 69.0, 67.5),    site("FC6", -69.0, 67.5),
      site("FC1", 45.0, 22.5),    site("FC2", -45.0, 22.5),
      site("T7", 90.0, 90.0),     site("T8", -90.0, 90.0),
      site("C3", 90.0, 45.0),     site("C4", -90.0, 45.0),
      site("Cz", 0.0, 0.0),       site("CP5", 111.0, 67.5),
      site("CP6", -111.0, 67.5),  site("CP1", 135.0, 22.5),
      site("CP2", -135.0, 22.5),  site("TP9", 108.0, 108.0),
      site("TP10", -108.0, 108.0), site("P7", 126.0, 90.0),
      site("P8", -126.0, 90.0),   site("P3", 141.0, 59.4),
      site("P4", -141.0, 59.4),   site("Pz", 180.0, 45.0),
      site("POz", 180.0, 67.5),   site("O1", 162.0, 90.0),
      site("O2", -162.0, 90.0),   site("Oz", 180.0, 90.0),
  };
  return sites;
}

inline std::vector<std::string> standard_montage_labels() {
  std::vector<std::string> out;
  for (const auto& s : standard_montage_32()) out.push_back(s.label);
  return out;
}

inline const MontagePosition& montage_position(const std::string& label) {
  for (const auto& s : standard_montage_32())
    if (s.label == label) return s;
  throw SchemaError("no montage position for channel '" + label + "'");
}

}  // namespace mobipipe
