#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/xdf.hpp"

namespace mobipipe {

enum class Outcome { Hit, Miss, Unknown };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Hit: return "hit";
    case Outcome::Miss: return "miss";
    case Outcome::Unknown: return "unknown";
  }
  return "unknown";
}

struct ShotEvent {
  int trial_index = 0;
  double set_point_time = 0.0;
  double onset_time = 0.0;
  Outcome outcome = Outcome::Unknown;
};

struct OnsetConfig {
  double baseline_start = -2.5;  // seconds relative to the set-point
  double baseline_end = -2.0;
  double threshold_k = 1.0;
  double refractory = 2.0;
};

inline void validate(const OnsetConfig& cfg) {
  if (!(cfg.baseline_start < cfg.baseline_end && cfg.baseline_end < 0.0))
    throw ParamError("baseline window must satisfy start < end < 0");
  if (!(cfg.threshold_k > 0.0)) throw ParamError("threshold_k must be positive");
  if (cfg.refractory < 0.0) throw ParamError("refractory must be nonnegative");
}

inline Eigen::VectorXd acceleration_magnitude(const Eigen::VectorXd& ax,
                                              const Eigen::VectorXd& ay,
                                              const Eigen::VectorXd& az) {
  if (ax.size() != ay.size() || ay.size() != az.size())
    throw ParamError("acceleration axes must have equal length");
  return (ax.array().square() + ay.array().square() + az.array().square())
      .sqrt()
      .matrix();
}

// Pose y-axes differ between image coordinates (y grows downward, so the
// wrist being above the eye means wrist_y < eye_y) and recentred ones.
enum class CrossPolarity { WristAboveMeansSmallerY, WristAboveMeansLargerY };

inline std::vector<double> detect_set_points(
    const Eigen::VectorXd& eye_y, const Eigen::VectorXd& wrist_y,
    const Eigen::VectorXd& timestamps, double refractory = 2.0,
    CrossPolarity polarity = CrossPolarity::WristAboveMeansSmallerY) {
  if (eye_y.size() != wrist_y.size() || eye_y.size() != timestamps.size())
    throw ParamError("set-point series must share the timestamp grid");
  const double sign =
      polarity == CrossPolarity::WristAboveMeansSmallerY ? 1.0 : -1.0;
  std::vector<double> out;
  double last_accepted = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < eye_y.size(); ++i) {
    const double prev = sign * (wrist_y[i - 1] - eye_y[i - 1]);
    const double cur = sign * (wrist_y[i] - eye_y[i]);
    if (std::isnan(prev) || std::isnan(cur)) continue;
    if (!(prev >= 0.0 && cur < 0.0)) continue;  // crossing into "above"
    if (timestamps[i] - last_accepted < refractory) continue;
    out.push_back(timestamps[i]);
    last_accepted = timestamps[i];
  }
  return out;
}

// Threshold is the baseline mean plus k standard deviations; walking back
// from the set-point, the onset is the latest sample strictly below it.
inline double detect_movement_onset(const Eigen::VectorXd& accel_mag,
                                    const Eigen::VectorXd& timestamps,
                                    double set_point,
                                    const OnsetConfig& cfg = {},
                                    double* threshold_out = nullptr) {
  validate(cfg);
  if (accel_mag.size() != timestamps.size())
    throw ParamError("magnitude series must share the timestamp grid");
  const Eigen::Index n = timestamps.size();
  if (n == 0 || set_point < timestamps[0] || set_point > timestamps[n - 1])
    throw WindowError("set-point outside the recording");

  const double b0 = set_point + cfg.baseline_start;
  const double b1 = set_point + cfg.baseline_end;
  if (b0 < timestamps[0])
    throw WindowError("baseline window starts before the recording");

  double sum = 0.0, sumsq = 0.0;
  Eigen::Index count = 0, first_baseline = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = timestamps[i];
    if (t < b0) continue;
    if (t > b1) break;
    if (std::isnan(accel_mag[i]))
      throw WindowError("baseline window contains missing samples");
    if (first_baseline < 0) first_baseline = i;
    sum += accel_mag[i];
    sumsq += accel_mag[i] * accel_mag[i];
    ++count;
  }
  if (count < 2) throw WindowError("baseline window has fewer than 2 samples");
  const double mean = sum / static_cast<double>(count);
  const double var =
      std::max(0.0, (sumsq - sum * mean) / static_cast<double>(count - 1));
  const double threshold = mean + cfg.threshold_k * std::sqrt(var);
  if (threshold_out) *threshold_out = threshold;

  Eigen::Index sp_idx = n - 1;
  while (sp_idx > 0 && timestamps[sp_idx] > set_point) --sp_idx;

  if (!std::isnan(accel_mag[sp_idx]) && accel_mag[sp_idx] < threshold)
    return set_point;
  for (Eigen::Index i = sp_idx - 1; i >= first_baseline; --i) {
    if (std::isnan(accel_mag[i])) continue;
    if (accel_mag[i] < threshold) return timestamps[i];
  }
  throw DetectionError("no sample below threshold before the set-point");
}

// Session-level pass over an aligned recording: set-points from the pose
// eye/wrist channels, one onset per set-point from the IMU magnitude, and
// outcomes joined by trial order. Trials whose onset fails are dropped.
inline std::vector<ShotEvent> detect_shot_events(
    const RecordingSet& aligned, const OnsetConfig& cfg = {},
    CrossPolarity polarity = CrossPolarity::WristAboveMeansSmallerY,
    const std::string& eye_channel = "right_eye_y",
    const std::string& wrist_channel = "right_wrist_y", Log* log = nullptr) {
  validate(cfg);
  const TimedStream* pose = aligned.find_kind(StreamKind::Pose);
  const TimedStream* imu = aligned.find_kind(StreamKind::IMU);
  if (!pose) throw InvariantError("no pose stream in recording");
  if (!imu) throw InvariantError("no IMU stream in recording");

  auto channel_index = [](const TimedStream& s, const std::string& label) {
    for (std::size_t i = 0; i < s.info.channel_labels.size(); ++i)
      if (s.info.channel_labels[i] == label) return static_cast<Eigen::Index>(i);
    throw SchemaError("channel '" + label + "' not found in stream '" +
                      s.info.name + "'");
  };

  const Eigen::VectorXd eye = pose->samples.col(channel_index(*pose, eye_channel));
  const Eigen::VectorXd wrist =
      pose->samples.col(channel_index(*pose, wrist_channel));

  Eigen::VectorXd mag;
  if (imu->samples.cols() == 1) {
    mag = imu->samples.col(0);
  } else if (imu->samples.cols() == 3) {
    mag = acceleration_magnitude(imu->samples.col(0), imu->samples.col(1),
                                 imu->samples.col(2));
  } else {
    throw SchemaError("IMU stream must have 1 (magnitude) or 3 (axes) channels");
  }

  const auto set_points =
      detect_set_points(eye, wrist, pose->timestamps, cfg.refractory, polarity);

  std::vector<ShotEvent> events;
  for (std::size_t k = 0; k < set_points.size(); ++k) {
    ShotEvent ev;
    ev.trial_index = static_cast<int>(k);
    ev.set_point_time = set_points[k];
    for (const auto& o : aligned.outcomes)
      if (o.trial_index == ev.trial_index)
        ev.outcome = o.hit ? Outcome::Hit : Outcome::Miss;
    try {
      ev.onset_time =
          detect_movement_onset(mag, imu->timestamps, ev.set_point_time, cfg);
    } catch (const Error& e) {
      log_warn(log, "trial " + std::to_string(ev.trial_index) + " dropped: " +
                        e.what());
      continue;
    }
    events.push_back(ev);
  }
  return events;
}

inline std::string shot_events_csv(const std::vector<ShotEvent>& events) {
  CsvWriter csv({"trial", "set_point_s", "onset_s", "outcome"});
  for (const auto& e : events) {
    csv.cell(e.trial_index)
        .cell(e.set_point_time)
        .cell(e.onset_time)
        .cell(to_string(e.outcome));
    csv.end_row();
  }
  return csv.str();
}

}  // namespace mobipipe
