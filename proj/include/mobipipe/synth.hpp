#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mobipipe/common.hpp"
#include "mobipipe/analysis.hpp"
#include "mobipipe/events.hpp"
#include "mobipipe/montage.hpp"
#include "mobipipe/rng.hpp"
#include "mobipipe/xdf.hpp"

namespace mobipipe {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

enum class RpShape { Ramp, Exponential };

struct RpConfig {
  double onset_lead_ms = 1000.0;  // ramp begins this long before onset
  double peak_uv = 3.0;           // depth at onset
  double amplitude_jitter = 0.2;  // per-trial multiplicative sd
  RpShape shape = RpShape::Ramp;
  double recovery_s = 0.3;  // linear return to baseline after onset
  // label -> weight; channels not listed get zero
  std::map<std::string, double> topography = {
      {"Cz", 1.0},  {"FC1", 0.85}, {"FC2", 0.85}, {"Fz", 0.7},
      {"C3", 0.65}, {"C4", 0.65},  {"CP1", 0.5},  {"CP2", 0.5},
      {"Pz", 0.35}, {"F3", 0.3},   {"F4", 0.3},   {"FC5", 0.3},
      {"FC6", 0.3}, {"CP5", 0.2},  {"CP6", 0.2},  {"P3", 0.15},
      {"P4", 0.15}};
};

// coordinate shift added to hit trials across the trial window
struct PoseDelta {
  int landmark = 16;  // right wrist
  int axis = 1;       // y
  double delta = -0.02;
};

struct NoiseConfig {
  double eeg_uv = 8.0;    // pink-noise scale per channel
  double imu_sd = 0.3;    // white, m/s^2
  double pose_sd = 0.003; // white, image units per coordinate
};

struct ClockConfig {
  double offset_s = 0.0;
  double drift = 0.0;      // seconds of skew per second
  double jitter_ms = 0.0;  // uniform timestamp jitter, peak to peak
};

struct SynthConfig {
  int n_trials = 120;
  double eeg_rate = 250.0;
  double imu_rate = 60.0;
  double pose_rate = 15.0;

  RpConfig rp;
  double set_point_lead_ms = 544.0;      // used for unknown outcomes
  double set_point_lead_hit_ms = 536.0;
  double set_point_lead_miss_ms = 560.0;
  double hit_probability = 0.53;
  std::vector<PoseDelta> pose_effect = {PoseDelta{}};

  NoiseConfig noise;
  double artifact_fraction = 0.12;  // trials with a frontal transient
  double artifact_uv = 150.0;

  ClockConfig eeg_clock = {0.0, 0.0, 0.2};
  ClockConfig imu_clock = {0.03, 2e-6, 1.0};
  ClockConfig pose_clock = {-0.05, -3e-6, 2.0};

  double trial_spacing_s = 4.4;      // base onset-to-onset gap
  double trial_spacing_jitter_s = 0.8;
  double lead_in_s = 8.0;
  double lead_out_s = 4.0;

  std::uint64_t seed = 1;

  // copy with every stochastic term disabled; ground truth is unchanged
  // because the trial schedule draws from its own generator
  SynthConfig noiseless() const {
    SynthConfig c = *this;
    c.noise = {0.0, 0.0, 0.0};
    c.rp.amplitude_jitter = 0.0;
    c.artifact_fraction = 0.0;
    c.eeg_clock.jitter_ms = 0.0;
    c.imu_clock.jitter_ms = 0.0;
    c.pose_clock.jitter_ms = 0.0;
    return c;
  }
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_trials < 1) throw ParamError("n_trials must be >= 1");
  if (cfg.eeg_rate <= 0 || cfg.imu_rate <= 0 || cfg.pose_rate <= 0)
    throw ParamError("stream rates must be positive");
  if (!(cfg.hit_probability > 0.0 && cfg.hit_probability < 1.0))
    throw ParamError("hit_probability must lie in (0, 1)");
  if (cfg.rp.onset_lead_ms <= 0) throw ParamError("onset_lead_ms must be positive");
  if (cfg.rp.peak_uv < 0) throw ParamError("peak_uv must be nonnegative");
  if (cfg.rp.amplitude_jitter < 0) throw ParamError("amplitude_jitter must be nonnegative");
  if (cfg.set_point_lead_ms <= 0 || cfg.set_point_lead_hit_ms <= 0 ||
      cfg.set_point_lead_miss_ms <= 0)
    throw ParamError("set-point leads must be positive");
  if (cfg.artifact_fraction < 0 || cfg.artifact_fraction >= 1)
    throw ParamError("artifact_fraction must lie in [0, 1)");
  if (cfg.trial_spacing_s < 3.8)
    throw ParamError("trial spacing must leave room for the epoch window");
  if (cfg.trial_spacing_jitter_s < 0 || cfg.lead_in_s < 4.0 || cfg.lead_out_s < 2.0)
    throw ParamError("bad session padding");
  for (const auto& d : cfg.pose_effect)
    if (d.landmark < 0 || d.landmark >= kNumLandmarks || d.axis < 0 ||
        d.axis >= kNumAxes)
      throw ParamError("pose delta indexes a nonexistent coordinate");
}

// ---------------------------------------------------------------------------
// ground truth
// ---------------------------------------------------------------------------

struct TrialTruth {
  double onset_time = 0.0;      // session clock, snapped to the EEG grid
  double set_point_time = 0.0;  // onset + outcome-specific lead, exact
  bool hit = false;
  bool artifact = false;        // carries an injected frontal transient
  double rp_peak_uv = 0.0;      // after per-trial jitter
};

struct ClockTruth {
  std::string stream;
  double offset_s = 0.0;
  double drift = 0.0;
};

struct GroundTruth {
  std::vector<TrialTruth> trials;
  std::vector<ClockTruth> clocks;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["seed"] = gt.seed;
  j["trials"] = nlohmann::json::array();
  for (const auto& t : gt.trials) {
    nlohmann::json e;
    e["onset_time"] = t.onset_time;
    e["set_point_time"] = t.set_point_time;
    e["outcome"] = t.hit ? "hit" : "miss";
    e["artifact"] = t.artifact;
    e["rp_peak_uv"] = t.rp_peak_uv;
    j["trials"].push_back(e);
  }
  j["clocks"] = nlohmann::json::array();
  for (const auto& c : gt.clocks) {
    nlohmann::json e;
    e["stream"] = c.stream;
    e["offset_s"] = c.offset_s;
    e["drift"] = c.drift;
    j["clocks"].push_back(e);
  }
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  try {
    gt.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("trials")) {
      TrialTruth t;
      t.onset_time = e.at("onset_time").get<double>();
      t.set_point_time = e.at("set_point_time").get<double>();
      t.hit = e.at("outcome").get<std::string>() == "hit";
      t.artifact = e.value("artifact", false);
      t.rp_peak_uv = e.value("rp_peak_uv", 0.0);
      gt.trials.push_back(t);
    }
    for (const auto& e : j.at("clocks")) {
      ClockTruth c;
      c.stream = e.at("stream").get<std::string>();
      c.offset_s = e.at("offset_s").get<double>();
      c.drift = e.at("drift").get<double>();
      gt.clocks.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad ground-truth json: ") + e.what());
  }
  return gt;
}

inline void save_ground_truth(const GroundTruth& gt, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParamError("cannot open " + path + " for writing");
  f << to_json(gt).dump(2) << '\n';
}

inline GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParamError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad ground-truth json: ") + e.what());
  }
  return ground_truth_from_json(j);
}

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

namespace synth_detail {

constexpr int kPinkFftLen = 1 << 16;

// Pink noise by shaping a white complex spectrum with a 1/sqrt(f) profile,
// fixed FFT length, unit output variance by analytic normalisation.
inline Eigen::VectorXd pink_noise(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd out(n);
  if (n == 0) return out;
  const int len = kPinkFftLen;
  const int half = len / 2;

  double power = 0.0;
  for (int k = 1; k < half; ++k) power += 2.0 / k;
  power += 1.0 / half;  // nyquist bin appears once and is real
  const double scale = static_cast<double>(len) / std::sqrt(power);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(len));
  std::vector<std::complex<double>> block(static_cast<std::size_t>(len));
  Eigen::Index written = 0;
  while (written < n) {
    spec[0] = 0.0;
    for (int k = 1; k <= half; ++k) {
      const double amp = scale / std::sqrt(static_cast<double>(k));
      const std::complex<double> g(rng.gaussian(), rng.gaussian());
      spec[static_cast<std::size_t>(k)] = amp * g * std::sqrt(0.5);
      if (k != half)
        spec[static_cast<std::size_t>(len - k)] =
            std::conj(spec[static_cast<std::size_t>(k)]);
    }
    spec[static_cast<std::size_t>(half)] =
        std::complex<double>(spec[static_cast<std::size_t>(half)].real() *
                             std::sqrt(2.0), 0.0);
    fft.inv(block, spec);
    const Eigen::Index take = std::min<Eigen::Index>(len, n - written);
    for (Eigen::Index i = 0; i < take; ++i)
      out[written + i] = block[static_cast<std::size_t>(i)].real();
    written += take;
  }
  return out;
}

// Negative pre-movement deflection: 0 at tau = -lead, -1 at tau = 0, back to
// 0 over the recovery span. Zero outside.
inline double rp_template(double tau, double lead_s, double recovery_s,
                          RpShape shape) {
  if (tau < -lead_s || tau > recovery_s) return 0.0;
  if (tau <= 0.0) {
    const double u = (tau + lead_s) / lead_s;  // 0..1
    if (shape == RpShape::Ramp) return -u;
    const double k = 3.0;
    return -(std::exp(k * u) - 1.0) / (std::exp(k) - 1.0);
  }
  return -(1.0 - tau / recovery_s);
}

// raw timestamp of a session-clock instant for a skewed stream clock;
// correct_clock_offsets inverts this exactly because the offset samples lie
// on the line offset(raw) = offset_s + drift * raw
inline double to_raw_clock(double t, const ClockConfig& c) {
  return (t - c.offset_s) / (1.0 + c.drift);
}

inline std::vector<ClockOffsetSample> clock_offset_samples(
    const ClockConfig& c, double t_end) {
  std::vector<ClockOffsetSample> out;
  for (double t = 0.0; t <= t_end; t += 5.0) {
    ClockOffsetSample s;
    s.collection_time = to_raw_clock(t, c);
    s.offset = t - s.collection_time;
    out.push_back(s);
  }
  return out;
}

inline Eigen::VectorXd raw_timestamps(double rate, Eigen::Index n,
                                      const ClockConfig& c, Rng& rng) {
  Eigen::VectorXd ts(n);
  const double max_jitter = 0.45 / rate * 1000.0;
  const double jit = std::min(c.jitter_ms, max_jitter) / 1000.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    ts[i] = to_raw_clock(t, c) + (rng.uniform() - 0.5) * jit;
  }
  return ts;
}

// piecewise-linear value: points must be sorted by time
inline double piecewise(const std::vector<std::pair<double, double>>& pts,
                        double t) {
  if (t <= pts.front().first) return pts.front().second;
  if (t >= pts.back().first) return pts.back().second;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (t <= pts[i].first) {
      const double u =
          (t - pts[i - 1].first) / (pts[i].first - pts[i - 1].first);
      return pts[i - 1].second +
             u * (pts[i].second - pts[i - 1].second);
    }
  return pts.back().second;
}

struct SkeletonPoint {
  double x, y, z;
};

// resting landmark layout in image coordinates (y grows downward)
inline const std::array<SkeletonPoint, 33>& rest_skeleton() {
  static const std::array<SkeletonPoint, 33> pts = [] {
    std::array<SkeletonPoint, 33> p{};
    auto set = [&p](int i, double x, double y, double z) {
      p[static_cast<std::size_t>(i)] = {x, y, z};
    };
    set(0, 0.50, 0.18, 2.0);   // nose
    set(1, 0.47, 0.165, 2.0);  // left eye inner
    set(2, 0.46, 0.165, 2.0);  // left eye
    set(3, 0.45, 0.165, 2.0);  // left eye outer
    set(4, 0.53, 0.165, 2.0);  // right eye inner
    set(5, 0.54, 0.165, 2.0);  // right eye
    set(6, 0.55, 0.165, 2.0);  // right eye outer
    set(7, 0.43, 0.18, 2.1);   // left ear
    set(8, 0.57, 0.18, 2.1);   // right ear
    set(9, 0.48, 0.21, 2.0);   // mouth left
    set(10, 0.52, 0.21, 2.0);  // mouth right
    set(11, 0.38, 0.32, 2.0);  // left shoulder
    set(12, 0.62, 0.32, 2.0);  // right shoulder
    set(13, 0.34, 0.52, 2.0);  // left elbow
    set(14, 0.66, 0.52, 2.0);  // right elbow
    set(15, 0.36, 0.72, 1.9);  // left wrist
    set(16, 0.64, 0.72, 1.9);  // right wrist
    set(17, 0.355, 0.77, 1.9); // left pinky
    set(18, 0.645, 0.77, 1.9); // right pinky
    set(19, 0.37, 0.77, 1.85); // left index
    set(20, 0.63, 0.77, 1.85); // right index
    set(21, 0.375, 0.745, 1.9);// left thumb
    set(22, 0.625, 0.745, 1.9);// right thumb
    set(23, 0.44, 0.62, 2.0);  // left hip
    set(24, 0.56, 0.62, 2.0);  // right hip
    set(25, 0.44, 0.88, 2.0);  // left knee
    set(26, 0.56, 0.88, 2.0);  // right knee
    set(27, 0.44, 1.12, 2.0);  // left ankle
    set(28, 0.56, 1.12, 2.0);  // right ankle
    set(29, 0.43, 1.16, 2.05); // left heel
    set(30, 0.57, 1.16, 2.05); // right heel
    set(31, 0.45, 1.19, 1.95); // left foot index
    set(32, 0.55, 1.19, 1.95); // right foot index
    return p;
  }();
  return pts;
}

}  // namespace synth_detail

// ---------------------------------------------------------------------------
// session generation
// ---------------------------------------------------------------------------

inline std::pair<RecordingSet, GroundTruth> generate_session(
    const SynthConfig& cfg) {
  validate(cfg);
  using namespace synth_detail;

  Rng rng_trials(Rng::derive(cfg.seed, 1));
  Rng rng_eeg(Rng::derive(cfg.seed, 2));
  Rng rng_imu(Rng::derive(cfg.seed, 3));
  Rng rng_pose(Rng::derive(cfg.seed, 4));
  Rng rng_clock(Rng::derive(cfg.seed, 5));

  const double fs = cfg.eeg_rate;
  auto snap = [fs](double t) { return std::round(t * fs) / fs; };

  // trial schedule on the session clock, onsets snapped to the EEG grid
  GroundTruth gt;
  gt.seed = cfg.seed;
  double t = cfg.lead_in_s;
  for (int i = 0; i < cfg.n_trials; ++i) {
    TrialTruth tr;
    tr.onset_time = snap(t);
    tr.hit = rng_trials.bernoulli(cfg.hit_probability);
    const double lead_ms =
        tr.hit ? cfg.set_point_lead_hit_ms : cfg.set_point_lead_miss_ms;
    tr.set_point_time = tr.onset_time + lead_ms / 1000.0;
    double amp = cfg.rp.peak_uv *
                 (1.0 + cfg.rp.amplitude_jitter * rng_trials.gaussian());
    tr.rp_peak_uv = std::max(0.0, amp);
    tr.artifact = rng_trials.bernoulli(cfg.artifact_fraction);
    gt.trials.push_back(tr);
    t += cfg.trial_spacing_s +
         cfg.trial_spacing_jitter_s * rng_trials.uniform();
  }
  const double t_end = gt.trials.back().onset_time + cfg.lead_out_s;
  gt.clocks = {{"SynthEEG", cfg.eeg_clock.offset_s, cfg.eeg_clock.drift},
               {"WristIMU", cfg.imu_clock.offset_s, cfg.imu_clock.drift},
               {"PoseLandmarks", cfg.pose_clock.offset_s, cfg.pose_clock.drift}};

  RecordingSet set;
  set.participant_id = "synth-" + std::to_string(cfg.seed);
  for (const auto& tr : gt.trials) {
    TrialOutcome o;
    o.trial_index = static_cast<int>(set.outcomes.size());
    o.hit = tr.hit;
    set.outcomes.push_back(o);
  }

  // ---- EEG ----
  {
    TimedStream eeg;
    eeg.info.stream_id = 1;
    eeg.info.name = "SynthEEG";
    eeg.info.kind = StreamKind::EEG;
    eeg.info.nominal_rate = fs;
    eeg.info.channel_labels = standard_montage_labels();
    eeg.info.channel_format = ChannelFormat::Double64;

    const auto n = static_cast<Eigen::Index>(std::lround(t_end * fs));
    const auto n_ch = static_cast<Eigen::Index>(eeg.info.channel_labels.size());
    eeg.samples.resize(n, n_ch);

    const double lead_s = cfg.rp.onset_lead_ms / 1000.0;
    for (Eigen::Index ch = 0; ch < n_ch; ++ch) {
      const std::string& label = eeg.info.channel_labels[static_cast<std::size_t>(ch)];
      const auto it = cfg.rp.topography.find(label);
      const double w = it == cfg.rp.topography.end() ? 0.0 : it->second;

      Eigen::VectorXd col;
      if (cfg.noise.eeg_uv > 0.0) {
        col = cfg.noise.eeg_uv * pink_noise(rng_eeg, n);
      } else {
        col = Eigen::VectorXd::Zero(n);
      }
      if (w != 0.0) {
        for (const auto& tr : gt.trials) {
          const auto i0 = std::max<Eigen::Index>(
              0, static_cast<Eigen::Index>(
                     std::floor((tr.onset_time - lead_s) * fs)));
          const auto i1 = std::min<Eigen::Index>(
              n, static_cast<Eigen::Index>(std::ceil(
                     (tr.onset_time + cfg.rp.recovery_s) * fs)) + 1);
          for (Eigen::Index i = i0; i < i1; ++i) {
            const double tau = static_cast<double>(i) / fs - tr.onset_time;
            col[i] += tr.rp_peak_uv * w *
                      rp_template(tau, lead_s, cfg.rp.recovery_s, cfg.rp.shape);
          }
        }
      }
      eeg.samples.col(ch) = col;
    }

    // frontal transient on flagged trials: damped low-frequency wave in the
    // pre-onset second
    const std::vector<std::string> frontal = {"Fp1", "Fp2", "Fpz", "F7"};
    for (const auto& tr : gt.trials) {
      if (!tr.artifact) continue;
      const double a0 = tr.onset_time - 1.5;
      for (Eigen::Index ch = 0; ch < n_ch; ++ch) {
        const std::string& label =
            eeg.info.channel_labels[static_cast<std::size_t>(ch)];
        if (std::find(frontal.begin(), frontal.end(), label) == frontal.end())
          continue;
        const auto i0 = std::max<Eigen::Index>(
            0, static_cast<Eigen::Index>(std::floor(a0 * fs)));
        const auto i1 = std::min<Eigen::Index>(
            n, static_cast<Eigen::Index>(std::ceil((a0 + 1.0) * fs)));
        for (Eigen::Index i = i0; i < i1; ++i) {
          const double u = static_cast<double>(i) / fs - a0;
          eeg.samples(i, ch) += cfg.artifact_uv *
                                std::exp(-3.0 * u) *
                                std::sin(2.0 * std::numbers::pi * 4.0 * u);
        }
      }
    }

    eeg.timestamps = raw_timestamps(fs, n, cfg.eeg_clock, rng_clock);
    eeg.clock_offsets = clock_offset_samples(cfg.eeg_clock, t_end);
    set.streams.push_back(std::move(eeg));
  }

  // ---- IMU ----
  {
    TimedStream imu;
    imu.info.stream_id = 2;
    imu.info.name = "WristIMU";
    imu.info.kind = StreamKind::IMU;
    imu.info.nominal_rate = cfg.imu_rate;
    imu.info.channel_labels = {"acc_x", "acc_y", "acc_z"};
    imu.info.channel_format = ChannelFormat::Double64;

    const auto n = static_cast<Eigen::Index>(std::lround(t_end * cfg.imu_rate));
    imu.samples.setZero(n, 3);

    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = static_cast<double>(i) / cfg.imu_rate;
      // physiological tremor ripple keeps the onset baseline sd positive
      // even in noiseless runs; it fades in the aiming second before onset
      double ripple_gain = 1.0;
      double burst = 0.0;
      for (const auto& tr : gt.trials) {
        const double tau = ti - tr.onset_time;
        if (tau >= -0.8 && tau < 0.0) ripple_gain = 0.0;
        if (tau >= 0.0 && tau < 2.0) {
          const double plateau_end =
              tr.set_point_time - tr.onset_time + 0.2;
          if (tau < 0.15) {
            burst = 8.0 * (tau / 0.15) * (tau / 0.15);
          } else if (tau < plateau_end) {
            burst = 8.0;
          } else {
            burst = std::max(0.0, 8.0 * (1.0 - (tau - plateau_end) / 1.0));
          }
        }
      }
      const double ripple =
          0.05 * std::sin(2.0 * std::numbers::pi * 7.3 * ti) * ripple_gain;
      imu.samples(i, 0) = 2.0 + ripple + burst +
                          cfg.noise.imu_sd * rng_imu.gaussian();
      imu.samples(i, 1) = 0.0;
      imu.samples(i, 2) = 0.0;
    }

    imu.timestamps = raw_timestamps(cfg.imu_rate, n, cfg.imu_clock, rng_clock);
    imu.clock_offsets = clock_offset_samples(cfg.imu_clock, t_end);
    set.streams.push_back(std::move(imu));
  }

  // ---- pose ----
  {
    TimedStream pose;
    pose.info.stream_id = 3;
    pose.info.name = "PoseLandmarks";
    pose.info.kind = StreamKind::Pose;
    pose.info.nominal_rate = cfg.pose_rate;
    for (const auto& name : pose_landmark_names())
      for (const char* ax : {"_x", "_y", "_z"})
        pose.info.channel_labels.push_back(name + ax);
    pose.info.channel_format = ChannelFormat::Double64;

    const auto n = static_cast<Eigen::Index>(std::lround(t_end * cfg.pose_rate));
    pose.samples.resize(n, kNumLandmarks * kNumAxes);
    const auto& rest = rest_skeleton();
    const double eye_y = rest[5].y;

    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = static_cast<double>(i) / cfg.pose_rate;

      // epoch windows of neighbouring trials can overlap slightly; the
      // nearest onset wins so the hit shift stays attached to its own trial
      const TrialTruth* active = nullptr;
      double best = 1e300;
      for (const auto& tr : gt.trials) {
        const double d = std::abs(ti - tr.onset_time);
        if (d < best) {
          best = d;
          active = &tr;
        }
      }
      if (active && !(ti >= active->onset_time - 2.6 &&
                      ti <= active->onset_time + 2.4))
        active = nullptr;

      for (int lm = 0; lm < kNumLandmarks; ++lm) {
        const auto& r = rest[static_cast<std::size_t>(lm)];
        double x = r.x, y = r.y, z = r.z;

        // slow deterministic sway, unique phase per landmark
        const double phase = 0.7 * lm;
        x += 0.002 * std::sin(2.0 * std::numbers::pi * 0.21 * ti + phase);
        y += 0.002 * std::sin(2.0 * std::numbers::pi * 0.17 * ti + 2.0 * phase);

        if (active) {
          const double o = active->onset_time;
          const double s = active->set_point_time;
          double hit_delta_y = 0.0, hit_delta_x = 0.0, hit_delta_z = 0.0;
          if (active->hit)
            for (const auto& d : cfg.pose_effect)
              if (d.landmark == lm) {
                if (d.axis == 0) hit_delta_x += d.delta;
                if (d.axis == 1) hit_delta_y += d.delta;
                if (d.axis == 2) hit_delta_z += d.delta;
              }
          x += hit_delta_x;
          z += hit_delta_z;

          if (lm >= 13 && lm <= 22) {  // elbows, wrists, hands
            const bool hand = lm >= 15;
            const double depth = hand ? 1.0 : 0.55;
            const double y_rest = r.y + hit_delta_y;
            // raise segment passes exactly through (set point, eye level)
            const double slope = (eye_y - y_rest) / (s - o);
            const double y_deep = eye_y + slope * 0.25 * (s - o);
            const std::vector<std::pair<double, double>> track = {
                {o, y_rest},
                {s + 0.25 * (s - o), y_deep},
                {s + 0.45, y_deep},
                {o + 2.2, y_rest}};
            const double y_arm =
                y_rest + depth * (piecewise(track, ti) - y_rest);
            y = y_arm + (y - r.y);  // keep sway on top
          } else {
            y += hit_delta_y;
          }
        }

        const Eigen::Index row = lm * kNumAxes;
        pose.samples(i, row + 0) = x + cfg.noise.pose_sd * rng_pose.gaussian();
        pose.samples(i, row + 1) = y + cfg.noise.pose_sd * rng_pose.gaussian();
        pose.samples(i, row + 2) = z + cfg.noise.pose_sd * rng_pose.gaussian();
      }
    }

    pose.timestamps =
        raw_timestamps(cfg.pose_rate, n, cfg.pose_clock, rng_clock);
    pose.clock_offsets = clock_offset_samples(cfg.pose_clock, t_end);
    set.streams.push_back(std::move(pose));
  }

  return {std::move(set), std::move(gt)};
}

// ---------------------------------------------------------------------------
// cohorts
// ---------------------------------------------------------------------------

struct CohortMember {
  SynthConfig config;
  RecordingSet recording;
  GroundTruth truth;
};

inline SynthConfig cohort_member_config(const SynthConfig& base,
                                        std::uint64_t master_seed,
                                        int participant) {
  SynthConfig cfg = base;
  cfg.seed = Rng::derive(master_seed, static_cast<std::uint64_t>(participant) + 1);
  Rng rng(Rng::derive(cfg.seed, 99));
  cfg.rp.peak_uv = std::max(0.2, base.rp.peak_uv * (1.0 + 0.15 * rng.gaussian()));
  cfg.hit_probability = std::clamp(
      base.hit_probability + 0.08 * (rng.uniform() - 0.5), 0.2, 0.8);
  cfg.noise.eeg_uv = base.noise.eeg_uv * (1.0 + 0.2 * rng.uniform());
  cfg.set_point_lead_hit_ms =
      base.set_point_lead_hit_ms + 10.0 * rng.gaussian();
  cfg.set_point_lead_miss_ms =
      base.set_point_lead_miss_ms + 10.0 * rng.gaussian();
  return cfg;
}

inline std::vector<CohortMember> generate_cohort(int n_participants,
                                                 const SynthConfig& base,
                                                 std::uint64_t seed) {
  if (n_participants < 1) throw ParamError("cohort needs at least 1 member");
  std::vector<CohortMember> out;
  for (int p = 0; p < n_participants; ++p) {
    CohortMember m;
    m.config = cohort_member_config(base, seed, p);
    auto [rec, gt] = generate_session(m.config);
    m.recording = std::move(rec);
    m.truth = std::move(gt);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace mobipipe
