#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mobipipe/align.hpp"
#include "mobipipe/analysis.hpp"
#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/events.hpp"
#include "mobipipe/preprocess.hpp"
#include "mobipipe/rng.hpp"
#include "mobipipe/synth.hpp"
#include "mobipipe/xdf.hpp"

namespace mobipipe {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Every tunable the processing chain uses, in one overridable place. The
// defaults are the values the rest of the library documents; nothing below
// is hard-coded anywhere else in the driver.
struct PipelineConfig {
  PreprocessConfig preprocess;
  OnsetConfig onset;
  double set_point_refractory_s = 2.0;
  CrossPolarity polarity = CrossPolarity::WristAboveMeansSmallerY;
  std::string eye_channel = "right_eye_y";
  std::string wrist_channel = "right_wrist_y";

  double bin_start_ms = -1500.0;
  double bin_end_ms = 0.0;
  double bin_ms = 100.0;
  std::vector<std::string> presence_channels = default_presence_channels();
  PresenceTest presence_test = PresenceTest::Wilcoxon;
  double fdr_q = 0.05;

  double pose_bin_start_ms = -2500.0;
  double pose_bin_end_ms = 1000.0;
  double pose_bin_ms = 100.0;
  double rms_window_ms = 10.0;
  double landmark_p0 = 0.05;

  int sim_participants = 8;
  SynthConfig sim;

  std::uint64_t seed = 1;
  int workers = 1;
};

namespace pipeline_detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParamError("config key " + key + " wants a number, got '" + v + "'");
  }
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ParamError("config key " + key + " wants an integer, got '" + v +
                     "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ParamError("config key " + key + " wants an unsigned integer, got '" +
                     v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      const std::string t = trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string t = trim(cur);
  if (!t.empty()) out.push_back(t);
  return out;
}

inline std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

struct ConfigEntry {
  std::string key;
  std::string comment;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

inline std::vector<ConfigEntry> build_config_entries() {
  std::vector<ConfigEntry> e;
  auto num = [&e](const std::string& key, const std::string& comment,
                  std::function<double&(PipelineConfig&)> ref) {
    e.push_back(
        {key, comment,
         [ref](const PipelineConfig& c) {
           return fmt_double(ref(const_cast<PipelineConfig&>(c)));
         },
         [ref, key](PipelineConfig& c, const std::string& v) {
           ref(c) = parse_double(key, v);
         }});
  };
  auto integer = [&e](const std::string& key, const std::string& comment,
                      std::function<int&(PipelineConfig&)> ref) {
    e.push_back(
        {key, comment,
         [ref](const PipelineConfig& c) {
           return std::to_string(ref(const_cast<PipelineConfig&>(c)));
         },
         [ref, key](PipelineConfig& c, const std::string& v) {
           ref(c) = static_cast<int>(parse_long(key, v));
         }});
  };

  num("ica_highpass_hz", "decomposition pass band edges and filter orders",
      [](PipelineConfig& c) -> double& { return c.preprocess.ica_highpass.cutoff; });
  integer("ica_highpass_order", "",
          [](PipelineConfig& c) -> int& { return c.preprocess.ica_highpass.order; });
  num("ica_lowpass_hz", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.ica_lowpass.cutoff; });
  integer("ica_lowpass_order", "",
          [](PipelineConfig& c) -> int& { return c.preprocess.ica_lowpass.order; });
  num("erp_highpass_hz", "waveform pass band edges and filter orders",
      [](PipelineConfig& c) -> double& { return c.preprocess.erp_highpass.cutoff; });
  integer("erp_highpass_order", "",
          [](PipelineConfig& c) -> int& { return c.preprocess.erp_highpass.order; });
  num("erp_lowpass_hz", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.erp_lowpass.cutoff; });
  integer("erp_lowpass_order", "",
          [](PipelineConfig& c) -> int& { return c.preprocess.erp_lowpass.order; });

  num("ica_epoch_start_s", "epoch windows, seconds relative to onset",
      [](PipelineConfig& c) -> double& { return c.preprocess.ica_epoch_start; });
  num("ica_epoch_end_s", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.ica_epoch_end; });
  num("erp_epoch_start_s", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.erp_epoch_start; });
  num("erp_epoch_end_s", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.erp_epoch_end; });
  num("baseline_start_s", "baseline correction window",
      [](PipelineConfig& c) -> double& { return c.preprocess.baseline_start; });
  num("baseline_end_s", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.baseline_end; });

  num("jointprob_sd_ica", "epoch rejection thresholds, in SD units",
      [](PipelineConfig& c) -> double& { return c.preprocess.jointprob_sd_ica; });
  num("jointprob_sd_final", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.jointprob_sd_final; });
  num("bad_channel_k", "channel RMS flag threshold, in SD units",
      [](PipelineConfig& c) -> double& { return c.preprocess.bad_channel_k; });
  e.push_back(
      {"reference_channels", "average re-reference targets",
       [](const PipelineConfig& c) {
         return join_list(c.preprocess.reference_channels);
       },
       [](PipelineConfig& c, const std::string& v) {
         c.preprocess.reference_channels = split_list(v);
       }});
  e.push_back(
      {"ica_max_steps", "decomposition iteration cap and tolerance",
       [](const PipelineConfig& c) {
         return std::to_string(c.preprocess.ica.max_steps);
       },
       [](PipelineConfig& c, const std::string& v) {
         c.preprocess.ica.max_steps =
             static_cast<int>(parse_long("ica_max_steps", v));
       }});
  num("ica_tol", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.ica.tol; });
  num("component_threshold_heart", "component class rejection thresholds",
      [](PipelineConfig& c) -> double& { return c.preprocess.component_thresholds.heart; });
  num("component_threshold_line_noise", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.component_thresholds.line_noise; });
  num("component_threshold_muscle", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.component_thresholds.muscle; });
  num("component_threshold_eye", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.component_thresholds.eye; });
  num("component_threshold_channel_noise", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.component_thresholds.channel_noise; });
  num("component_threshold_other", "",
      [](PipelineConfig& c) -> double& { return c.preprocess.component_thresholds.other; });

  num("onset_baseline_start_s", "movement-onset detector, relative to set point",
      [](PipelineConfig& c) -> double& { return c.onset.baseline_start; });
  num("onset_baseline_end_s", "",
      [](PipelineConfig& c) -> double& { return c.onset.baseline_end; });
  num("onset_threshold_k", "",
      [](PipelineConfig& c) -> double& { return c.onset.threshold_k; });
  num("set_point_refractory_s", "minimum spacing between detected set points",
      [](PipelineConfig& c) -> double& { return c.set_point_refractory_s; });
  e.push_back({"eye_channel", "pose channels the set-point detector reads",
               [](const PipelineConfig& c) { return c.eye_channel; },
               [](PipelineConfig& c, const std::string& v) {
                 c.eye_channel = v;
               }});
  e.push_back({"wrist_channel", "",
               [](const PipelineConfig& c) { return c.wrist_channel; },
               [](PipelineConfig& c, const std::string& v) {
                 c.wrist_channel = v;
               }});
  e.push_back(
      {"wrist_above_means_smaller_y",
       "true when the camera's y axis grows downward",
       [](const PipelineConfig& c) {
         return c.polarity == CrossPolarity::WristAboveMeansSmallerY
                    ? std::string("true")
                    : std::string("false");
       },
       [](PipelineConfig& c, const std::string& v) {
         if (v == "true")
           c.polarity = CrossPolarity::WristAboveMeansSmallerY;
         else if (v == "false")
           c.polarity = CrossPolarity::WristAboveMeansLargerY;
         else
           throw ParamError(
               "wrist_above_means_smaller_y wants true or false, got '" + v +
               "'");
       }});

  num("bin_start_ms", "amplitude bin grid over the pre-onset window",
      [](PipelineConfig& c) -> double& { return c.bin_start_ms; });
  num("bin_end_ms", "",
      [](PipelineConfig& c) -> double& { return c.bin_end_ms; });
  num("bin_ms", "",
      [](PipelineConfig& c) -> double& { return c.bin_ms; });
  e.push_back({"presence_channels", "channels entering the presence table",
               [](const PipelineConfig& c) {
                 return join_list(c.presence_channels);
               },
               [](PipelineConfig& c, const std::string& v) {
                 c.presence_channels = split_list(v);
               }});
  e.push_back(
      {"presence_test", "wilcoxon or t",
       [](const PipelineConfig& c) {
         return c.presence_test == PresenceTest::Wilcoxon
                    ? std::string("wilcoxon")
                    : std::string("t");
       },
       [](PipelineConfig& c, const std::string& v) {
         if (v == "wilcoxon")
           c.presence_test = PresenceTest::Wilcoxon;
         else if (v == "t")
           c.presence_test = PresenceTest::TTest;
         else
           throw ParamError("presence_test wants wilcoxon or t, got '" + v +
                            "'");
       }});
  num("fdr_q", "false discovery rate for every correction in the battery",
      [](PipelineConfig& c) -> double& { return c.fdr_q; });

  num("pose_bin_start_ms", "pose bin grid around onset",
      [](PipelineConfig& c) -> double& { return c.pose_bin_start_ms; });
  num("pose_bin_end_ms", "",
      [](PipelineConfig& c) -> double& { return c.pose_bin_end_ms; });
  num("pose_bin_ms", "",
      [](PipelineConfig& c) -> double& { return c.pose_bin_ms; });
  num("rms_window_ms", "acceleration RMS window width",
      [](PipelineConfig& c) -> double& { return c.rms_window_ms; });
  num("landmark_p0", "per-participant false positive rate under the null",
      [](PipelineConfig& c) -> double& { return c.landmark_p0; });

  integer("sim_participants", "synthetic cohort controls",
          [](PipelineConfig& c) -> int& { return c.sim_participants; });
  integer("sim_n_trials", "",
          [](PipelineConfig& c) -> int& { return c.sim.n_trials; });
  num("sim_rp_peak_uv", "",
      [](PipelineConfig& c) -> double& { return c.sim.rp.peak_uv; });
  num("sim_rp_onset_lead_ms", "",
      [](PipelineConfig& c) -> double& { return c.sim.rp.onset_lead_ms; });
  num("sim_rp_amplitude_jitter", "",
      [](PipelineConfig& c) -> double& { return c.sim.rp.amplitude_jitter; });
  num("sim_hit_probability", "",
      [](PipelineConfig& c) -> double& { return c.sim.hit_probability; });
  num("sim_set_point_lead_ms", "",
      [](PipelineConfig& c) -> double& { return c.sim.set_point_lead_ms; });
  num("sim_set_point_lead_hit_ms", "",
      [](PipelineConfig& c) -> double& { return c.sim.set_point_lead_hit_ms; });
  num("sim_set_point_lead_miss_ms", "",
      [](PipelineConfig& c) -> double& {
        return c.sim.set_point_lead_miss_ms;
      });
  num("sim_eeg_noise_uv", "",
      [](PipelineConfig& c) -> double& { return c.sim.noise.eeg_uv; });
  num("sim_imu_noise_sd", "",
      [](PipelineConfig& c) -> double& { return c.sim.noise.imu_sd; });
  num("sim_pose_noise_sd", "",
      [](PipelineConfig& c) -> double& { return c.sim.noise.pose_sd; });
  num("sim_artifact_fraction", "",
      [](PipelineConfig& c) -> double& { return c.sim.artifact_fraction; });
  num("sim_trial_spacing_s", "",
      [](PipelineConfig& c) -> double& { return c.sim.trial_spacing_s; });
  e.push_back(
      {"sim_pose_hit_shift",
       "image-coordinate y shift added to the right wrist on hit trials",
       [](const PipelineConfig& c) {
         double d = 0.0;
         for (const auto& pd : c.sim.pose_effect)
           if (pd.landmark == 16 && pd.axis == 1) d += pd.delta;
         return fmt_double(d);
       },
       [](PipelineConfig& c, const std::string& v) {
         const double d = parse_double("sim_pose_hit_shift", v);
         c.sim.pose_effect.clear();
         if (d != 0.0) c.sim.pose_effect.push_back({16, 1, d});
       }});

  e.push_back({"seed", "master seed for simulation and decomposition restarts",
               [](const PipelineConfig& c) { return std::to_string(c.seed); },
               [](PipelineConfig& c, const std::string& v) {
                 c.seed = parse_u64("seed", v);
               }});
  e.push_back({"workers", "participants processed concurrently",
               [](const PipelineConfig& c) {
                 return std::to_string(c.workers);
               },
               [](PipelineConfig& c, const std::string& v) {
                 c.workers = static_cast<int>(parse_long("workers", v));
               }});
  return e;
}

inline const std::vector<ConfigEntry>& config_entries() {
  static const std::vector<ConfigEntry> e = build_config_entries();
  return e;
}

}  // namespace pipeline_detail

inline void validate(const PipelineConfig& cfg) {
  const auto& p = cfg.preprocess;
  if (p.ica_epoch_end <= p.ica_epoch_start ||
      p.erp_epoch_end <= p.erp_epoch_start ||
      p.baseline_end <= p.baseline_start)
    throw ParamError("epoch and baseline windows must be ordered");
  if (p.jointprob_sd_ica <= 0 || p.jointprob_sd_final <= 0 ||
      p.bad_channel_k <= 0)
    throw ParamError("rejection thresholds must be positive");
  if (p.ica_highpass.cutoff <= 0 || p.ica_lowpass.cutoff <= 0 ||
      p.erp_highpass.cutoff <= 0 || p.erp_lowpass.cutoff <= 0)
    throw ParamError("filter cutoffs must be positive");
  if (p.ica_highpass.order < 2 || p.ica_lowpass.order < 2 ||
      p.erp_highpass.order < 2 || p.erp_lowpass.order < 2)
    throw ParamError("filter orders must be at least 2");
  validate(cfg.onset);
  if (cfg.set_point_refractory_s <= 0)
    throw ParamError("set-point refractory must be positive");
  if (cfg.bin_end_ms <= cfg.bin_start_ms || cfg.bin_ms <= 0 ||
      cfg.pose_bin_end_ms <= cfg.pose_bin_start_ms || cfg.pose_bin_ms <= 0 ||
      cfg.rms_window_ms <= 0)
    throw ParamError("bin windows must be ordered with positive widths");
  if (!(cfg.fdr_q > 0 && cfg.fdr_q < 1) ||
      !(cfg.landmark_p0 > 0 && cfg.landmark_p0 < 1))
    throw ParamError("rates must lie in (0, 1)");
  if (cfg.presence_channels.empty())
    throw ParamError("presence channel list is empty");
  if (cfg.sim_participants < 1) throw ParamError("sim_participants must be >= 1");
  if (cfg.workers < 1) throw ParamError("workers must be >= 1");
  validate(cfg.sim);
}

// Canonical commented key-value form; parse_pipeline_config reads it back.
inline std::string serialize_config(const PipelineConfig& cfg) {
  std::string out = "# processing configuration, version ";
  out += kVersion;
  out += "\n";
  for (const auto& e : pipeline_detail::config_entries()) {
    if (!e.comment.empty()) out += "\n# " + e.comment + "\n";
    out += e.key + " = " + e.get(cfg) + "\n";
  }
  return out;
}

inline PipelineConfig parse_pipeline_config(const std::string& text) {
  using namespace pipeline_detail;
  PipelineConfig cfg;
  std::map<std::string, const ConfigEntry*> by_key;
  for (const auto& e : config_entries()) by_key[e.key] = &e;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParamError("config line " + std::to_string(line_no) +
                       " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end())
      throw ParamError("unknown config key: " + key);
    it->second->set(cfg, value);
  }
  validate(cfg);
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParamError("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_pipeline_config(ss.str());
}

// ---------------------------------------------------------------------------
// small file and hashing helpers
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_binary_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParamError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_binary_file(const std::string& path,
                              const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParamError("cannot open for writing: " + path);
  f << bytes;
}

// ---------------------------------------------------------------------------
// per-participant processing
// ---------------------------------------------------------------------------

enum class Stage { Align, Detect, Preprocess, Ica, Analyze };

struct ParticipantResult {
  std::string id;
  bool ok = false;
  std::string error;
  Log log;
  // name -> bytes, written under <out>/<id>/ by the driver
  std::vector<std::pair<std::string, std::string>> files;

  // cohort inputs, populated at Stage::Analyze
  Eigen::MatrixXd subject_bins;  // channels x bins, mean over trials
  std::vector<std::string> bin_channel_labels;
  std::vector<double> bin_edges_ms;
  Eigen::MatrixXd bins_hit, bins_miss;
  int n_hit_trials = 0, n_miss_trials = 0;
  Eigen::MatrixXd trial_average;  // channels x samples
  std::vector<double> erp_times;
  std::vector<std::string> erp_channel_labels;
  std::vector<ShotEvent> events;
  R2Table eeg_r2, pose_r2;
  bool has_pose_stats = false;
  LandmarkOnsetResult pose_onset;
  Eigen::MatrixXd pose_rms;  // 33 x windows
  double retention = 0.0;
};

namespace pipeline_detail {

inline std::string sanitize_id(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
            c == '_')
               ? c
               : '_';
  if (out.empty()) out = "participant";
  return out;
}

inline std::string bins_long_csv(const BinFeatureMatrix& bins) {
  CsvWriter csv({"trial", "channel", "bin_start_ms", "uv"});
  for (int u = 0; u < bins.n_units(); ++u)
    for (int ch = 0; ch < bins.n_channels(); ++ch)
      for (int b = 0; b < bins.n_bins(); ++b) {
        csv.cell(u)
            .cell(bins.channel_labels[static_cast<std::size_t>(ch)])
            .cell(bins.bin_edges_ms[static_cast<std::size_t>(b)])
            .cell(bins.values[static_cast<std::size_t>(u)](ch, b));
        csv.end_row();
      }
  return csv.str();
}

inline std::string ica_model_csv(const UnmixingModel& model) {
  std::vector<std::string> header = {"component"};
  for (const auto& l : model.channel_labels) header.push_back(l);
  header.push_back("kurtosis_sign");
  CsvWriter csv(header);
  const Eigen::MatrixXd u = model.unmixing();
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    csv.cell(static_cast<int>(i));
    for (Eigen::Index j = 0; j < u.cols(); ++j) csv.cell(u(i, j));
    csv.cell(model.kurtosis_signs[static_cast<std::size_t>(i)] ==
                     KurtosisSign::Super
                 ? std::string("super")
                 : std::string("sub"));
    csv.end_row();
  }
  return csv.str();
}

inline std::string waveform_csv(const Eigen::MatrixXd& data,
                                const std::vector<std::string>& labels,
                                const std::vector<double>& times) {
  CsvWriter csv({"channel", "time_ms", "uv"});
  for (Eigen::Index ch = 0; ch < data.rows(); ++ch)
    for (Eigen::Index k = 0; k < data.cols(); ++k) {
      csv.cell(labels[static_cast<std::size_t>(ch)])
          .cell(times[static_cast<std::size_t>(k)] * 1000.0)
          .cell(data(ch, k));
      csv.end_row();
    }
  return csv.str();
}

inline std::string pose_onset_csv(const LandmarkOnsetResult& r) {
  CsvWriter csv({"landmark", "stat", "p", "p_fdr", "significant"});
  const auto& names = pose_landmark_names();
  for (int lm = 0; lm < kNumLandmarks; ++lm) {
    const auto i = static_cast<std::size_t>(lm);
    csv.cell(names[i])
        .cell(r.tests[i].statistic)
        .cell(r.tests[i].p_value)
        .cell(r.p_fdr[i])
        .cell(r.significant[i] ? 1 : 0);
    csv.end_row();
  }
  return csv.str();
}

inline std::string rms_csv(const Eigen::MatrixXd& rms, double window_ms,
                           double range_start_ms) {
  CsvWriter csv({"landmark", "window_start_ms", "rms"});
  const auto& names = pose_landmark_names();
  for (Eigen::Index lm = 0; lm < rms.rows(); ++lm)
    for (Eigen::Index w = 0; w < rms.cols(); ++w) {
      csv.cell(names[static_cast<std::size_t>(lm)])
          .cell(range_start_ms + static_cast<double>(w) * window_ms)
          .cell(rms(lm, w));
      csv.end_row();
    }
  return csv.str();
}

inline BinFeatureMatrix labeled_subset(const BinFeatureMatrix& bins,
                                       std::vector<int>& outcomes_out) {
  BinFeatureMatrix out;
  out.bin_edges_ms = bins.bin_edges_ms;
  out.channel_labels = bins.channel_labels;
  for (int u = 0; u < bins.n_units(); ++u) {
    const int label = bins.unit_labels[static_cast<std::size_t>(u)];
    if (label < 0) continue;
    out.values.push_back(bins.values[static_cast<std::size_t>(u)]);
    out.unit_labels.push_back(label);
    outcomes_out.push_back(label);
  }
  return out;
}

}  // namespace pipeline_detail

// One participant, from container bytes to analysis tables. Throws nothing:
// failures come back with ok == false and the reason in `error`.
inline ParticipantResult process_participant(const std::string& label,
                                             const std::string& xdf_bytes,
                                             const PipelineConfig& cfg,
                                             std::size_t index,
                                             Stage stage = Stage::Analyze) {
  using namespace pipeline_detail;
  ParticipantResult r;
  r.id = sanitize_id(label);
  try {
    const RecordingSet set = parse_xdf(xdf_bytes, &r.log);
    if (!set.participant_id.empty()) r.id = sanitize_id(set.participant_id);

    const AlignedRecording aligned = align_recording(set, &r.log);
    r.files.emplace_back("alignment.csv", aligned.report.to_csv());
    if (stage == Stage::Align) {
      r.ok = true;
      return r;
    }

    OnsetConfig onset = cfg.onset;
    onset.refractory = cfg.set_point_refractory_s;
    r.events = detect_shot_events(aligned.set, onset, cfg.polarity,
                                  cfg.eye_channel, cfg.wrist_channel, &r.log);
    r.files.emplace_back("shot_events.csv", shot_events_csv(r.events));
    if (!r.events.empty())
      r.files.emplace_back(
          "latency.json",
          to_json(set_point_latency_by_outcome(r.events)).dump(2) + "\n");
    if (stage == Stage::Detect) {
      r.ok = true;
      return r;
    }

    const TimedStream* eeg_stream = aligned.set.find_kind(StreamKind::EEG);
    if (!eeg_stream) throw InvariantError("no EEG stream after alignment");
    if (aligned.grid.size() < 2)
      throw InvariantError("alignment grid too short");
    const double grid_fs =
        static_cast<double>(aligned.grid.size() - 1) /
        (aligned.grid[aligned.grid.size() - 1] - aligned.grid[0]);
    ContinuousEeg cont;
    cont.data = eeg_stream->samples.transpose();
    cont.t0 = aligned.grid[0];
    cont.fs = grid_fs;
    cont.channel_labels = eeg_stream->info.channel_labels;

    std::vector<double> onsets;
    std::vector<int> labels;
    for (const auto& ev : r.events) {
      onsets.push_back(ev.onset_time);
      labels.push_back(ev.outcome == Outcome::Hit
                           ? 1
                           : ev.outcome == Outcome::Miss ? 0 : -1);
    }

    PreprocessConfig pp = cfg.preprocess;
    pp.ica_seed = Rng::derive(cfg.seed, 7000 + index);
    const PreprocessOutput out =
        preprocess_session(cont, onsets, labels, pp, nullptr, &r.log);

    r.files.emplace_back("rejections.csv", rejection_csv(out.rejections));
    r.retention = out.n_epochs_pass2 > 0
                      ? static_cast<double>(out.kept_pass2.size()) /
                            out.n_epochs_pass2
                      : 0.0;
    {
      nlohmann::json j;
      j["participant"] = r.id;
      j["n_channels"] = cont.channel_labels.size();
      nlohmann::json bad = nlohmann::json::array();
      for (int b : out.bad_channels)
        bad.push_back(cont.channel_labels[static_cast<std::size_t>(b)]);
      j["bad_channels"] = bad;
      j["n_epochs_pass1"] = out.n_epochs_pass1;
      j["kept_pass1"] = out.kept_pass1.size();
      j["n_epochs_pass2"] = out.n_epochs_pass2;
      j["kept_pass2"] = out.kept_pass2.size();
      j["retention"] = r.retention;
      j["rejected_components"] = out.rejected_components;
      r.files.emplace_back("preprocess_summary.json", j.dump(2) + "\n");
    }
    if (stage == Stage::Preprocess) {
      r.ok = true;
      return r;
    }

    r.files.emplace_back("ica_model.csv", ica_model_csv(out.model));
    if (stage == Stage::Ica) {
      r.ok = true;
      return r;
    }

    // amplitude bins per kept trial, then the participant mean
    const BinFeatureMatrix bins = parameterize_bins(
        out.epochs, cfg.bin_start_ms, cfg.bin_end_ms, cfg.bin_ms);
    r.files.emplace_back("bins_long.csv", bins_long_csv(bins));
    r.bin_channel_labels = bins.channel_labels;
    r.bin_edges_ms = bins.bin_edges_ms;
    r.subject_bins = Eigen::MatrixXd::Zero(bins.values[0].rows(),
                                           bins.values[0].cols());
    r.bins_hit = r.subject_bins;
    r.bins_miss = r.subject_bins;
    for (int u = 0; u < bins.n_units(); ++u) {
      const auto& m = bins.values[static_cast<std::size_t>(u)];
      r.subject_bins += m;
      const int lab = bins.unit_labels[static_cast<std::size_t>(u)];
      if (lab == 1) {
        r.bins_hit += m;
        ++r.n_hit_trials;
      } else if (lab == 0) {
        r.bins_miss += m;
        ++r.n_miss_trials;
      }
    }
    r.subject_bins /= static_cast<double>(bins.n_units());
    if (r.n_hit_trials > 0) r.bins_hit /= r.n_hit_trials;
    if (r.n_miss_trials > 0) r.bins_miss /= r.n_miss_trials;

    r.trial_average = out.trial_average;
    r.erp_times = out.epochs.times;
    r.erp_channel_labels = out.epochs.channel_labels;
    r.files.emplace_back(
        "trial_average.csv",
        waveform_csv(out.trial_average, out.epochs.channel_labels,
                     out.epochs.times));

    std::vector<int> eeg_outcomes;
    const BinFeatureMatrix labeled = labeled_subset(bins, eeg_outcomes);
    try {
      r.eeg_r2 =
          condition_r2_per_bin(labeled, eeg_outcomes, cfg.fdr_q, &r.log);
      r.files.emplace_back("eeg_r2.csv", r2_long_csv({r.eeg_r2}));
    } catch (const Error& e) {
      r.log.warn(std::string("amplitude-outcome table skipped: ") + e.what());
    }

    // pose battery on the aligned landmark grid
    const TimedStream* pose_stream = aligned.set.find_kind(StreamKind::Pose);
    if (pose_stream &&
        pose_stream->samples.cols() == kNumLandmarks * kNumAxes) {
      AlignedPose pose;
      pose.xyz = pose_stream->samples.transpose();
      pose.t0 = aligned.grid[0];
      pose.fs = grid_fs;
      pose.native_rate = pose_stream->info.nominal_rate;

      try {
        r.pose_onset = landmark_onset_stats(pose, onsets, cfg.fdr_q);
        r.has_pose_stats = true;
        r.files.emplace_back("pose_onset.csv", pose_onset_csv(r.pose_onset));
      } catch (const Error& e) {
        r.log.warn(std::string("landmark onset table skipped: ") + e.what());
      }

      try {
        r.pose_rms = landmark_rms_windows(pose, onsets, cfg.rms_window_ms,
                                          cfg.pose_bin_start_ms,
                                          cfg.pose_bin_end_ms);
        r.files.emplace_back(
            "pose_rms.csv",
            rms_csv(r.pose_rms, cfg.rms_window_ms, cfg.pose_bin_start_ms));
      } catch (const Error& e) {
        r.log.warn(std::string("landmark RMS table skipped: ") + e.what());
      }

      try {
        std::vector<double> pose_onsets;
        std::vector<int> pose_outcomes;
        for (std::size_t k = 0; k < onsets.size(); ++k)
          if (labels[k] >= 0) {
            pose_onsets.push_back(onsets[k]);
            pose_outcomes.push_back(labels[k]);
          }
        const PoseBinMatrix pose_bins = bin_pose_trials(
            pose, pose_onsets, pose_outcomes, cfg.pose_bin_start_ms,
            cfg.pose_bin_end_ms, cfg.pose_bin_ms, &r.log);
        r.pose_r2 = pose_condition_r2(pose_bins, cfg.fdr_q, &r.log);
        r.files.emplace_back("pose_r2.csv", r2_long_csv({r.pose_r2}));
      } catch (const Error& e) {
        r.log.warn(std::string("pose-outcome table skipped: ") + e.what());
      }
    } else {
      r.log.warn("pose stream missing or malformed; pose battery skipped");
    }

    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

// ---------------------------------------------------------------------------
// batch driver
// ---------------------------------------------------------------------------

struct PipelineOutcome {
  int exit_code = 1;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<std::string> written;  // paths relative to the output root
  std::vector<std::pair<std::string, std::string>> failures;
};

namespace pipeline_detail {

inline std::vector<std::string> expand_inputs(
    const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> here;
      for (const auto& entry : fs::directory_iterator(in))
        if (entry.is_regular_file() && entry.path().extension() == ".xdf")
          here.push_back(entry.path().string());
      std::sort(here.begin(), here.end());
      files.insert(files.end(), here.begin(), here.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw ParamError("no input files");
  return files;
}

inline std::string unique_id(const std::string& id,
                             std::map<std::string, int>& seen) {
  const int n = seen[id]++;
  if (n == 0) return id;
  return id + "_" + std::to_string(n);
}

}  // namespace pipeline_detail

// Full batch: per-participant chain with failure isolation, then cohort
// aggregation. Returns 0 when everything worked, 2 when some participants
// failed, 1 when nothing did.
inline PipelineOutcome run_pipeline(const std::vector<std::string>& inputs,
                                    const PipelineConfig& cfg,
                                    const std::string& out_dir,
                                    Log* log = nullptr,
                                    Stage stage = Stage::Analyze) {
  using namespace pipeline_detail;
  namespace fs = std::filesystem;
  validate(cfg);

  const std::vector<std::string> files = expand_inputs(inputs);
  fs::create_directories(out_dir);

  PipelineOutcome outcome;
  auto emit = [&](const std::string& rel, const std::string& bytes) {
    const fs::path p = fs::path(out_dir) / rel;
    fs::create_directories(p.parent_path());
    write_binary_file(p.string(), bytes);
    outcome.written.push_back(rel);
  };

  const std::string config_text = serialize_config(cfg);
  emit("resolved_config.txt", config_text);

  // read everything up front so a missing file is an isolated failure too
  std::vector<std::string> bytes(files.size());
  std::vector<std::string> read_errors(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      bytes[i] = read_binary_file(files[i]);
    } catch (const std::exception& e) {
      read_errors[i] = e.what();
    }
  }

  std::vector<ParticipantResult> results(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= files.size()) return;
      const std::string stem = fs::path(files[i]).stem().string();
      if (!read_errors[i].empty()) {
        results[i].id = sanitize_id(stem);
        results[i].ok = false;
        results[i].error = read_errors[i];
        continue;
      }
      results[i] = process_participant(stem, bytes[i], cfg, i, stage);
    }
  };
  const int n_workers = std::max(
      1, std::min<int>(cfg.workers, static_cast<int>(files.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // per-participant artifacts, in input order
  std::map<std::string, int> seen_ids;
  std::vector<std::string> ids(files.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& r = results[i];
    ids[i] = unique_id(r.id, seen_ids);
    for (const auto& line : r.log.lines)
      log_info(log, ids[i] + ": " + line);
    // artifacts of completed stages are kept even when a later stage failed
    for (const auto& [name, content] : r.files)
      emit(ids[i] + "/" + name, content);
    if (!r.ok) {
      ++outcome.n_failed;
      outcome.failures.emplace_back(ids[i], r.error);
      log_warn(log, ids[i] + " failed: " + r.error);
      continue;
    }
    ++outcome.n_ok;
  }

  // cohort aggregation over the successful participants, input order
  if (stage == Stage::Analyze) {
    std::vector<const ParticipantResult*> ok;
    std::vector<std::string> ok_ids;
    for (std::size_t i = 0; i < results.size(); ++i)
      if (results[i].ok) {
        ok.push_back(&results[i]);
        ok_ids.push_back(ids[i]);
      }

    // presence table needs one mean-bin matrix per participant
    if (ok.size() >= 5) {
      bool consistent = true;
      for (const auto* p : ok)
        if (p->bin_channel_labels != ok.front()->bin_channel_labels ||
            p->bin_edges_ms != ok.front()->bin_edges_ms)
          consistent = false;
      if (consistent && ok.front()->subject_bins.size() > 0) {
        BinFeatureMatrix subject;
        subject.channel_labels = ok.front()->bin_channel_labels;
        subject.bin_edges_ms = ok.front()->bin_edges_ms;
        for (std::size_t i = 0; i < ok.size(); ++i) {
          subject.values.push_back(ok[i]->subject_bins);
          subject.unit_labels.push_back(static_cast<int>(i));
        }
        try {
          const PresenceTable presence = rp_presence_table(
              subject, cfg.presence_channels, cfg.presence_test, cfg.fdr_q);
          emit("presence.csv", presence_csv(presence));
        } catch (const Error& e) {
          log_warn(log, std::string("presence table skipped: ") + e.what());
        }
      } else {
        log_warn(log, "presence table skipped: bin grids differ");
      }
    } else if (!ok.empty()) {
      log_warn(log, "presence table skipped: fewer than 5 participants");
    }

    if (!ok.empty() && ok.front()->trial_average.size() > 0) {
      // grand averages over the channels the presence battery reads
      Eigen::MatrixXd grand = Eigen::MatrixXd::Zero(
          ok.front()->trial_average.rows(), ok.front()->trial_average.cols());
      int n_grand = 0;
      for (const auto* p : ok)
        if (p->trial_average.rows() == grand.rows() &&
            p->trial_average.cols() == grand.cols()) {
          grand += p->trial_average;
          ++n_grand;
        }
      if (n_grand > 0) {
        grand /= n_grand;
        CsvWriter csv({"channel", "time_ms", "uv"});
        const auto& labels = ok.front()->erp_channel_labels;
        for (const auto& want : cfg.presence_channels) {
          const auto it = std::find(labels.begin(), labels.end(), want);
          if (it == labels.end()) continue;
          const auto ch = static_cast<Eigen::Index>(it - labels.begin());
          for (Eigen::Index k = 0; k < grand.cols(); ++k) {
            csv.cell(want)
                .cell(ok.front()->erp_times[static_cast<std::size_t>(k)] *
                      1000.0)
                .cell(grand(ch, k));
            csv.end_row();
          }
        }
        emit("fig4_grand_rp.csv", csv.str());
      }

      // bin means split by outcome
      CsvWriter csv({"channel", "bin_start_ms", "outcome", "uv"});
      const auto& labels = ok.front()->bin_channel_labels;
      const auto& edges = ok.front()->bin_edges_ms;
      for (int outcome_is_hit = 1; outcome_is_hit >= 0; --outcome_is_hit) {
        Eigen::MatrixXd acc;
        int n_acc = 0;
        for (const auto* p : ok) {
          const auto& m = outcome_is_hit ? p->bins_hit : p->bins_miss;
          const int n_tr = outcome_is_hit ? p->n_hit_trials : p->n_miss_trials;
          if (n_tr == 0 || m.size() == 0) continue;
          if (acc.size() == 0) acc = Eigen::MatrixXd::Zero(m.rows(), m.cols());
          if (m.rows() != acc.rows()) continue;
          acc += m;
          ++n_acc;
        }
        if (n_acc == 0) continue;
        acc /= n_acc;
        for (Eigen::Index ch = 0; ch < acc.rows(); ++ch)
          for (Eigen::Index b = 0; b < acc.cols(); ++b) {
            csv.cell(labels[static_cast<std::size_t>(ch)])
                .cell(edges[static_cast<std::size_t>(b)])
                .cell(outcome_is_hit ? std::string("hit")
                                     : std::string("miss"))
                .cell(acc(ch, b));
            csv.end_row();
          }
      }
      emit("fig5_bins_by_outcome.csv", csv.str());
    }

    {
      std::vector<R2Table> eeg_tables;
      for (const auto* p : ok)
        if (!p->eeg_r2.cells.empty()) eeg_tables.push_back(p->eeg_r2);
      if (!eeg_tables.empty())
        emit("fig6_r2_heatmap.csv", r2_long_csv(eeg_tables));
    }

    {
      std::vector<LandmarkOnsetResult> stats;
      for (const auto* p : ok)
        if (p->has_pose_stats) stats.push_back(p->pose_onset);
      if (!stats.empty()) {
        const CohortLandmarkResult cohort =
            landmark_onset_validation(stats, cfg.landmark_p0);
        CsvWriter csv({"landmark", "n_significant", "n_participants",
                       "binomial_p", "significant"});
        const auto& names = pose_landmark_names();
        for (int lm = 0; lm < kNumLandmarks; ++lm) {
          const auto i = static_cast<std::size_t>(lm);
          csv.cell(names[i])
              .cell(cohort.n_significant[i])
              .cell(cohort.n_participants)
              .cell(cohort.binomial[i].p_value)
              .cell(cohort.binomial[i].p_value < cfg.landmark_p0 ? 1 : 0);
          csv.end_row();
        }
        emit("fig7_pose_pvals.csv", csv.str());
      }
    }

    {
      // window-wise acceleration RMS, participant mean ignoring gaps
      Eigen::MatrixXd sum, cnt;
      for (const auto* p : ok) {
        if (p->pose_rms.size() == 0) continue;
        if (sum.size() == 0) {
          sum = Eigen::MatrixXd::Zero(p->pose_rms.rows(), p->pose_rms.cols());
          cnt = sum;
        }
        if (p->pose_rms.rows() != sum.rows() ||
            p->pose_rms.cols() != sum.cols())
          continue;
        for (Eigen::Index i = 0; i < sum.rows(); ++i)
          for (Eigen::Index j = 0; j < sum.cols(); ++j)
            if (std::isfinite(p->pose_rms(i, j))) {
              sum(i, j) += p->pose_rms(i, j);
              cnt(i, j) += 1.0;
            }
      }
      if (sum.size() > 0) {
        Eigen::MatrixXd mean(sum.rows(), sum.cols());
        for (Eigen::Index i = 0; i < sum.rows(); ++i)
          for (Eigen::Index j = 0; j < sum.cols(); ++j)
            mean(i, j) = cnt(i, j) > 0
                             ? sum(i, j) / cnt(i, j)
                             : std::numeric_limits<double>::quiet_NaN();
        emit("fig3_rms.csv",
             rms_csv(mean, cfg.rms_window_ms, cfg.pose_bin_start_ms));
      }
    }

    {
      std::vector<ShotEvent> all_events;
      for (const auto* p : ok)
        all_events.insert(all_events.end(), p->events.begin(),
                          p->events.end());
      if (!all_events.empty())
        emit("latency.json",
             to_json(set_point_latency_by_outcome(all_events)).dump(2) + "\n");
    }

    {
      nlohmann::json j;
      j["n_inputs"] = files.size();
      j["n_ok"] = outcome.n_ok;
      j["n_failed"] = outcome.n_failed;
      nlohmann::json parts = nlohmann::json::array();
      for (std::size_t i = 0; i < ok_ids.size(); ++i) {
        nlohmann::json p;
        p["index"] = i;
        p["id"] = ok_ids[i];
        p["retention"] = ok[i]->retention;
        p["n_events"] = ok[i]->events.size();
        parts.push_back(p);
      }
      j["participants"] = parts;
      nlohmann::json fails = nlohmann::json::array();
      for (const auto& [id, err] : outcome.failures) {
        nlohmann::json f;
        f["id"] = id;
        f["error"] = err;
        fails.push_back(f);
      }
      j["failures"] = fails;
      emit("cohort_summary.json", j.dump(2) + "\n");
    }
  }

  {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config_hash"] = hex64(fnv1a64(config_text));
    j["seed"] = cfg.seed;
    nlohmann::json ins = nlohmann::json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
      nlohmann::json f;
      f["path"] = files[i];
      f["hash"] =
          read_errors[i].empty() ? hex64(fnv1a64(bytes[i])) : "unreadable";
      ins.push_back(f);
    }
    j["inputs"] = ins;
    std::vector<std::string> sorted = outcome.written;
    std::sort(sorted.begin(), sorted.end());
    j["outputs"] = sorted;
    emit("provenance.json", j.dump(2) + "\n");
  }

  outcome.exit_code = outcome.n_ok == 0 ? 1 : (outcome.n_failed > 0 ? 2 : 0);
  return outcome;
}

// ---------------------------------------------------------------------------
// simulate and inspect
// ---------------------------------------------------------------------------

struct SimulateOutcome {
  std::vector<std::string> written;
  double grand_mean_latency_s = 0.0;
  int n_participants = 0;
};

inline SimulateOutcome simulate_cohort_files(const PipelineConfig& cfg,
                                             const std::string& out_dir,
                                             Log* log = nullptr) {
  namespace fs = std::filesystem;
  validate(cfg);
  fs::create_directories(out_dir);

  SimulateOutcome out;
  out.n_participants = cfg.sim_participants;
  SynthConfig base = cfg.sim;
  base.seed = cfg.seed;

  double latency_sum = 0.0;
  std::size_t latency_n = 0;
  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["version"] = kVersion;
  nlohmann::json list = nlohmann::json::array();

  for (int p = 0; p < cfg.sim_participants; ++p) {
    const SynthConfig member = cohort_member_config(base, cfg.seed, p);
    auto [rec, gt] = generate_session(member);

    char name[32];
    std::snprintf(name, sizeof(name), "p%02d", p + 1);
    const std::string xdf_name = std::string(name) + ".xdf";
    const std::string gt_name = std::string(name) + "_truth.json";
    write_binary_file((fs::path(out_dir) / xdf_name).string(),
                      write_xdf(rec));
    write_binary_file((fs::path(out_dir) / gt_name).string(),
                      to_json(gt).dump(2) + "\n");
    out.written.push_back(xdf_name);
    out.written.push_back(gt_name);

    for (const auto& tr : gt.trials) {
      latency_sum += tr.set_point_time - tr.onset_time;
      ++latency_n;
    }
    nlohmann::json entry;
    entry["id"] = rec.participant_id;
    entry["xdf"] = xdf_name;
    entry["ground_truth"] = gt_name;
    entry["n_trials"] = gt.trials.size();
    list.push_back(entry);
    log_info(log, std::string(name) + " written (" +
                      std::to_string(gt.trials.size()) + " trials)");
  }
  manifest["participants"] = list;
  write_binary_file((fs::path(out_dir) / "manifest.json").string(),
                    manifest.dump(2) + "\n");
  out.written.push_back("manifest.json");
  out.grand_mean_latency_s =
      latency_n > 0 ? latency_sum / static_cast<double>(latency_n) : 0.0;
  return out;
}

inline std::string inspect_recording(const RecordingSet& set) {
  std::ostringstream os;
  os << "participant: "
     << (set.participant_id.empty() ? "(unset)" : set.participant_id) << "\n";
  os << "outcomes:    " << set.outcomes.size() << " trials\n";
  os << "streams:     " << set.streams.size() << "\n";
  if (set.streams.empty()) return os.str();

  char line[256];
  std::snprintf(line, sizeof(line), "%4s  %-16s  %-7s  %9s  %8s  %9s  %s\n",
                "id", "name", "kind", "rate_hz", "channels", "samples",
                "span_s");
  os << line;
  for (const auto& s : set.streams) {
    const char* kind = s.info.kind == StreamKind::EEG      ? "eeg"
                       : s.info.kind == StreamKind::Pose   ? "pose"
                       : s.info.kind == StreamKind::IMU    ? "imu"
                                                           : "marker";
    const Eigen::Index n =
        s.info.channel_format == ChannelFormat::String
            ? static_cast<Eigen::Index>(s.text.size())
            : s.samples.rows();
    std::string span = "-";
    if (s.timestamps.size() > 1) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.3f..%.3f", s.timestamps[0],
                    s.timestamps[s.timestamps.size() - 1]);
      span = buf;
    }
    std::snprintf(line, sizeof(line), "%4u  %-16s  %-7s  %9g  %8zu  %9lld  %s\n",
                  static_cast<unsigned>(s.info.stream_id), s.info.name.c_str(),
                  kind, s.info.nominal_rate, s.info.channel_labels.size(),
                  static_cast<long long>(n), span.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace mobipipe
