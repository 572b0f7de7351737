#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/events.hpp"
#include "mobipipe/preprocess.hpp"
#include "mobipipe/stats.hpp"

namespace mobipipe {

// ---------------------------------------------------------------------------
// landmark table
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& pose_landmark_names() {
  static const std::vector<std::string> names = {
      "nose",
      "left_eye_inner",
      "left_eye",
      "left_eye_outer",
      "right_eye_inner",
      "right_eye",
      "right_eye_outer",
      "left_ear",
      "right_ear",
      "mouth_left",
      "mouth_right",
      "left_shoulder",
      "right_shoulder",
      "left_elbow",
      "right_elbow",
      "left_wrist",
      "right_wrist",
      "left_pinky",
      "right_pinky",
      "left_index",
      "right_index",
      "left_thumb",
      "right_thumb",
      "left_hip",
      "right_hip",
      "left_knee",
      "right_knee",
      "left_ankle",
      "right_ankle",
      "left_heel",
      "right_heel",
      "left_foot_index",
      "right_foot_index"};
  return names;
}

constexpr int kNumLandmarks = 33;
constexpr int kNumAxes = 3;
inline const char* axis_name(int axis) {
  static const char* names[3] = {"x", "y", "z"};
  if (axis < 0 || axis >= 3) throw ParamError("axis must be 0, 1, or 2");
  return names[axis];
}

// ---------------------------------------------------------------------------
// amplitude binning
// ---------------------------------------------------------------------------

struct BinFeatureMatrix {
  std::vector<Eigen::MatrixXd> values;  // per unit [n_channels x n_bins], uV
  std::vector<double> bin_edges_ms;     // n_bins + 1 edges
  std::vector<std::string> channel_labels;
  std::vector<int> unit_labels;  // outcome per unit when unit = trial

  int n_units() const { return static_cast<int>(values.size()); }
  Eigen::Index n_channels() const {
    return values.empty() ? 0 : values[0].rows();
  }
  Eigen::Index n_bins() const { return values.empty() ? 0 : values[0].cols(); }
};

// Mean amplitude per consecutive bin_ms window; bins are half-open
// [edge, edge + bin_ms).
inline BinFeatureMatrix parameterize_bins(const Epochs& epochs,
                                          double win_start_ms = -1500.0,
                                          double win_end_ms = 0.0,
                                          double bin_ms = 100.0) {
  if (bin_ms <= 0) throw ParamError("bin width must be positive");
  if (win_end_ms <= win_start_ms) throw ParamError("bin window must be ordered");
  if (epochs.n_epochs() == 0) throw ParamError("no epochs to bin");

  const double span = win_end_ms - win_start_ms;
  const auto n_bins = static_cast<int>(std::lround(span / bin_ms));
  if (std::abs(span - n_bins * bin_ms) > 1e-9)
    throw ParamError("bin window must be a whole number of bins");

  const double half_sample_ms = 500.0 / epochs.fs;
  if (win_start_ms < epochs.times.front() * 1000.0 - half_sample_ms ||
      win_end_ms - 1000.0 / epochs.fs >
          epochs.times.back() * 1000.0 + half_sample_ms)
    throw WindowError("bin window lies outside the epoch time axis");

  std::vector<std::vector<Eigen::Index>> members(
      static_cast<std::size_t>(n_bins));
  for (std::size_t k = 0; k < epochs.times.size(); ++k) {
    const double t_ms = epochs.times[k] * 1000.0;
    if (t_ms < win_start_ms || t_ms >= win_end_ms) continue;
    auto bin = static_cast<int>((t_ms - win_start_ms) / bin_ms);
    bin = std::min(bin, n_bins - 1);
    members[static_cast<std::size_t>(bin)].push_back(
        static_cast<Eigen::Index>(k));
  }
  for (int b = 0; b < n_bins; ++b)
    if (members[static_cast<std::size_t>(b)].empty())
      throw InvariantError("bin " + std::to_string(b) + " holds no samples");

  BinFeatureMatrix out;
  out.channel_labels = epochs.channel_labels;
  out.unit_labels = epochs.labels;
  for (int b = 0; b <= n_bins; ++b)
    out.bin_edges_ms.push_back(win_start_ms + b * bin_ms);

  for (const auto& ep : epochs.data) {
    Eigen::MatrixXd bins(ep.rows(), n_bins);
    for (int b = 0; b < n_bins; ++b) {
      const auto& idx = members[static_cast<std::size_t>(b)];
      for (Eigen::Index ch = 0; ch < ep.rows(); ++ch) {
        double mean = 0.0;
        for (Eigen::Index k : idx) mean += ep(ch, k);
        bins(ch, b) = mean / static_cast<double>(idx.size());
      }
    }
    out.values.push_back(std::move(bins));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RP presence
// ---------------------------------------------------------------------------

enum class PresenceTest { Wilcoxon, TTest };

struct PresenceCell {
  std::string channel;
  double bin_start_ms = 0.0;
  double mean_uv = 0.0;
  double statistic = 0.0;
  double p = 1.0;
  double p_fdr = 1.0;
  bool significant = false;
};

struct PresenceTable {
  std::vector<PresenceCell> cells;  // channel-major, bins in order
  double q = 0.05;
};

inline const std::vector<std::string>& default_presence_channels() {
  static const std::vector<std::string> channels = {"Cz",  "C3",  "C4",
                                                    "Fz",  "FC1", "FC2"};
  return channels;
}

inline PresenceTable rp_presence_table(
    const BinFeatureMatrix& subject_bins,
    const std::vector<std::string>& channels = default_presence_channels(),
    PresenceTest test = PresenceTest::Wilcoxon, double q = 0.05) {
  if (subject_bins.n_units() < 5)
    throw ParamError("presence testing needs at least 5 subjects");
  if (channels.empty()) throw ParamError("no channels selected");

  std::vector<Eigen::Index> rows;
  for (const auto& name : channels) {
    const auto it = std::find(subject_bins.channel_labels.begin(),
                              subject_bins.channel_labels.end(), name);
    if (it == subject_bins.channel_labels.end())
      throw SchemaError("channel " + name + " not present in bin matrix");
    rows.push_back(it - subject_bins.channel_labels.begin());
  }

  PresenceTable table;
  table.q = q;
  std::vector<double> pvals;
  const auto n_bins = subject_bins.n_bins();
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (Eigen::Index b = 0; b < n_bins; ++b) {
      std::vector<double> sample;
      for (const auto& unit : subject_bins.values)
        sample.push_back(unit(rows[c], b));
      TestResult r;
      const bool all_zero = std::all_of(sample.begin(), sample.end(),
                                        [](double v) { return v == 0.0; });
      if (all_zero) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.n_effective = 0;
      } else {
        r = test == PresenceTest::Wilcoxon ? wilcoxon_signed_rank(sample)
                                           : one_sample_t(sample);
      }
      PresenceCell cell;
      cell.channel = channels[c];
      cell.bin_start_ms = subject_bins.bin_edges_ms[static_cast<std::size_t>(b)];
      double mean = 0.0;
      for (double v : sample) mean += v;
      cell.mean_uv = mean / static_cast<double>(sample.size());
      cell.statistic = r.statistic;
      cell.p = r.p_value;
      table.cells.push_back(cell);
      pvals.push_back(r.p_value);
    }
  }

  const FdrResult fdr = bh_fdr(pvals, q);
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    table.cells[i].p_fdr = fdr.adjusted[i];
    table.cells[i].significant = fdr.significant[i];
  }
  return table;
}

inline std::string presence_csv(const PresenceTable& table) {
  CsvWriter csv({"channel", "bin_start_ms", "stat", "p", "p_fdr",
                 "significant"});
  for (const auto& c : table.cells)
    csv.cell(c.channel)
        .cell(c.bin_start_ms)
        .cell(c.statistic)
        .cell(c.p)
        .cell(c.p_fdr)
        .cell(c.significant ? 1 : 0)
        .end_row();
  return csv.str();
}

// ---------------------------------------------------------------------------
// RP amplitude vs outcome
// ---------------------------------------------------------------------------

struct R2Cell {
  std::string channel;
  int axis = -1;  // -1 for EEG channels, 0..2 for pose coordinates
  double bin_start_ms = 0.0;
  double r = 0.0;
  double r2 = 0.0;
  double p = 1.0;
  double p_fdr = 1.0;
  bool significant = false;
  bool skipped = false;
};

struct R2Table {
  std::vector<R2Cell> cells;
  double mean_r2 = 0.0;  // over non-skipped cells
  bool skipped_all = false;
  double q = 0.05;
};

// Point-biserial correlation of per-trial bin amplitude against the binary
// outcome, FDR-corrected across this participant's cells.
inline R2Table condition_r2_per_bin(const BinFeatureMatrix& trial_bins,
                                    const std::vector<int>& outcomes,
                                    double q = 0.05, Log* log = nullptr) {
  const int n = trial_bins.n_units();
  if (outcomes.size() != static_cast<std::size_t>(n))
    throw ParamError("one outcome per trial required");
  if (n < 6) throw ParamError("too few trials");

  R2Table table;
  table.q = q;
  const int n_hits =
      static_cast<int>(std::count(outcomes.begin(), outcomes.end(), 1));
  if (n_hits < 3 || n - n_hits < 3) {
    log_warn(log, "outcome classes too small; correlation skipped");
    table.skipped_all = true;
    return table;
  }

  std::vector<double> pvals;
  std::vector<std::size_t> tested;
  for (Eigen::Index ch = 0; ch < trial_bins.n_channels(); ++ch) {
    for (Eigen::Index b = 0; b < trial_bins.n_bins(); ++b) {
      R2Cell cell;
      cell.channel = trial_bins.channel_labels[static_cast<std::size_t>(ch)];
      cell.bin_start_ms =
          trial_bins.bin_edges_ms[static_cast<std::size_t>(b)];
      std::vector<double> amp;
      for (const auto& unit : trial_bins.values) amp.push_back(unit(ch, b));
      const double lo = *std::min_element(amp.begin(), amp.end());
      const double hi = *std::max_element(amp.begin(), amp.end());
      if (lo == hi) {
        log_warn(log, "constant amplitude at " + cell.channel + " bin " +
                          fmt_double(cell.bin_start_ms) + " ms; skipped");
        cell.skipped = true;
        table.cells.push_back(cell);
        continue;
      }
      const TestResult r = point_biserial_test(outcomes, amp);
      cell.r = r.statistic;
      cell.r2 = r_squared(r.statistic);
      cell.p = r.p_value;
      tested.push_back(table.cells.size());
      pvals.push_back(r.p_value);
      table.cells.push_back(cell);
    }
  }

  if (pvals.empty()) {
    table.skipped_all = true;
    return table;
  }
  const FdrResult fdr = bh_fdr(pvals, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < tested.size(); ++i) {
    table.cells[tested[i]].p_fdr = fdr.adjusted[i];
    table.cells[tested[i]].significant = fdr.significant[i];
    acc += table.cells[tested[i]].r2;
  }
  table.mean_r2 = acc / static_cast<double>(tested.size());
  return table;
}

inline std::string r2_long_csv(const std::vector<R2Table>& per_participant) {
  CsvWriter csv({"participant", "channel", "axis", "bin_start_ms", "r2", "p",
                 "p_fdr", "significant"});
  for (std::size_t s = 0; s < per_participant.size(); ++s)
    for (const auto& c : per_participant[s].cells) {
      if (c.skipped) continue;
      csv.cell(s)
          .cell(c.channel)
          .cell(c.axis < 0 ? "-" : axis_name(c.axis))
          .cell(c.bin_start_ms)
          .cell(c.r2)
          .cell(c.p)
          .cell(c.p_fdr)
          .cell(c.significant ? 1 : 0)
          .end_row();
    }
  return csv.str();
}

// ---------------------------------------------------------------------------
// landmark acceleration
// ---------------------------------------------------------------------------

// Pose landmarks resampled onto a uniform grid; rows landmark-major
// (row = landmark*3 + axis).
struct AlignedPose {
  Eigen::MatrixXd xyz;  // [33*3 x n_samples]
  double t0 = 0.0;
  double fs = 0.0;          // grid rate
  double native_rate = 0.0; // camera rate before alignment
};

// Acceleration magnitude per landmark via double differencing at one native
// pose interval of lag, then a 2-sample moving average. Edge samples without
// both neighbours are NaN.
inline Eigen::MatrixXd landmark_acceleration_grid(const AlignedPose& pose) {
  if (pose.xyz.rows() != kNumLandmarks * kNumAxes)
    throw SchemaError("expected 33 landmarks x 3 axes = 99 rows");
  if (pose.fs <= 0 || pose.native_rate <= 0)
    throw ParamError("rates must be positive");

  const Eigen::Index n = pose.xyz.cols();
  const auto lag = static_cast<Eigen::Index>(
      std::max(1.0, std::round(pose.fs / pose.native_rate)));
  const double dt = static_cast<double>(lag) / pose.fs;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Eigen::MatrixXd mag(kNumLandmarks, n);
  mag.setConstant(nan);
  if (n < 2 * lag + 2) return mag;

  for (int lm = 0; lm < kNumLandmarks; ++lm) {
    for (Eigen::Index i = lag; i < n - lag; ++i) {
      double sum2 = 0.0;
      bool ok = true;
      for (int ax = 0; ax < kNumAxes; ++ax) {
        const Eigen::Index row = lm * kNumAxes + ax;
        const double a = (pose.xyz(row, i + lag) - 2.0 * pose.xyz(row, i) +
                          pose.xyz(row, i - lag)) /
                         (dt * dt);
        if (!std::isfinite(a)) {
          ok = false;
          break;
        }
        sum2 += a * a;
      }
      mag(lm, i) = ok ? std::sqrt(sum2) : nan;
    }
    // 2-sample moving average, trailing
    for (Eigen::Index i = n - lag - 1; i > lag; --i)
      if (std::isfinite(mag(lm, i)) && std::isfinite(mag(lm, i - 1)))
        mag(lm, i) = 0.5 * (mag(lm, i) + mag(lm, i - 1));
  }
  return mag;
}

// ---------------------------------------------------------------------------
// landmark onset validation
// ---------------------------------------------------------------------------

struct LandmarkOnsetResult {
  std::vector<TestResult> tests;  // one per landmark
  std::vector<double> p_fdr;
  std::vector<bool> significant;
};

// Per trial and landmark: acceleration magnitude at the onset-nearest grid
// sample minus the previous sample; Wilcoxon vs 0 across trials, FDR over
// the 33 landmarks.
inline LandmarkOnsetResult landmark_onset_stats(
    const AlignedPose& pose, const std::vector<double>& onsets,
    double q = 0.05) {
  if (onsets.size() < 10)
    throw ParamError("onset validation needs >= 10 trials");
  const Eigen::MatrixXd mag = landmark_acceleration_grid(pose);
  const Eigen::Index n = mag.cols();

  std::vector<std::vector<double>> diffs(kNumLandmarks);
  for (double onset : onsets) {
    const auto idx =
        static_cast<Eigen::Index>(std::lround((onset - pose.t0) * pose.fs));
    if (idx < 1 || idx >= n)
      throw WindowError("onset at " + fmt_double(onset) +
                        " s lies outside the pose stream");
    for (int lm = 0; lm < kNumLandmarks; ++lm) {
      const double now = mag(lm, idx);
      const double prev = mag(lm, idx - 1);
      if (std::isfinite(now) && std::isfinite(prev))
        diffs[static_cast<std::size_t>(lm)].push_back(now - prev);
    }
  }

  LandmarkOnsetResult out;
  std::vector<double> pvals;
  for (int lm = 0; lm < kNumLandmarks; ++lm) {
    const auto& d = diffs[static_cast<std::size_t>(lm)];
    if (d.size() < 10)
      throw WindowError("landmark " + pose_landmark_names()[static_cast<std::size_t>(lm)] +
                        " has too few valid onset samples");
    TestResult r;
    const bool all_zero = std::all_of(d.begin(), d.end(),
                                      [](double v) { return v == 0.0; });
    if (all_zero) {
      r.statistic = 0.0;
      r.p_value = 1.0;
      r.n_effective = 0;
    } else {
      r = wilcoxon_signed_rank(d);
    }
    out.tests.push_back(r);
    pvals.push_back(r.p_value);
  }
  const FdrResult fdr = bh_fdr(pvals, q);
  out.p_fdr = fdr.adjusted;
  for (bool b : fdr.significant) out.significant.push_back(b);
  return out;
}

struct CohortLandmarkResult {
  std::vector<int> n_significant;      // per landmark
  std::vector<TestResult> binomial;    // per landmark, k of n at p0
  int n_participants = 0;
  double p0 = 0.05;
};

// Count participants with a per-participant FDR-significant effect per
// landmark, then ask whether that count beats the per-participant false
// positive rate.
inline CohortLandmarkResult landmark_onset_validation(
    const std::vector<LandmarkOnsetResult>& participants, double p0 = 0.05) {
  if (participants.empty()) throw ParamError("no participants");
  CohortLandmarkResult out;
  out.n_participants = static_cast<int>(participants.size());
  out.p0 = p0;
  for (int lm = 0; lm < kNumLandmarks; ++lm) {
    int k = 0;
    for (const auto& p : participants) {
      if (p.significant.size() != kNumLandmarks)
        throw ParamError("participant result missing landmarks");
      if (p.significant[static_cast<std::size_t>(lm)]) ++k;
    }
    out.n_significant.push_back(k);
    out.binomial.push_back(
        binomial_exact(k, out.n_participants, p0, BinomialTail::Upper));
  }
  return out;
}

// ---------------------------------------------------------------------------
// landmark RMS windows
// ---------------------------------------------------------------------------

// Per landmark, RMS of acceleration magnitude in consecutive windows
// relative to onset, averaged across trials. NaN-padded cells where no
// finite samples fall.
inline Eigen::MatrixXd landmark_rms_windows(const AlignedPose& pose,
                                            const std::vector<double>& onsets,
                                            double window_ms = 10.0,
                                            double range_start_ms = -2500.0,
                                            double range_end_ms = 1000.0) {
  if (window_ms <= 0) throw ParamError("window width must be positive");
  if (range_end_ms <= range_start_ms)
    throw ParamError("window range must be ordered");
  if (onsets.empty()) throw ParamError("no trials");

  const Eigen::MatrixXd mag = landmark_acceleration_grid(pose);
  const Eigen::Index n = mag.cols();
  const auto n_windows = static_cast<int>(
      std::ceil((range_end_ms - range_start_ms) / window_ms - 1e-9));

  // per-trial RMS inside each window, then mean of those across trials
  Eigen::MatrixXd rms_sum = Eigen::MatrixXd::Zero(kNumLandmarks, n_windows);
  Eigen::MatrixXd trials = Eigen::MatrixXd::Zero(kNumLandmarks, n_windows);

  for (double onset : onsets) {
    for (int w = 0; w < n_windows; ++w) {
      const double t_lo = onset + (range_start_ms + w * window_ms) / 1000.0;
      const double t_hi = t_lo + window_ms / 1000.0;
      const auto first = static_cast<Eigen::Index>(
          std::ceil((t_lo - pose.t0) * pose.fs - 1e-9));
      Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(kNumLandmarks);
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(kNumLandmarks);
      for (Eigen::Index i = std::max<Eigen::Index>(first, 0); i < n; ++i) {
        const double t = pose.t0 + static_cast<double>(i) / pose.fs;
        if (t >= t_hi) break;
        for (int lm = 0; lm < kNumLandmarks; ++lm) {
          const double v = mag(lm, i);
          if (std::isfinite(v)) {
            sumsq(lm) += v * v;
            counts(lm) += 1.0;
          }
        }
      }
      for (int lm = 0; lm < kNumLandmarks; ++lm)
        if (counts(lm) > 0) {
          rms_sum(lm, w) += std::sqrt(sumsq(lm) / counts(lm));
          trials(lm, w) += 1.0;
        }
    }
  }

  Eigen::MatrixXd rms(kNumLandmarks, n_windows);
  for (int lm = 0; lm < kNumLandmarks; ++lm)
    for (int w = 0; w < n_windows; ++w)
      rms(lm, w) = trials(lm, w) > 0
                       ? rms_sum(lm, w) / trials(lm, w)
                       : std::numeric_limits<double>::quiet_NaN();
  return rms;
}

// ---------------------------------------------------------------------------
// pose binning and pose-vs-outcome correlation
// ---------------------------------------------------------------------------

struct PoseBinMatrix {
  // per trial, per axis: [33 landmarks x n_bins] mean coordinate
  std::vector<std::array<Eigen::MatrixXd, 3>> values;
  std::vector<double> bin_edges_ms;
  std::vector<int> outcomes;

  int n_trials() const { return static_cast<int>(values.size()); }
  Eigen::Index n_bins() const {
    return values.empty() ? 0 : values[0][0].cols();
  }
};

inline PoseBinMatrix bin_pose_trials(const AlignedPose& pose,
                                     const std::vector<double>& onsets,
                                     const std::vector<int>& outcomes,
                                     double range_start_ms = -2500.0,
                                     double range_end_ms = 1000.0,
                                     double bin_ms = 100.0, Log* log = nullptr) {
  if (pose.xyz.rows() != kNumLandmarks * kNumAxes)
    throw SchemaError("expected 33 landmarks x 3 axes = 99 rows");
  if (outcomes.size() != onsets.size())
    throw ParamError("one outcome per trial required");
  const auto n_bins = static_cast<int>(
      std::lround((range_end_ms - range_start_ms) / bin_ms));
  if (n_bins < 1) throw ParamError("empty bin range");

  PoseBinMatrix out;
  for (int b = 0; b <= n_bins; ++b)
    out.bin_edges_ms.push_back(range_start_ms + b * bin_ms);

  const Eigen::Index n = pose.xyz.cols();
  for (std::size_t trial = 0; trial < onsets.size(); ++trial) {
    std::array<Eigen::MatrixXd, 3> axes;
    for (auto& m : axes) m = Eigen::MatrixXd::Zero(kNumLandmarks, n_bins);
    Eigen::MatrixXd count = Eigen::MatrixXd::Zero(kNumLandmarks, n_bins);
    bool complete = true;

    for (int b = 0; b < n_bins && complete; ++b) {
      const double t_lo = onsets[trial] + (range_start_ms + b * bin_ms) / 1000.0;
      const double t_hi = t_lo + bin_ms / 1000.0;
      const auto first = static_cast<Eigen::Index>(
          std::ceil((t_lo - pose.t0) * pose.fs - 1e-9));
      int in_bin = 0;
      for (Eigen::Index i = std::max<Eigen::Index>(first, 0); i < n; ++i) {
        const double t = pose.t0 + static_cast<double>(i) / pose.fs;
        if (t >= t_hi) break;
        ++in_bin;
        for (int lm = 0; lm < kNumLandmarks; ++lm)
          for (int ax = 0; ax < kNumAxes; ++ax) {
            const double v = pose.xyz(lm * kNumAxes + ax, i);
            if (std::isfinite(v)) {
              axes[static_cast<std::size_t>(ax)](lm, b) += v;
              if (ax == 0) count(lm, b) += 1.0;
            }
          }
      }
      if (in_bin == 0) complete = false;
    }
    if (!complete) {
      log_warn(log, "trial " + std::to_string(trial) +
                        " lacks pose coverage; dropped from pose bins");
      continue;
    }
    for (int lm = 0; lm < kNumLandmarks; ++lm)
      for (int b = 0; b < n_bins; ++b) {
        const double c = count(lm, b);
        for (int ax = 0; ax < kNumAxes; ++ax)
          axes[static_cast<std::size_t>(ax)](lm, b) =
              c > 0 ? axes[static_cast<std::size_t>(ax)](lm, b) / c
                    : std::numeric_limits<double>::quiet_NaN();
      }
    out.values.push_back(std::move(axes));
    out.outcomes.push_back(outcomes[trial]);
  }
  if (out.values.empty()) throw ParamError("no trial had pose coverage");
  return out;
}

// Point-biserial of each landmark coordinate bin against outcome, FDR
// across all 33 x 3 x n_bins cells of this participant.
inline R2Table pose_condition_r2(const PoseBinMatrix& pose_bins,
                                 double q = 0.05, Log* log = nullptr) {
  const int n = pose_bins.n_trials();
  if (n < 6) throw ParamError("too few trials");

  R2Table table;
  table.q = q;
  const int n_hits = static_cast<int>(
      std::count(pose_bins.outcomes.begin(), pose_bins.outcomes.end(), 1));
  if (n_hits < 3 || n - n_hits < 3) {
    log_warn(log, "outcome classes too small; pose correlation skipped");
    table.skipped_all = true;
    return table;
  }

  std::vector<double> pvals;
  std::vector<std::size_t> tested;
  for (int lm = 0; lm < kNumLandmarks; ++lm)
    for (int ax = 0; ax < kNumAxes; ++ax)
      for (Eigen::Index b = 0; b < pose_bins.n_bins(); ++b) {
        R2Cell cell;
        cell.channel = pose_landmark_names()[static_cast<std::size_t>(lm)];
        cell.axis = ax;
        cell.bin_start_ms =
            pose_bins.bin_edges_ms[static_cast<std::size_t>(b)];
        std::vector<double> coord;
        bool finite = true;
        for (const auto& trial : pose_bins.values) {
          const double v = trial[static_cast<std::size_t>(ax)](lm, b);
          if (!std::isfinite(v)) {
            finite = false;
            break;
          }
          coord.push_back(v);
        }
        if (!finite ||
            *std::min_element(coord.begin(), coord.end()) ==
                *std::max_element(coord.begin(), coord.end())) {
          cell.skipped = true;
          log_warn(log, "degenerate coordinate " + cell.channel + " " +
                            axis_name(ax) + " bin " +
                            fmt_double(cell.bin_start_ms) + " ms; skipped");
          table.cells.push_back(cell);
          continue;
        }
        const TestResult r = point_biserial_test(pose_bins.outcomes, coord);
        cell.r = r.statistic;
        cell.r2 = r_squared(r.statistic);
        cell.p = r.p_value;
        tested.push_back(table.cells.size());
        pvals.push_back(r.p_value);
        table.cells.push_back(cell);
      }

  if (pvals.empty()) {
    table.skipped_all = true;
    return table;
  }
  const FdrResult fdr = bh_fdr(pvals, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < tested.size(); ++i) {
    table.cells[tested[i]].p_fdr = fdr.adjusted[i];
    table.cells[tested[i]].significant = fdr.significant[i];
    acc += table.cells[tested[i]].r2;
  }
  table.mean_r2 = acc / static_cast<double>(tested.size());
  return table;
}

// ---------------------------------------------------------------------------
// set-point latency
// ---------------------------------------------------------------------------

struct LatencySummary {
  double mean_hit_s = std::numeric_limits<double>::quiet_NaN();
  double mean_miss_s = std::numeric_limits<double>::quiet_NaN();
  double difference_s = std::numeric_limits<double>::quiet_NaN();
  double grand_mean_s = std::numeric_limits<double>::quiet_NaN();
  int n_hits = 0;
  int n_misses = 0;
};

inline LatencySummary set_point_latency_by_outcome(
    const std::vector<ShotEvent>& events) {
  if (events.empty()) throw ParamError("no events");
  LatencySummary out;
  double hit_acc = 0.0, miss_acc = 0.0, all_acc = 0.0;
  int all_n = 0;
  for (const auto& e : events) {
    const double latency = e.set_point_time - e.onset_time;
    all_acc += latency;
    ++all_n;
    if (e.outcome == Outcome::Hit) {
      hit_acc += latency;
      ++out.n_hits;
    } else if (e.outcome == Outcome::Miss) {
      miss_acc += latency;
      ++out.n_misses;
    }
  }
  out.grand_mean_s = all_acc / all_n;
  if (out.n_hits > 0) out.mean_hit_s = hit_acc / out.n_hits;
  if (out.n_misses > 0) out.mean_miss_s = miss_acc / out.n_misses;
  if (out.n_hits > 0 && out.n_misses > 0)
    out.difference_s = out.mean_miss_s - out.mean_hit_s;
  return out;
}

inline nlohmann::json to_json(const LatencySummary& s) {
  nlohmann::json j;
  auto put = [&j](const char* key, double v) {
    if (std::isfinite(v))
      j[key] = v;
    else
      j[key] = nullptr;  // class missing
  };
  put("mean_hit_s", s.mean_hit_s);
  put("mean_miss_s", s.mean_miss_s);
  put("difference_s", s.difference_s);
  put("grand_mean_s", s.grand_mean_s);
  j["n_hits"] = s.n_hits;
  j["n_misses"] = s.n_misses;
  return j;
}

}  // namespace mobipipe
