#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/fir.hpp"
#include "mobipipe/ica.hpp"
#include "mobipipe/montage.hpp"

namespace mobipipe {

// Continuous multichannel signal on a uniform grid. t0 is the session time
// of column 0.
struct ContinuousEeg {
  Eigen::MatrixXd data;  // [n_channels x n_samples], uV
  double t0 = 0.0;
  double fs = 0.0;
  std::vector<std::string> channel_labels;
};

struct Epochs {
  std::vector<Eigen::MatrixXd> data;  // per epoch [n_channels x n_samples]
  std::vector<double> times;          // seconds relative to the event
  std::vector<double> event_times;    // session clock, one per epoch
  std::vector<int> labels;            // per-epoch outcome, -1 when unknown
  std::vector<std::string> channel_labels;
  double fs = 0.0;

  int n_epochs() const { return static_cast<int>(data.size()); }
  Eigen::Index n_channels() const { return data.empty() ? 0 : data[0].rows(); }
  Eigen::Index n_samples() const { return data.empty() ? 0 : data[0].cols(); }

  Epochs subset(const std::vector<int>& keep) const {
    Epochs out;
    out.times = times;
    out.channel_labels = channel_labels;
    out.fs = fs;
    for (int e : keep) {
      if (e < 0 || e >= n_epochs())
        throw ParamError("epoch index out of range");
      out.data.push_back(data[static_cast<std::size_t>(e)]);
      out.event_times.push_back(event_times[static_cast<std::size_t>(e)]);
      out.labels.push_back(labels[static_cast<std::size_t>(e)]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// channel QC
// ---------------------------------------------------------------------------

// One-sided: only unusually LOUD channels are flagged. A silent channel
// passes this rule.
inline std::vector<int> flag_bad_channels_rms(const Eigen::MatrixXd& data,
                                              double k = 1.0) {
  const Eigen::Index c = data.rows();
  if (c < 3) throw ParamError("channel QC needs at least 3 channels");
  if (data.cols() < 1) throw ParamError("no samples");

  Eigen::VectorXd rms(c);
  for (Eigen::Index i = 0; i < c; ++i)
    rms[i] = std::sqrt(data.row(i).array().square().mean());

  const double mean = rms.mean();
  const double sd = std::sqrt((rms.array() - mean).square().sum() /
                              static_cast<double>(c - 1));
  std::vector<int> bad;
  for (Eigen::Index i = 0; i < c; ++i)
    if (rms[i] > mean + k * sd) bad.push_back(static_cast<int>(i));
  return bad;
}

// ---------------------------------------------------------------------------
// epoching
// ---------------------------------------------------------------------------

inline Epochs extract_epochs(const ContinuousEeg& eeg,
                             const std::vector<double>& event_times,
                             double win_start, double win_end,
                             const std::vector<int>& event_labels = {},
                             Log* log = nullptr) {
  if (eeg.fs <= 0) throw ParamError("sample rate must be positive");
  if (win_end <= win_start) throw ParamError("epoch window must be ordered");
  if (!event_labels.empty() && event_labels.size() != event_times.size())
    throw ParamError("event label count mismatch");

  const Eigen::Index n = eeg.data.cols();
  const long n_samples = std::lround((win_end - win_start) * eeg.fs);
  if (n_samples < 1) throw ParamError("epoch window shorter than one sample");
  const long offset0 = std::lround(win_start * eeg.fs);

  Epochs out;
  out.fs = eeg.fs;
  out.channel_labels = eeg.channel_labels;
  out.times.resize(static_cast<std::size_t>(n_samples));
  for (long k = 0; k < n_samples; ++k)
    out.times[static_cast<std::size_t>(k)] =
        static_cast<double>(offset0 + k) / eeg.fs;

  for (std::size_t e = 0; e < event_times.size(); ++e) {
    const long idx0 = std::lround((event_times[e] - eeg.t0) * eeg.fs);
    const long first = idx0 + offset0;
    const long last = first + n_samples - 1;
    if (first < 0 || last >= static_cast<long>(n)) {
      log_warn(log, "dropped event " + std::to_string(e) + " at " +
                        fmt_double(event_times[e]) +
                        " s: epoch window leaves the recording");
      continue;
    }
    out.data.push_back(
        eeg.data.middleCols(static_cast<Eigen::Index>(first),
                            static_cast<Eigen::Index>(n_samples)));
    out.event_times.push_back(event_times[e]);
    out.labels.push_back(event_labels.empty() ? -1
                                              : event_labels[e]);
  }
  if (out.data.empty())
    throw ParamError("no event window fits inside the recording");
  return out;
}

// ---------------------------------------------------------------------------
// baseline correction
// ---------------------------------------------------------------------------

inline Epochs baseline_correct(const Epochs& epochs, double base_start,
                               double base_end) {
  if (base_end < base_start) throw ParamError("baseline window must be ordered");
  if (epochs.times.empty()) throw ParamError("empty epochs");
  if (base_start < epochs.times.front() - 0.5 / epochs.fs ||
      base_end > epochs.times.back() + 0.5 / epochs.fs)
    throw WindowError("baseline window lies outside the epoch");

  std::vector<Eigen::Index> in_window;
  for (std::size_t k = 0; k < epochs.times.size(); ++k)
    if (epochs.times[k] >= base_start && epochs.times[k] <= base_end)
      in_window.push_back(static_cast<Eigen::Index>(k));
  if (in_window.empty())
    throw WindowError("baseline window contains no samples");

  Epochs out = epochs;
  for (auto& ep : out.data) {
    for (Eigen::Index ch = 0; ch < ep.rows(); ++ch) {
      double mean = 0.0;
      for (Eigen::Index k : in_window) mean += ep(ch, k);
      mean /= static_cast<double>(in_window.size());
      ep.row(ch).array() -= mean;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// joint-probability epoch rejection
// ---------------------------------------------------------------------------

struct RejectionRow {
  int epoch = 0;
  std::string reason;
  double measure = 0.0;
  double z = 0.0;
};

inline std::string rejection_csv(const std::vector<RejectionRow>& rows) {
  CsvWriter csv({"epoch", "reason", "measure", "z"});
  for (const auto& r : rows)
    csv.cell(r.epoch).cell(r.reason).cell(r.measure).cell(r.z).end_row();
  return csv.str();
}

struct JointProbResult {
  std::vector<int> kept;
  std::vector<RejectionRow> rejected;
};

namespace preprocess_detail {

// Histogram density over a channel's pooled values; 1000 equal-width bins,
// probability floored at 1/(10*N) so log stays finite.
struct HistDensity {
  double vmin = 0.0, width = 0.0, floor_p = 0.0;
  std::vector<double> p;

  double neg_log_p(double v) const {
    if (p.empty()) return 0.0;  // constant channel
    int bin = static_cast<int>((v - vmin) / width);
    bin = std::max(0, std::min(static_cast<int>(p.size()) - 1, bin));
    return -std::log(std::max(p[static_cast<std::size_t>(bin)], floor_p));
  }
};

inline HistDensity fit_density(const std::vector<double>& values,
                               int n_bins = 1000) {
  HistDensity d;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) return d;  // zero range: probability 1 everywhere
  d.vmin = *mn;
  d.width = (*mx - *mn) / n_bins;
  d.floor_p = 1.0 / (10.0 * static_cast<double>(values.size()));
  std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
  for (double v : values) {
    int bin = static_cast<int>((v - d.vmin) / d.width);
    bin = std::max(0, std::min(n_bins - 1, bin));
    counts[static_cast<std::size_t>(bin)] += 1.0;
  }
  d.p.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    d.p[i] = counts[i] / static_cast<double>(values.size());
  return d;
}

inline Eigen::VectorXd zscore(const Eigen::VectorXd& m) {
  const double mean = m.mean();
  const double sd = m.size() > 1
                        ? std::sqrt((m.array() - mean).square().sum() /
                                    static_cast<double>(m.size() - 1))
                        : 0.0;
  if (sd == 0.0) return Eigen::VectorXd::Zero(m.size());
  return (m.array() - mean) / sd;
}

}  // namespace preprocess_detail

inline JointProbResult joint_probability_rejection(const Epochs& epochs,
                                                   double sd_threshold) {
  const int ne = epochs.n_epochs();
  if (ne < 10) throw ParamError("joint-probability rejection needs >= 10 epochs");
  const Eigen::Index nc = epochs.n_channels();
  const Eigen::Index ns = epochs.n_samples();

  // measure[e][c]: mean -log p of epoch e on channel c under the pooled
  // per-channel histogram density.
  Eigen::MatrixXd measure(ne, nc);
  std::vector<double> pool(static_cast<std::size_t>(ne) *
                           static_cast<std::size_t>(ns));
  for (Eigen::Index c = 0; c < nc; ++c) {
    std::size_t at = 0;
    for (int e = 0; e < ne; ++e)
      for (Eigen::Index k = 0; k < ns; ++k)
        pool[at++] = epochs.data[static_cast<std::size_t>(e)](c, k);
    const auto density = preprocess_detail::fit_density(pool);
    for (int e = 0; e < ne; ++e) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < ns; ++k)
        acc += density.neg_log_p(epochs.data[static_cast<std::size_t>(e)](c, k));
      measure(e, c) = acc / static_cast<double>(ns);
    }
  }

  Eigen::MatrixXd z(ne, nc);
  for (Eigen::Index c = 0; c < nc; ++c)
    z.col(c) = preprocess_detail::zscore(measure.col(c));
  const Eigen::VectorXd summed = measure.rowwise().sum();
  const Eigen::VectorXd z_all = preprocess_detail::zscore(summed);

  JointProbResult result;
  for (int e = 0; e < ne; ++e) {
    Eigen::Index worst = 0;
    const double zmax = z.row(e).maxCoeff(&worst);
    if (zmax > sd_threshold) {
      result.rejected.push_back(
          {e, "jointprob_single_channel", measure(e, worst), zmax});
    } else if (z_all[e] > sd_threshold) {
      result.rejected.push_back(
          {e, "jointprob_all_channel", summed[e], z_all[e]});
    } else {
      result.kept.push_back(e);
    }
  }
  if (result.kept.empty())
    throw ValidationError("joint-probability rejection removed every epoch");
  return result;
}

// ---------------------------------------------------------------------------
// spherical-spline interpolation
// ---------------------------------------------------------------------------

namespace preprocess_detail {

// Truncated Legendre series g(x) with m = 4, 7 terms.
inline double spline_g(double x, int m = 4, int n_terms = 7) {
  double p_prev = 1.0, p = x;  // P0, P1
  double sum = 0.0;
  for (int l = 1; l <= n_terms; ++l) {
    if (l > 1) {
      const double p_next =
          ((2.0 * l - 1.0) * x * p - (l - 1.0) * p_prev) / l;
      p_prev = p;
      p = p_next;
    }
    sum += (2.0 * l + 1.0) / std::pow(static_cast<double>(l) * (l + 1.0), m) * p;
  }
  return sum / (4.0 * std::numbers::pi);
}

}  // namespace preprocess_detail

// Perrin-style spherical-spline interpolation of the rows listed in
// bad_channels from the remaining rows. positions align with rows and must
// be unit vectors.
inline Eigen::MatrixXd spherical_interpolate(
    const Eigen::MatrixXd& data, const std::vector<int>& bad_channels,
    const std::vector<MontagePosition>& positions, double lambda = 1e-5) {
  const Eigen::Index c = data.rows();
  if (positions.size() != static_cast<std::size_t>(c))
    throw ParamError("one montage position per channel required");
  for (const auto& p : positions) {
    const double norm2 = p.x * p.x + p.y * p.y + p.z * p.z;
    if (std::abs(norm2 - 1.0) > 1e-6)
      throw InvariantError("montage position " + p.label +
                           " is not on the unit sphere");
  }
  for (int b : bad_channels)
    if (b < 0 || b >= static_cast<int>(c))
      throw ParamError("bad channel index out of range");
  if (bad_channels.empty()) return data;

  std::vector<int> good;
  for (Eigen::Index i = 0; i < c; ++i)
    if (std::find(bad_channels.begin(), bad_channels.end(),
                  static_cast<int>(i)) == bad_channels.end())
      good.push_back(static_cast<int>(i));
  const int ng = static_cast<int>(good.size());
  if (ng < 4)
    throw ParamError("spherical interpolation needs >= 4 good channels");

  auto cosang = [&](int a, int b) {
    const auto& pa = positions[static_cast<std::size_t>(a)];
    const auto& pb = positions[static_cast<std::size_t>(b)];
    return std::max(-1.0, std::min(1.0, pa.x * pb.x + pa.y * pb.y + pa.z * pb.z));
  };

  // [G + lambda*I, 1; 1', 0] [c; c0] = [v; 0]
  Eigen::MatrixXd sys(ng + 1, ng + 1);
  for (int i = 0; i < ng; ++i) {
    for (int j = 0; j < ng; ++j)
      sys(i, j) = preprocess_detail::spline_g(cosang(good[static_cast<std::size_t>(i)],
                                                     good[static_cast<std::size_t>(j)]));
    sys(i, i) += lambda;
    sys(i, ng) = 1.0;
    sys(ng, i) = 1.0;
  }
  sys(ng, ng) = 0.0;

  Eigen::MatrixXd rhs(ng + 1, data.cols());
  for (int i = 0; i < ng; ++i)
    rhs.row(i) = data.row(good[static_cast<std::size_t>(i)]);
  rhs.row(ng).setZero();

  const Eigen::MatrixXd sol = sys.partialPivLu().solve(rhs);

  Eigen::MatrixXd out = data;
  for (int b : bad_channels) {
    Eigen::RowVectorXd gb(ng);
    for (int i = 0; i < ng; ++i)
      gb[i] = preprocess_detail::spline_g(cosang(b, good[static_cast<std::size_t>(i)]));
    out.row(b) = gb * sol.topRows(ng) + sol.row(ng);
  }
  return out;
}

// Label-based convenience: positions come from the built-in montage. Good
// channels without a known site are left out of the interpolation basis;
// a bad channel without one cannot be reconstructed.
inline Eigen::MatrixXd spherical_interpolate(
    const Eigen::MatrixXd& data, const std::vector<int>& bad_channels,
    const std::vector<std::string>& channel_labels, double lambda = 1e-5,
    Log* log = nullptr) {
  if (channel_labels.size() != static_cast<std::size_t>(data.rows()))
    throw ParamError("one label per channel required");
  const auto& table = standard_montage_32();
  auto find = [&table](const std::string& label) -> const MontagePosition* {
    for (const auto& p : table)
      if (p.label == label) return &p;
    return nullptr;
  };

  std::vector<int> keep_bad = bad_channels;
  std::vector<MontagePosition> positions(channel_labels.size());
  std::vector<int> skip;  // channels outside the montage
  for (std::size_t i = 0; i < channel_labels.size(); ++i) {
    const MontagePosition* p = find(channel_labels[i]);
    if (p) {
      positions[i] = *p;
      continue;
    }
    if (std::find(bad_channels.begin(), bad_channels.end(),
                  static_cast<int>(i)) != bad_channels.end())
      throw SchemaError("bad channel " + channel_labels[i] +
                        " has no montage position");
    log_warn(log, "channel " + channel_labels[i] +
                      " has no montage position; not used for interpolation");
    positions[i] = {channel_labels[i], 0.0, 0.0, 1.0};
    skip.push_back(static_cast<int>(i));
  }

  if (skip.empty())
    return spherical_interpolate(data, keep_bad, positions, lambda);

  // Treat unknown-site channels as additional "bad" rows so they stay out
  // of the basis, then restore their original data afterwards.
  std::vector<int> bad_plus = keep_bad;
  bad_plus.insert(bad_plus.end(), skip.begin(), skip.end());
  Eigen::MatrixXd out =
      spherical_interpolate(data, bad_plus, positions, lambda);
  for (int s : skip) out.row(s) = data.row(s);
  return out;
}

// ---------------------------------------------------------------------------
// re-referencing
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd rereference_average_of(
    const Eigen::MatrixXd& data, const std::vector<std::string>& channel_labels,
    const std::vector<std::string>& reference = {"TP9", "TP10"}) {
  if (channel_labels.size() != static_cast<std::size_t>(data.rows()))
    throw ParamError("one label per channel required");
  if (reference.empty()) throw ParamError("empty reference set");

  Eigen::RowVectorXd ref = Eigen::RowVectorXd::Zero(data.cols());
  for (const auto& name : reference) {
    const auto it =
        std::find(channel_labels.begin(), channel_labels.end(), name);
    if (it == channel_labels.end())
      throw SchemaError("reference channel " + name + " not present");
    ref += data.row(it - channel_labels.begin());
  }
  ref /= static_cast<double>(reference.size());
  return data.rowwise() - ref;
}

inline Epochs rereference_average_of(
    const Epochs& epochs, const std::vector<std::string>& reference = {
                              "TP9", "TP10"}) {
  Epochs out = epochs;
  for (auto& ep : out.data)
    ep = rereference_average_of(ep, epochs.channel_labels, reference);
  return out;
}

// ---------------------------------------------------------------------------
// component back-projection
// ---------------------------------------------------------------------------

// x' = A * diag(mask) * W_total * x, mask zero on rejected components.
inline Eigen::MatrixXd backproject_excluding(
    const Eigen::MatrixXd& data, const UnmixingModel& model,
    const std::vector<int>& rejected_components) {
  const Eigen::Index c = data.rows();
  if (model.sphere.rows() != c)
    throw ParamError("model channel count does not match data");
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(c);
  for (int r : rejected_components) {
    if (r < 0 || r >= static_cast<int>(c))
      throw ParamError("component index out of range");
    mask[r] = 0.0;
  }
  const Eigen::MatrixXd w = model.unmixing();
  const Eigen::MatrixXd a = model.mixing();
  return a * (mask.asDiagonal() * (w * data));
}

// ---------------------------------------------------------------------------
// epoch tensor export
// ---------------------------------------------------------------------------

inline void save_epochs(const Epochs& epochs, const std::string& data_path,
                        const std::string& sidecar_path) {
  std::ofstream bin(data_path, std::ios::binary);
  if (!bin) throw Error("cannot open for writing: " + data_path);
  for (const auto& ep : epochs.data)
    for (Eigen::Index ch = 0; ch < ep.rows(); ++ch)
      for (Eigen::Index k = 0; k < ep.cols(); ++k) {
        const double v = ep(ch, k);
        bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  bin.close();

  nlohmann::json j;
  j["n_epochs"] = epochs.n_epochs();
  j["n_channels"] = epochs.n_channels();
  j["n_samples"] = epochs.n_samples();
  j["fs"] = epochs.fs;
  j["times"] = epochs.times;
  j["event_times"] = epochs.event_times;
  j["labels"] = epochs.labels;
  j["channel_labels"] = epochs.channel_labels;
  j["dtype"] = "float64";
  j["order"] = "epoch,channel,sample";
  std::ofstream side(sidecar_path, std::ios::binary);
  if (!side) throw Error("cannot open for writing: " + sidecar_path);
  side << j.dump(2) << "\n";
}

inline Epochs load_epochs(const std::string& data_path,
                          const std::string& sidecar_path) {
  std::ifstream side(sidecar_path, std::ios::binary);
  if (!side) throw Error("cannot open: " + sidecar_path);
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad epoch sidecar: ") + e.what());
  }

  Epochs out;
  int ne = 0;
  Eigen::Index nc = 0, ns = 0;
  try {
    ne = j.at("n_epochs").get<int>();
    nc = j.at("n_channels").get<Eigen::Index>();
    ns = j.at("n_samples").get<Eigen::Index>();
    out.fs = j.at("fs").get<double>();
    out.times = j.at("times").get<std::vector<double>>();
    out.event_times = j.at("event_times").get<std::vector<double>>();
    out.labels = j.at("labels").get<std::vector<int>>();
    out.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
    if (j.at("dtype").get<std::string>() != "float64" ||
        j.at("order").get<std::string>() != "epoch,channel,sample")
      throw SchemaError("unsupported epoch data layout");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad epoch sidecar: ") + e.what());
  }
  if (out.times.size() != static_cast<std::size_t>(ns) ||
      out.event_times.size() != static_cast<std::size_t>(ne) ||
      out.labels.size() != static_cast<std::size_t>(ne))
    throw SchemaError("epoch sidecar dimensions disagree");

  std::ifstream bin(data_path, std::ios::binary);
  if (!bin) throw Error("cannot open: " + data_path);
  bin.seekg(0, std::ios::end);
  const auto have = static_cast<std::uint64_t>(bin.tellg());
  const std::uint64_t want = static_cast<std::uint64_t>(ne) *
                             static_cast<std::uint64_t>(nc) *
                             static_cast<std::uint64_t>(ns) * sizeof(double);
  if (have != want)
    throw TruncationError("epoch data file holds " + std::to_string(have) +
                              " bytes, sidecar implies " +
                              std::to_string(want),
                          have);
  bin.seekg(0);
  for (int e = 0; e < ne; ++e) {
    Eigen::MatrixXd ep(nc, ns);
    for (Eigen::Index ch = 0; ch < nc; ++ch)
      for (Eigen::Index k = 0; k < ns; ++k) {
        double v = 0;
        bin.read(reinterpret_cast<char*>(&v), sizeof(v));
        ep(ch, k) = v;
      }
    out.data.push_back(std::move(ep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// the two-pass driver
// ---------------------------------------------------------------------------

struct PreprocessConfig {
  // pass 1 (decomposition): band limit, short epochs, coarse rejection
  FilterSpec ica_highpass{FilterKind::Highpass, 2.0, 416, 0.0};
  FilterSpec ica_lowpass{FilterKind::Lowpass, 30.0, 112, 0.0};
  double ica_epoch_start = -2.5, ica_epoch_end = 0.0;
  double jointprob_sd_ica = 5.0;

  // pass 2 (ERP): gentler band, long epochs, strict rejection
  FilterSpec erp_highpass{FilterKind::Highpass, 0.2, 4128, 0.0};
  FilterSpec erp_lowpass{FilterKind::Lowpass, 10.0, 332, 0.0};
  double erp_epoch_start = -2.5, erp_epoch_end = 1.0;
  double baseline_start = -2.5, baseline_end = -2.0;
  double jointprob_sd_final = 3.0;

  double bad_channel_k = 1.0;
  std::vector<std::string> reference_channels = {"TP9", "TP10"};
  std::uint64_t ica_seed = 1;
  InfomaxOptions ica;
  FlagThresholds component_thresholds;
};

struct PreprocessOutput {
  std::vector<int> bad_channels;
  std::vector<std::string> good_labels;
  UnmixingModel model;
  std::vector<int> rejected_components;
  std::vector<int> kept_pass1, kept_pass2;
  int n_epochs_pass1 = 0, n_epochs_pass2 = 0;
  Epochs epochs;                 // final cleaned full-channel epochs
  Eigen::MatrixXd trial_average; // [n_channels x n_samples]
  std::vector<RejectionRow> rejections;
};

inline PreprocessOutput preprocess_session(
    const ContinuousEeg& raw, const std::vector<double>& event_times,
    const std::vector<int>& event_labels, const PreprocessConfig& cfg,
    const ComponentLabelTable* component_table = nullptr, Log* log = nullptr) {
  if (raw.channel_labels.size() != static_cast<std::size_t>(raw.data.rows()))
    throw ParamError("one label per channel required");

  PreprocessOutput out;

  // pass 1: channel QC on the raw continuous signal
  out.bad_channels = flag_bad_channels_rms(raw.data, cfg.bad_channel_k);
  std::vector<int> good;
  for (Eigen::Index i = 0; i < raw.data.rows(); ++i)
    if (std::find(out.bad_channels.begin(), out.bad_channels.end(),
                  static_cast<int>(i)) == out.bad_channels.end())
      good.push_back(static_cast<int>(i));
  for (int g : good)
    out.good_labels.push_back(raw.channel_labels[static_cast<std::size_t>(g)]);
  for (int b : out.bad_channels)
    log_info(log, "channel " + raw.channel_labels[static_cast<std::size_t>(b)] +
                      " flagged by RMS rule");

  Eigen::MatrixXd good_data(static_cast<Eigen::Index>(good.size()),
                            raw.data.cols());
  for (std::size_t i = 0; i < good.size(); ++i)
    good_data.row(static_cast<Eigen::Index>(i)) = raw.data.row(good[i]);

  auto design_at = [&](FilterSpec spec) {
    spec.sample_rate = raw.fs;
    return design_windowed_sinc(spec);
  };

  // decomposition pass: 2-30 Hz, short pre-event epochs, coarse rejection
  Eigen::MatrixXd filt1 =
      apply_zero_phase(good_data, design_at(cfg.ica_highpass));
  filt1 = apply_zero_phase(filt1, design_at(cfg.ica_lowpass));
  ContinuousEeg pass1{std::move(filt1), raw.t0, raw.fs, out.good_labels};
  const Epochs ep1 = extract_epochs(pass1, event_times, cfg.ica_epoch_start,
                                    cfg.ica_epoch_end, event_labels, log);
  out.n_epochs_pass1 = ep1.n_epochs();
  JointProbResult jp1 =
      joint_probability_rejection(ep1, cfg.jointprob_sd_ica);
  out.kept_pass1 = jp1.kept;
  for (auto row : jp1.rejected) {
    row.reason = "pass1_" + row.reason;
    out.rejections.push_back(row);
  }

  Eigen::MatrixXd ica_input(
      static_cast<Eigen::Index>(good.size()),
      static_cast<Eigen::Index>(jp1.kept.size()) * ep1.n_samples());
  for (std::size_t i = 0; i < jp1.kept.size(); ++i)
    ica_input.middleCols(static_cast<Eigen::Index>(i) * ep1.n_samples(),
                         ep1.n_samples()) =
        ep1.data[static_cast<std::size_t>(jp1.kept[i])];
  out.model = fit_extended_infomax(ica_input, cfg.ica_seed, out.good_labels,
                                   cfg.ica);

  if (component_table) {
    if (component_table->probs.rows() !=
        static_cast<Eigen::Index>(good.size()))
      throw ValidationError(
          "component table rows do not match the decomposition size");
    out.rejected_components =
        flag_components_by_threshold(*component_table,
                                     cfg.component_thresholds);
  }

  // ERP pass: 0.2-10 Hz on the raw signal, long epochs, strict rejection
  Eigen::MatrixXd filt2 =
      apply_zero_phase(good_data, design_at(cfg.erp_highpass));
  filt2 = apply_zero_phase(filt2, design_at(cfg.erp_lowpass));
  ContinuousEeg pass2{std::move(filt2), raw.t0, raw.fs, out.good_labels};
  Epochs ep2 = extract_epochs(pass2, event_times, cfg.erp_epoch_start,
                              cfg.erp_epoch_end, event_labels, log);
  out.n_epochs_pass2 = ep2.n_epochs();
  ep2 = baseline_correct(ep2, cfg.baseline_start, cfg.baseline_end);

  if (!out.rejected_components.empty())
    for (auto& ep : ep2.data)
      ep = backproject_excluding(ep, out.model, out.rejected_components);

  JointProbResult jp2 =
      joint_probability_rejection(ep2, cfg.jointprob_sd_final);
  out.kept_pass2 = jp2.kept;
  for (auto row : jp2.rejected) {
    row.reason = "pass2_" + row.reason;
    out.rejections.push_back(row);
  }
  Epochs kept = ep2.subset(jp2.kept);

  // restore the full channel set: interpolate bad rows, then re-reference
  Epochs full;
  full.times = kept.times;
  full.event_times = kept.event_times;
  full.labels = kept.labels;
  full.channel_labels = raw.channel_labels;
  full.fs = kept.fs;
  for (const auto& ep : kept.data) {
    Eigen::MatrixXd m =
        Eigen::MatrixXd::Zero(raw.data.rows(), ep.cols());
    for (std::size_t i = 0; i < good.size(); ++i)
      m.row(good[i]) = ep.row(static_cast<Eigen::Index>(i));
    m = spherical_interpolate(m, out.bad_channels, raw.channel_labels, 1e-5,
                              log);
    full.data.push_back(std::move(m));
  }
  full = rereference_average_of(full, cfg.reference_channels);

  out.trial_average =
      Eigen::MatrixXd::Zero(raw.data.rows(), full.n_samples());
  for (const auto& ep : full.data) out.trial_average += ep;
  out.trial_average /= static_cast<double>(full.n_epochs());
  out.epochs = std::move(full);
  return out;
}

}  // namespace mobipipe
