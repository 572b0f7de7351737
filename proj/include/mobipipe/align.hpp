#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/xdf.hpp"

namespace mobipipe {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double at(double x) const { return intercept + slope * x; }
};

// Least squares y = a + b*x. Degenerate x spread collapses to the mean.
inline LinearFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() == 0)
    throw ParamError("fit_line needs matched non-empty vectors");
  const double n = static_cast<double>(x.size());
  const double mx = x.mean(), my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  LinearFit f;
  if (sxx <= 0.0 || n < 2) {
    f.slope = 0.0;
    f.intercept = my;
  } else {
    f.slope = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
    f.intercept = my - f.slope * mx;
  }
  return f;
}

struct DejitterResult {
  Eigen::VectorXd timestamps;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> segments;  // [begin,end)
  double max_residual_s = 0.0;
};

inline double segment_break_threshold(double nominal_rate) {
  return std::max(1.0, 5.0 / nominal_rate);
}

// Replace absent (NaN) timestamps by stepping the nominal interval from the
// nearest stamped neighbour. Leading gaps are back-extrapolated.
inline Eigen::VectorXd fill_missing_timestamps(const Eigen::VectorXd& ts,
                                               double nominal_rate) {
  if (nominal_rate <= 0) throw ParamError("nominal_rate must be positive");
  const double dt = 1.0 / nominal_rate;
  Eigen::VectorXd out = ts;
  Eigen::Index first = -1;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!std::isnan(out[i])) {
      first = i;
      break;
    }
  if (out.size() > 0 && first < 0)
    throw ParamError("stream has no timestamps at all");
  for (Eigen::Index i = first - 1; i >= 0; --i) out[i] = out[i + 1] - dt;
  for (Eigen::Index i = first + 1; i < out.size(); ++i)
    if (std::isnan(out[i])) out[i] = out[i - 1] + dt;
  return out;
}

inline DejitterResult dejitter_timestamps(const Eigen::VectorXd& ts,
                                          double nominal_rate) {
  if (nominal_rate <= 0) throw ParamError("nominal_rate must be positive");
  for (Eigen::Index i = 1; i < ts.size(); ++i)
    if (ts[i] < ts[i - 1])
      throw ParamError("timestamps must be non-decreasing");

  DejitterResult r;
  r.timestamps = ts;
  if (ts.size() == 0) return r;

  const double thr = segment_break_threshold(nominal_rate);
  Eigen::Index begin = 0;
  for (Eigen::Index i = 1; i <= ts.size(); ++i) {
    if (i < ts.size() && ts[i] - ts[i - 1] <= thr) continue;
    r.segments.emplace_back(begin, i);
    begin = i;
  }

  for (const auto& [b, e] : r.segments) {
    const Eigen::Index n = e - b;
    if (n < 2) continue;  // nothing to fit, passed through unchanged
    Eigen::VectorXd idx(n);
    for (Eigen::Index k = 0; k < n; ++k) idx[k] = static_cast<double>(k);
    const LinearFit f = fit_line(idx, ts.segment(b, n));
    for (Eigen::Index k = 0; k < n; ++k) {
      const double fitted = f.at(static_cast<double>(k));
      r.max_residual_s = std::max(r.max_residual_s, std::abs(ts[b + k] - fitted));
      r.timestamps[b + k] = fitted;
    }
  }
  return r;
}

// corrected = raw + o(raw) with o the linear fit of offset vs collection time.
inline Eigen::VectorXd correct_clock_offsets(
    const Eigen::VectorXd& ts, const std::vector<ClockOffsetSample>& offsets,
    LinearFit* fit_out = nullptr, Log* log = nullptr) {
  LinearFit f;
  if (offsets.empty()) {
    log_warn(log, "no clock offsets recorded, leaving timestamps unchanged");
  } else {
    Eigen::VectorXd x(static_cast<Eigen::Index>(offsets.size()));
    Eigen::VectorXd y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] = offsets[static_cast<std::size_t>(i)].collection_time;
      y[i] = offsets[static_cast<std::size_t>(i)].offset;
    }
    f = fit_line(x, y);
  }
  if (fit_out) *fit_out = f;
  Eigen::VectorXd out(ts.size());
  for (Eigen::Index i = 0; i < ts.size(); ++i) out[i] = ts[i] + f.at(ts[i]);
  return out;
}

// Linear interpolation of every channel onto ref_timestamps. Query points
// outside the source support become NaN rows.
inline TimedStream resample_to_reference(const TimedStream& stream,
                                         const Eigen::VectorXd& ref_timestamps) {
  const Eigen::Index n = stream.timestamps.size();
  if (n < 2) throw ParamError("resampling needs at least 2 source samples");
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(stream.timestamps[i] > stream.timestamps[i - 1]))
      throw ParamError("source timestamps must be strictly increasing");
  if (stream.info.channel_format == ChannelFormat::String)
    throw ParamError("cannot interpolate a string stream");

  const Eigen::Index m = ref_timestamps.size();
  const Eigen::Index nch = stream.samples.cols();
  TimedStream out;
  out.info = stream.info;
  out.clock_offsets = stream.clock_offsets;
  out.timestamps = ref_timestamps;
  out.samples.resize(m, nch);

  const double* tbeg = stream.timestamps.data();
  const double* tend = tbeg + n;
  for (Eigen::Index q = 0; q < m; ++q) {
    const double t = ref_timestamps[q];
    if (!(t >= tbeg[0]) || !(t <= tbeg[n - 1])) {
      out.samples.row(q).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double* ub = std::upper_bound(tbeg, tend, t);
    Eigen::Index i = static_cast<Eigen::Index>(ub - tbeg) - 1;
    if (t == tbeg[i]) {  // on a source point: copy, no arithmetic
      out.samples.row(q) = stream.samples.row(i);
      continue;
    }
    if (i >= n - 1) i = n - 2;
    const double u = (t - tbeg[i]) / (tbeg[i + 1] - tbeg[i]);
    out.samples.row(q) =
        stream.samples.row(i) * (1.0 - u) + stream.samples.row(i + 1) * u;
  }
  return out;
}

struct AlignmentRow {
  std::string stream;
  std::size_t segment_count = 0;
  double max_residual_s = 0.0;
  LinearFit applied_offset_fit;
  double fraction_out_of_range = 0.0;
};

struct AlignmentReport {
  std::vector<AlignmentRow> rows;

  std::string to_csv() const {
    CsvWriter csv({"stream", "segments", "max_residual_s", "slope",
                   "intercept", "frac_oob"});
    for (const auto& r : rows) {
      csv.cell(r.stream)
          .cell(r.segment_count)
          .cell(r.max_residual_s)
          .cell(r.applied_offset_fit.slope)
          .cell(r.applied_offset_fit.intercept)
          .cell(r.fraction_out_of_range);
      csv.end_row();
    }
    return csv.str();
  }
};

struct AlignedRecording {
  RecordingSet set;  // numeric streams share the EEG grid; markers keep theirs
  AlignmentReport report;
  Eigen::VectorXd grid;  // the corrected EEG timestamps
};

// Full module pass: dejitter, offset-correct, then put every numeric stream
// onto the EEG grid. Marker streams only get their timestamps corrected.
inline AlignedRecording align_recording(const RecordingSet& in,
                                        Log* log = nullptr) {
  const TimedStream* eeg = in.find_kind(StreamKind::EEG);
  if (!eeg) throw InvariantError("alignment needs an EEG stream");

  AlignedRecording out;
  out.set.participant_id = in.participant_id;
  out.set.outcomes = in.outcomes;

  struct Stage {
    TimedStream corrected;
    AlignmentRow row;
  };
  std::vector<Stage> staged;

  for (const auto& s : in.streams) {
    Stage st;
    st.corrected = s;
    st.row.stream = s.info.name;
    Eigen::VectorXd ts = s.timestamps;
    if (s.info.nominal_rate > 0 && ts.size() > 0) {
      ts = fill_missing_timestamps(ts, s.info.nominal_rate);
      DejitterResult d = dejitter_timestamps(ts, s.info.nominal_rate);
      ts = d.timestamps;
      st.row.segment_count = d.segments.size();
      st.row.max_residual_s = d.max_residual_s;
    } else {
      st.row.segment_count = ts.size() > 0 ? 1 : 0;
    }
    st.corrected.timestamps =
        correct_clock_offsets(ts, s.clock_offsets, &st.row.applied_offset_fit,
                              log);
    staged.push_back(std::move(st));
  }

  const Stage* eeg_stage = nullptr;
  for (const auto& st : staged)
    if (st.corrected.info.kind == StreamKind::EEG) eeg_stage = &st;
  out.grid = eeg_stage->corrected.timestamps;

  for (auto& st : staged) {
    const bool numeric =
        st.corrected.info.channel_format != ChannelFormat::String;
    if (numeric && st.corrected.info.kind != StreamKind::EEG) {
      TimedStream r = resample_to_reference(st.corrected, out.grid);
      Eigen::Index oob = 0;
      for (Eigen::Index i = 0; i < r.samples.rows(); ++i)
        if (std::isnan(r.samples(i, 0))) ++oob;
      st.row.fraction_out_of_range =
          r.samples.rows() > 0
              ? static_cast<double>(oob) / static_cast<double>(r.samples.rows())
              : 0.0;
      st.corrected = std::move(r);
    }
    out.report.rows.push_back(st.row);
    out.set.streams.push_back(std::move(st.corrected));
  }
  return out;
}

}  // namespace mobipipe
