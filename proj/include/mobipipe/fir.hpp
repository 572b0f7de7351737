#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"

namespace mobipipe {

enum class FilterKind { Lowpass, Highpass };

struct FilterSpec {
  FilterKind kind = FilterKind::Lowpass;
  double cutoff = 0.0;       // Hz, -6 dB (half-amplitude) point
  int order = 0;             // tap count - 1; odd values are bumped to even
  double sample_rate = 0.0;  // Hz
};

// Odd orders round up so the group delay order/2 is an integer.
inline int normalized_order(int order) { return order + (order & 1); }

inline void validate(const FilterSpec& spec) {
  if (spec.sample_rate <= 0) throw ParamError("sample_rate must be positive");
  if (!(spec.cutoff > 0) || !(spec.cutoff < spec.sample_rate / 2))
    throw ParamError("cutoff must lie in (0, sample_rate/2)");
  if (spec.order < 2) throw ParamError("order must be at least 2");
}

// Hamming-windowed sinc. Lowpass has unit DC gain; highpass is the spectral
// inversion of the complementary lowpass, so its taps are a centered unit
// impulse minus the lowpass taps.
inline Eigen::VectorXd design_windowed_sinc(const FilterSpec& spec) {
  validate(spec);
  const int order = normalized_order(spec.order);
  const int n_taps = order + 1;
  const int mid = order / 2;
  const double fc = spec.cutoff / spec.sample_rate;  // cycles per sample

  Eigen::VectorXd h(n_taps);
  for (int n = 0; n <= mid; ++n) {
    const int m = n - mid;  // 0 at center, symmetric by |m|
    const double x = 2.0 * std::numbers::pi * fc * m;
    const double sinc = m == 0 ? 2.0 * fc : std::sin(x) / (std::numbers::pi * m);
    const double w =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / order);
    h[n] = sinc * w;
    h[order - n] = h[n];
  }
  h /= h.sum();

  if (spec.kind == FilterKind::Highpass) {
    h = -h;
    h[mid] += 1.0;
  }
  return h;
}

inline Eigen::VectorXd magnitude_response_db(const Eigen::VectorXd& taps,
                                             const Eigen::VectorXd& freqs,
                                             double sample_rate) {
  if (sample_rate <= 0) throw ParamError("sample_rate must be positive");
  Eigen::VectorXd out(freqs.size());
  for (Eigen::Index k = 0; k < freqs.size(); ++k) {
    std::complex<double> acc(0.0, 0.0);
    const double w = 2.0 * std::numbers::pi * freqs[k] / sample_rate;
    for (Eigen::Index n = 0; n < taps.size(); ++n)
      acc += taps[n] * std::polar(1.0, -w * static_cast<double>(n));
    const double mag = std::abs(acc);
    out[k] = mag > 0 ? std::max(20.0 * std::log10(mag), -300.0) : -300.0;
  }
  return out;
}

inline double magnitude_response_db(const Eigen::VectorXd& taps, double freq,
                                    double sample_rate) {
  Eigen::VectorXd f(1);
  f << freq;
  return magnitude_response_db(taps, f, sample_rate)[0];
}

namespace fir_detail {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Full linear convolution, FFT for anything nontrivial.
inline Eigen::VectorXd convolve_full(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& h) {
  const Eigen::Index n = x.size(), m = h.size();
  const Eigen::Index out_len = n + m - 1;
  if (m < 32 || n < 64) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(out_len);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) y[i + j] += x[i] * h[j];
    return y;
  }
  const std::size_t L = next_pow2(static_cast<std::size_t>(out_len));
  std::vector<double> xt(L, 0.0), ht(L, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) xt[static_cast<std::size_t>(i)] = x[i];
  for (Eigen::Index j = 0; j < m; ++j) ht[static_cast<std::size_t>(j)] = h[j];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> X, H;
  fft.fwd(X, xt);
  fft.fwd(H, ht);
  for (std::size_t i = 0; i < X.size(); ++i) X[i] *= H[i];
  std::vector<double> y;
  fft.inv(y, X);
  Eigen::VectorXd out(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i)
    out[i] = y[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace fir_detail

// Zero-phase filtering of one channel: replicate-pad by order/2 on each side,
// convolve, and drop the group delay so y[i] lines up with x[i].
inline Eigen::VectorXd apply_zero_phase(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& taps) {
  const Eigen::Index n = x.size();
  const Eigen::Index order = taps.size() - 1;
  if (order < 0 || order % 2 != 0)
    throw ParamError("tap count must be odd (even filter order)");
  if (n <= taps.size())
    throw ParamError("signal must be longer than the filter");
  const Eigen::Index pad = order / 2;

  Eigen::VectorXd xp(n + 2 * pad);
  xp.segment(pad, n) = x;
  xp.head(pad).setConstant(x[0]);
  xp.tail(pad).setConstant(x[n - 1]);

  const Eigen::VectorXd full = fir_detail::convolve_full(xp, taps);
  return full.segment(order, n);
}

// Rows are channels, columns are samples.
inline Eigen::MatrixXd apply_zero_phase(const Eigen::MatrixXd& signal,
                                        const Eigen::VectorXd& taps) {
  Eigen::MatrixXd out(signal.rows(), signal.cols());
  for (Eigen::Index ch = 0; ch < signal.rows(); ++ch)
    out.row(ch) = apply_zero_phase(Eigen::VectorXd(signal.row(ch)), taps)
                      .transpose();
  return out;
}

inline std::string taps_csv(const Eigen::VectorXd& taps) {
  CsvWriter csv({"index", "coefficient"});
  for (Eigen::Index i = 0; i < taps.size(); ++i) {
    csv.cell(static_cast<std::size_t>(i)).cell(taps[i]);
    csv.end_row();
  }
  return csv.str();
}

}  // namespace mobipipe
