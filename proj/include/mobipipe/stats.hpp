#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "mobipipe/common.hpp"

namespace mobipipe {

enum class PMethod { Exact, NormalApprox, TDist };

struct TestResult {
  double statistic = 0.0;
  double z_or_t = std::numeric_limits<double>::quiet_NaN();
  double p_value = 1.0;
  PMethod method = PMethod::Exact;
  int n_effective = 0;
};

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// Acklam's rational approximation plus one Halley step.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParamError("quantile needs p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1.0 + x * u / 2.0);
}

namespace stats_detail {

inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16, kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace stats_detail

inline double betainc_reg(double a, double b, double x) {
  if (a <= 0 || b <= 0) throw ParamError("betainc_reg needs a,b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0))
    return bt * stats_detail::betacf(a, b, x) / a;
  return 1.0 - bt * stats_detail::betacf(b, a, 1.0 - x) / b;
}

inline double t_two_sided_p(double t, double df) {
  if (df <= 0) throw ParamError("df must be positive");
  const double p = betainc_reg(df / 2.0, 0.5, df / (df + t * t));
  return std::clamp(p, 0.0, 1.0);
}

// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed rank
// ---------------------------------------------------------------------------

constexpr int kWilcoxonExactMaxN = 25;

inline TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                       double mu0 = 0.0) {
  std::vector<double> d;
  for (double v : x)
    if (v != mu0) d.push_back(v - mu0);
  const int n = static_cast<int>(d.size());
  if (n == 0)
    throw UndefinedTestError("all values equal the null location");

  std::vector<double> absd(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) absd[i] = std::abs(d[i]);
  const std::vector<double> ranks = average_ranks(absd);

  double w_plus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) w_plus += ranks[i];

  TestResult r;
  r.statistic = w_plus;
  r.n_effective = n;

  if (n <= kWilcoxonExactMaxN) {
    // Ranks doubled so tied (half-integer) ranks stay integral; the null
    // distribution over sign assignments follows by dynamic programming.
    std::vector<long long> dr(d.size());
    long long total = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      dr[i] = std::llround(2.0 * ranks[i]);
      total += dr[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long long reach = 0;
    for (long long rk : dr) {
      reach += rk;
      for (long long s = reach; s >= rk; --s)
        counts[static_cast<std::size_t>(s)] +=
            counts[static_cast<std::size_t>(s - rk)];
    }
    const double denom = std::pow(2.0, n);
    const long long w2 = std::llround(2.0 * w_plus);
    double ple = 0.0, pge = 0.0;
    for (long long s = 0; s <= total; ++s) {
      if (s <= w2) ple += counts[static_cast<std::size_t>(s)];
      if (s >= w2) pge += counts[static_cast<std::size_t>(s)];
    }
    ple /= denom;
    pge /= denom;
    r.p_value = std::min(1.0, 2.0 * std::min(ple, pge));
    r.method = PMethod::Exact;
    return r;
  }

  const double mean = n * (n + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = absd;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0) throw UndefinedTestError("degenerate rank variance");
  const double delta = w_plus - mean;
  const double cc = std::abs(delta) > 0.5 ? 0.5 : std::abs(delta);
  const double z = (delta - (delta > 0 ? cc : -cc)) / std::sqrt(var);
  r.z_or_t = z;
  r.p_value = std::clamp(2.0 * (1.0 - normal_cdf(std::abs(z))), 0.0, 1.0);
  r.method = PMethod::NormalApprox;
  return r;
}

// ---------------------------------------------------------------------------
// one-sample t
// ---------------------------------------------------------------------------

inline TestResult one_sample_t(const std::vector<double>& x, double mu0 = 0.0) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw ParamError("t-test needs at least 2 values");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  if (sd == 0.0) throw UndefinedTestError("zero variance sample");
  TestResult r;
  r.statistic = (mean - mu0) / (sd / std::sqrt(static_cast<double>(n)));
  r.z_or_t = r.statistic;
  r.p_value = t_two_sided_p(r.statistic, n - 1.0);
  r.method = PMethod::TDist;
  r.n_effective = n;
  return r;
}

// ---------------------------------------------------------------------------
// point-biserial correlation
// ---------------------------------------------------------------------------

inline double point_biserial(const std::vector<int>& labels,
                             const std::vector<double>& x) {
  if (labels.size() != x.size()) throw ParamError("label/value size mismatch");
  const int n = static_cast<int>(x.size());
  if (n < 3) throw ParamError("point-biserial needs n >= 3");
  int n1 = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ParamError("labels must be 0 or 1");
    n1 += l;
  }
  if (n1 == 0 || n1 == n)
    throw UndefinedTestError("both label classes must be present");
  double mx = 0.0, ml = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    ml += labels[i];
  }
  mx /= n;
  ml /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dl = labels[i] - ml;
    sxy += dx * dl;
    sxx += dx * dx;
    syy += dl * dl;
  }
  if (sxx == 0.0) throw UndefinedTestError("values have zero variance");
  return sxy / std::sqrt(sxx * syy);
}

inline TestResult point_biserial_test(const std::vector<int>& labels,
                                      const std::vector<double>& x) {
  TestResult r;
  r.statistic = point_biserial(labels, x);
  r.n_effective = static_cast<int>(x.size());
  const double df = r.n_effective - 2.0;
  const double r2 = r.statistic * r.statistic;
  if (r2 >= 1.0) {
    r.z_or_t = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
  } else {
    r.z_or_t = r.statistic * std::sqrt(df / (1.0 - r2));
    r.p_value = t_two_sided_p(r.z_or_t, df);
  }
  r.method = PMethod::TDist;
  return r;
}

inline double r_squared(double r) {
  if (!(std::abs(r) <= 1.0)) throw ParamError("|r| must be at most 1");
  return r * r;
}

// ---------------------------------------------------------------------------
// exact binomial
// ---------------------------------------------------------------------------

enum class BinomialTail { Lower, Upper, TwoSided };

inline double binomial_pmf(int k, int n, double p0) {
  const double lp = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                    std::lgamma(n - k + 1.0) + k * std::log(p0) +
                    (n - k) * std::log1p(-p0);
  return std::exp(lp);
}

inline TestResult binomial_exact(int k, int n, double p0 = 0.5,
                                 BinomialTail tail = BinomialTail::TwoSided) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw ParamError("p0 must be in (0,1)");
  if (k < 0 || k > n || n <= 0) throw ParamError("need 0 <= k <= n, n > 0");
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int j = 0; j <= n; ++j) pmf[static_cast<std::size_t>(j)] = binomial_pmf(j, n, p0);
  double p = 0.0;
  switch (tail) {
    case BinomialTail::Lower:
      for (int j = 0; j <= k; ++j) p += pmf[static_cast<std::size_t>(j)];
      break;
    case BinomialTail::Upper:
      for (int j = k; j <= n; ++j) p += pmf[static_cast<std::size_t>(j)];
      break;
    case BinomialTail::TwoSided: {
      const double pk = pmf[static_cast<std::size_t>(k)] * (1.0 + 1e-10);
      for (int j = 0; j <= n; ++j)
        if (pmf[static_cast<std::size_t>(j)] <= pk)
          p += pmf[static_cast<std::size_t>(j)];
      break;
    }
  }
  TestResult r;
  r.statistic = k;
  r.p_value = std::clamp(p, 0.0, 1.0);
  r.method = PMethod::Exact;
  r.n_effective = n;
  return r;
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk (Royston's AS R94 approximation)
// ---------------------------------------------------------------------------

inline TestResult shapiro_wilk(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  if (n < 3 || n > 5000) throw ParamError("Shapiro-Wilk needs 3 <= n <= 5000");
  std::vector<double> s = x;
  std::sort(s.begin(), s.end());
  if (s.front() == s.back()) throw UndefinedTestError("constant sample");

  std::vector<double> m(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    m[static_cast<std::size_t>(i - 1)] =
        normal_quantile((i - 0.375) / (n + 0.25));
  double mm = 0.0;
  for (double v : m) mm += v * v;

  const double u = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> a(static_cast<std::size_t>(n));
  const double rsqrt_mm = 1.0 / std::sqrt(mm);
  if (n == 3) {
    a[0] = std::numbers::sqrt2 / 2.0;
    a[1] = 0.0;
    a[2] = -a[0];
  } else {
    const double c_n = m[static_cast<std::size_t>(n - 1)] * rsqrt_mm;
    const double an =
        c_n + 0.221157 * u - 0.147981 * u * u - 2.071190 * u * u * u +
        4.434685 * u * u * u * u - 2.706056 * u * u * u * u * u;
    double phi;
    if (n > 5) {
      const double c_n1 = m[static_cast<std::size_t>(n - 2)] * rsqrt_mm;
      const double an1 =
          c_n1 + 0.042981 * u - 0.293762 * u * u - 1.752461 * u * u * u +
          5.682633 * u * u * u * u - 3.582633 * u * u * u * u * u;
      phi = (mm - 2.0 * m[static_cast<std::size_t>(n - 1)] *
                       m[static_cast<std::size_t>(n - 1)] -
             2.0 * m[static_cast<std::size_t>(n - 2)] *
                 m[static_cast<std::size_t>(n - 2)]) /
            (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      a[static_cast<std::size_t>(n - 1)] = an;
      a[static_cast<std::size_t>(n - 2)] = an1;
      a[0] = -an;
      a[1] = -an1;
      for (int i = 3; i <= n - 2; ++i)
        a[static_cast<std::size_t>(i - 1)] =
            m[static_cast<std::size_t>(i - 1)] / std::sqrt(phi);
    } else {
      phi = (mm - 2.0 * m[static_cast<std::size_t>(n - 1)] *
                       m[static_cast<std::size_t>(n - 1)]) /
            (1.0 - 2.0 * an * an);
      a[static_cast<std::size_t>(n - 1)] = an;
      a[0] = -an;
      for (int i = 2; i <= n - 1; ++i)
        a[static_cast<std::size_t>(i - 1)] =
            m[static_cast<std::size_t>(i - 1)] / std::sqrt(phi);
    }
  }

  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += a[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
    den += (s[static_cast<std::size_t>(i)] - mean) *
           (s[static_cast<std::size_t>(i)] - mean);
  }
  const double w = num * num / den;

  TestResult r;
  r.statistic = w;
  r.n_effective = n;
  if (n == 3) {
    const double pi6 = 6.0 / std::numbers::pi;
    const double stqr = std::asin(std::sqrt(0.75));
    r.p_value = std::clamp(
        pi6 * (std::asin(std::sqrt(std::clamp(w, 0.0, 1.0))) - stqr), 0.0, 1.0);
    r.method = PMethod::Exact;
    return r;
  }
  double z, mu, sigma;
  if (n <= 11) {
    const double g = -2.273 + 0.459 * n;
    mu = 0.5440 - 0.39978 * n + 0.025054 * n * n - 0.0006714 * n * n * n;
    sigma = std::exp(1.3822 - 0.77857 * n + 0.062767 * n * n -
                     0.0020322 * n * n * n);
    z = (-std::log(g - std::log1p(-w)) - mu) / sigma;
  } else {
    const double ln = std::log(static_cast<double>(n));
    mu = -1.5861 - 0.31082 * ln - 0.083751 * ln * ln + 0.0038915 * ln * ln * ln;
    sigma = std::exp(-0.4803 - 0.082676 * ln + 0.0030302 * ln * ln);
    z = (std::log1p(-w) - mu) / sigma;
  }
  r.z_or_t = z;
  r.p_value = std::clamp(1.0 - normal_cdf(z), 0.0, 1.0);
  r.method = PMethod::NormalApprox;
  return r;
}

// ---------------------------------------------------------------------------
// Benjamini-Hochberg FDR
// ---------------------------------------------------------------------------

struct FdrResult {
  std::vector<bool> significant;
  std::vector<double> adjusted;
};

inline FdrResult bh_fdr(const std::vector<double>& p, double q = 0.05) {
  const std::size_t m = p.size();
  if (m == 0) throw ParamError("empty p-value list");
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw ParamError("p-values must lie in [0,1]");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  std::size_t cutoff = 0;  // 1-based index of the largest passing rank
  for (std::size_t i = 1; i <= m; ++i)
    if (p[order[i - 1]] <=
        static_cast<double>(i) * q / static_cast<double>(m))
      cutoff = i;

  std::vector<double> adj_sorted(m);
  double running = 1.0;
  for (std::size_t i = m; i >= 1; --i) {
    const double v =
        std::min(1.0, static_cast<double>(m) * p[order[i - 1]] /
                          static_cast<double>(i));
    running = std::min(running, v);
    adj_sorted[i - 1] = running;
  }

  FdrResult r;
  r.significant.assign(m, false);
  r.adjusted.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    r.adjusted[order[i]] = adj_sorted[i];
    r.significant[order[i]] = (i + 1) <= cutoff;
  }
  return r;
}

}  // namespace mobipipe
