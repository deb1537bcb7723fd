#include "cead/diagnostics.hpp"

#include "cead/common.hpp"
#include "cead/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cead {

namespace {

void check_series(std::span<const double> y, const char* who) {
  if (y.size() < 20) fail(ErrorKind::Validation, std::string(who) + ": need at least 20 samples");
  for (double v : y)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, std::string(who) + ": non-finite sample");
  const double first = y[0];
  bool varies = false;
  for (double v : y)
    if (v != first) {
      varies = true;
      break;
    }
  if (!varies) fail(ErrorKind::Validation, std::string(who) + ": constant series");
}

} // namespace

int default_lag_truncation(std::int64_t t_len) {
  return int(std::floor(4.0 * std::pow(double(t_len) / 100.0, 0.25)));
}

double kpss(std::span<const double> y, int lag_truncation, bool detrend) {
  check_series(y, "kpss");
  const auto t_len = std::int64_t(y.size());
  const int ell = lag_truncation < 0 ? default_lag_truncation(t_len) : lag_truncation;
  if (ell >= t_len) fail(ErrorKind::Validation, "kpss: truncation exceeds the series");

  // residuals from a constant or from a linear trend
  std::vector<double> e(y.size());
  if (!detrend) {
    double mean = 0;
    for (double v : y) mean += v;
    mean /= double(t_len);
    for (std::size_t i = 0; i < y.size(); ++i) e[i] = y[i] - mean;
  } else {
    Eigen::MatrixXd x(t_len, 2);
    Eigen::VectorXd yy(t_len);
    for (std::int64_t i = 0; i < t_len; ++i) {
      x(i, 0) = double(i + 1);
      x(i, 1) = 1.0;
      yy(i) = y[std::size_t(i)];
    }
    const OlsFit fit = ols(yy, x, true);
    for (std::int64_t i = 0; i < t_len; ++i) e[std::size_t(i)] = fit.resid(i);
  }

  double cum = 0, s2_sum = 0;
  for (double v : e) {
    cum += v;
    s2_sum += cum * cum;
  }

  // Bartlett long-run variance
  double lrv = 0;
  for (double v : e) lrv += v * v;
  lrv /= double(t_len);
  for (int h = 1; h <= ell; ++h) {
    double gamma = 0;
    for (std::int64_t t = h; t < t_len; ++t)
      gamma += e[std::size_t(t)] * e[std::size_t(t - h)];
    gamma /= double(t_len);
    lrv += 2.0 * (1.0 - double(h) / double(ell + 1)) * gamma;
  }
  if (!(lrv > 0)) fail(ErrorKind::Numerical, "kpss: long-run variance is not positive");

  return s2_sum / (double(t_len) * double(t_len) * lrv);
}

double adf(std::span<const double> y, int lags) {
  check_series(y, "adf");
  if (lags < 0) fail(ErrorKind::Validation, "adf: negative lag order");
  const auto t_len = std::int64_t(y.size());
  const std::int64_t m = t_len - 1 - lags; // usable regression rows
  if (m < lags + 10)
    fail(ErrorKind::Validation, "adf: too few observations for the lag order");

  Eigen::VectorXd dy(m);
  Eigen::MatrixXd x(m, 1 + lags);
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t t = i + 1 + lags; // index of y_t
    dy(i) = y[std::size_t(t)] - y[std::size_t(t - 1)];
    x(i, 0) = y[std::size_t(t - 1)];
    for (int j = 1; j <= lags; ++j)
      x(i, j) = y[std::size_t(t - j)] - y[std::size_t(t - j - 1)];
  }
  const OlsFit fit = ols(dy, x, false);
  return fit.t(0);
}

std::vector<double> acf(std::span<const double> y, int max_lag) {
  check_series(y, "acf");
  if (max_lag < 0) fail(ErrorKind::Validation, "acf: negative maximum lag");
  if (std::size_t(max_lag) >= y.size())
    fail(ErrorKind::Validation, "acf: maximum lag must be below the series length");

  const auto t_len = std::int64_t(y.size());
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(t_len);

  double gamma0 = 0;
  for (double v : y) gamma0 += (v - mean) * (v - mean);
  if (!(gamma0 > 0)) fail(ErrorKind::Validation, "acf: zero variance");

  std::vector<double> r(std::size_t(max_lag) + 1, 1.0);
  for (int h = 1; h <= max_lag; ++h) {
    double g = 0;
    for (std::int64_t t = h; t < t_len; ++t)
      g += (y[std::size_t(t)] - mean) * (y[std::size_t(t - h)] - mean);
    r[std::size_t(h)] = g / gamma0;
  }
  return r;
}

RollingCorr rolling_corr(std::span<const double> a, std::span<const double> b,
                         int window) {
  if (a.size() != b.size())
    fail(ErrorKind::Validation, "rolling_corr: length mismatch");
  if (window < 3) fail(ErrorKind::Validation, "rolling_corr: window must be at least 3");
  if (std::size_t(window) > a.size())
    fail(ErrorKind::Validation, "rolling_corr: window exceeds the series");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      fail(ErrorKind::NonFinite, "rolling_corr: non-finite sample");

  RollingCorr out;
  out.window = window;
  const std::size_t n_win = a.size() - std::size_t(window) + 1;
  out.values.reserve(n_win);
  out.defined.reserve(n_win);
  for (std::size_t s = 0; s < n_win; ++s) {
    double ma = 0, mb = 0;
    for (int i = 0; i < window; ++i) {
      ma += a[s + std::size_t(i)];
      mb += b[s + std::size_t(i)];
    }
    ma /= window;
    mb /= window;
    double saa = 0, sbb = 0, sab = 0;
    for (int i = 0; i < window; ++i) {
      const double da = a[s + std::size_t(i)] - ma, db = b[s + std::size_t(i)] - mb;
      saa += da * da;
      sbb += db * db;
      sab += da * db;
    }
    if (saa > 0 && sbb > 0) {
      out.values.push_back(sab / std::sqrt(saa * sbb));
      out.defined.push_back(1);
    } else {
      out.values.push_back(std::numeric_limits<double>::quiet_NaN());
      out.defined.push_back(0);
    }
  }
  return out;
}

DiagnosticsReport diagnose(std::span<const double> y, const DiagOptions& opts) {
  DiagnosticsReport rep;
  rep.kpss_lag = opts.kpss_lag < 0 ? default_lag_truncation(std::int64_t(y.size()))
                                   : opts.kpss_lag;
  rep.kpss_detrend = opts.kpss_detrend;
  rep.kpss_thresholds = opts.kpss_thresholds;
  rep.kpss_stat = kpss(y, rep.kpss_lag, opts.kpss_detrend);
  rep.adf_lags = opts.adf_lags < 0 ? default_lag_truncation(std::int64_t(y.size()))
                                   : opts.adf_lags;
  rep.adf_stat = adf(y, rep.adf_lags);
  rep.acf = acf(y, opts.acf_max_lag);
  return rep;
}

} // namespace cead
