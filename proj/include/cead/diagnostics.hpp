#pragma once
// Stationarity and dependence diagnostics for loading series: KPSS and
// augmented Dickey-Fuller statistics, sample autocorrelation, and trailing
// rolling-window correlation.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace cead {

// Truncation ell = floor(4 * (T/100)^(1/4)), the usual Bartlett-window
// default for long-run variance estimation.
int default_lag_truncation(std::int64_t t_len);

// Critical values at the 10% / 5% / 1% levels.
struct KpssThresholds {
  double pct10 = 0, pct5 = 0, pct1 = 0;
};

// Level-stationarity table (the canonical set for the statistic computed
// here with detrend = false).
inline constexpr KpssThresholds kKpssLevelThresholds{0.347, 0.463, 0.739};
// Trend-stationarity table; some sources print this set even for level
// reports, so it stays available as a configurable choice.
inline constexpr KpssThresholds kKpssTrendThresholds{0.119, 0.146, 0.216};

// KPSS statistic: partial sums of the residuals from a constant (detrend =
// false) or a linear trend (detrend = true), scaled by the Bartlett long-run
// variance at the given truncation. lag_truncation < 0 selects the default.
// Requires T >= 20 and a non-constant series.
double kpss(std::span<const double> y, int lag_truncation = -1,
            bool detrend = false);

// No-constant augmented Dickey-Fuller t-statistic on gamma in
//   dy_t = gamma * y_{t-1} + sum_j delta_j * dy_{t-j} + e_t.
// Critical values for this specification: -1.61 / -1.94 / -2.58.
double adf(std::span<const double> y, int lags);

inline constexpr std::array<double, 3> kAdfCriticalValues{-1.61, -1.94, -2.58};

// Sample autocorrelation for lags 0..max_lag; result[0] == 1.
std::vector<double> acf(std::span<const double> y, int max_lag);

// Pearson correlation over every trailing window; values has length
// T - window + 1, aligned so values[i] covers samples [i, i + window).
// Windows where either side is constant are flagged undefined and carry NaN.
struct RollingCorr {
  int window = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> defined;
};

RollingCorr rolling_corr(std::span<const double> a, std::span<const double> b,
                         int window);

struct DiagOptions {
  int kpss_lag = -1; // < 0: default truncation
  bool kpss_detrend = false;
  KpssThresholds kpss_thresholds = kKpssLevelThresholds;
  int adf_lags = -1; // < 0: default truncation
  int acf_max_lag = 40;
};

struct DiagnosticsReport {
  double kpss_stat = 0;
  int kpss_lag = 0;
  bool kpss_detrend = false;
  KpssThresholds kpss_thresholds;
  double adf_stat = 0;
  int adf_lags = 0;
  std::array<double, 3> adf_critical = kAdfCriticalValues;
  std::vector<double> acf;
};

DiagnosticsReport diagnose(std::span<const double> y, const DiagOptions& opts = {});

} // namespace cead
