#pragma once
// Stimulus-response statistics on extracted loading series, the risk-attitude
// regression, leave-one-out forecasting with prediction intervals, and
// Monte-Carlo optimization of the post-stimulus weighting.

#include "cead/stats.hpp"
#include "cead/volume.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cead {

// Post-stimulus reaction of one loading series to one event schedule.
//
// For an event with onset index r = floor(onset_s / tr_s) the reaction is
//   delta_w = sum_tau w_tau * (Z[r + tau] - Z[r]),  tau = 1..4,
// i.e. a weighted rise over the four samples after onset. Events whose
// four-sample lookahead runs past the end of the series are excluded and
// counted; the aggregate is the mean over the included events only.
struct ReactionStat {
  std::string subject_id;
  int cluster_id = -1;
  std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25}; // simplex
  Eigen::MatrixXd lag_deltas;    // included events x 4: Z[r+tau] - Z[r]
  std::vector<double> per_event; // delta_w per included event
  double aggregate = 0;          // mean of per_event
  int n_events_used = 0;
  int n_events_excluded = 0;
};

// Weights must be non-negative and sum to 1 within 1e-12.
ReactionStat reaction_stat(const Eigen::VectorXd& z, const EventTable& events,
                           double tr_s, const std::array<double, 4>& weights,
                           std::string subject_id = {}, int cluster_id = -1);

// The aggregate the given weights would produce from an already computed
// reaction (the per-event lag differences do not depend on the weights).
double weighted_aggregate(const ReactionStat& stat,
                          const std::array<double, 4>& weights);

// OLS of per-subject risk attitudes on reaction aggregates. With an intercept
// it is appended as the last coefficient; without one, R-squared and its
// adjusted form use the uncentered total sum of squares.
struct RiskRegression {
  Eigen::VectorXd beta; // regressors in input order, then intercept if any
  Eigen::VectorXd se, t, p;
  double r2 = 0, adj_r2 = 0;
  int df = 0;
  bool with_intercept = false;
};

RiskRegression fit_risk_regression(std::span<const double> phi,
                                   const Eigen::MatrixXd& x,
                                   bool with_intercept);

struct LooPoint {
  double phi_true = 0;
  double phi_pred = 0;
  double lo = 0, hi = 0; // 95% prediction interval
  bool inside = false;
};

struct LooResult {
  std::vector<LooPoint> points;
  double mae = 0;
};

// Leave-one-out forecasting of each subject's attitude from the others, on
// the no-intercept model over the supplied per-subject reactions (one per
// regressor cluster, same count for every subject), re-weighted with the
// given weights. The prediction interval uses the usual OLS predictive
// variance at the held-out point.
LooResult loo_predict(std::span<const double> phi,
                      std::span<const std::vector<ReactionStat>> stats,
                      const std::array<double, 4>& weights);

struct WeightSearch {
  std::array<double, 4> weights{};
  double mae = 0;         // leave-one-out MAE at the returned weights
  double uniform_mae = 0; // baseline at (1/4, 1/4, 1/4, 1/4)
  std::uint64_t chosen_iter = 0; // 0 = uniform baseline, i = i-th draw
};

// Samples `iters` weight vectors uniformly on the simplex and returns the
// candidate with the smallest leave-one-out MAE. The uniform vector is always
// evaluated first, so the result never does worse than it; ties keep the
// earliest candidate, making the search deterministic in the seed.
WeightSearch optimize_weights(std::span<const double> phi,
                              std::span<const std::vector<ReactionStat>> stats,
                              std::int64_t iters, std::uint64_t seed);

// Convenience overload that builds the reactions from raw loading series
// (z_series[subject][cluster]) and the event schedule.
WeightSearch optimize_weights(std::span<const double> phi,
                              std::span<const std::vector<Eigen::VectorXd>> z_series,
                              const EventTable& events, double tr_s,
                              std::int64_t iters, std::uint64_t seed);

} // namespace cead
