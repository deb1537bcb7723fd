#include "cead/decision.hpp"

#include "cead/common.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace cead {

namespace {

void check_weights(const std::array<double, 4>& w) {
  double sum = 0;
  for (double v : w) {
    if (!(v >= 0))
      fail(ErrorKind::Validation, "reaction weights must be non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    fail(ErrorKind::Validation, "reaction weights must sum to 1");
}

Eigen::VectorXd to_vec(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

// Aggregate matrix for the leave-one-out model: row per subject, column per
// cluster, each entry the weighted mean lag rise.
Eigen::MatrixXd aggregate_matrix(std::span<const std::vector<ReactionStat>> stats,
                                 const std::array<double, 4>& weights,
                                 std::size_t k) {
  Eigen::MatrixXd x(Eigen::Index(stats.size()), Eigen::Index(k));
  for (std::size_t i = 0; i < stats.size(); ++i)
    for (std::size_t c = 0; c < k; ++c)
      x(Eigen::Index(i), Eigen::Index(c)) = weighted_aggregate(stats[i][c], weights);
  return x;
}

} // namespace

ReactionStat reaction_stat(const Eigen::VectorXd& z, const EventTable& events,
                           double tr_s, const std::array<double, 4>& weights,
                           std::string subject_id, int cluster_id) {
  if (!(tr_s > 0))
    fail(ErrorKind::Validation, "reaction_stat: repetition time must be positive");
  if (events.rows.empty()) fail(ErrorKind::Validation, "reaction_stat: no events");
  if (!z.allFinite()) fail(ErrorKind::NonFinite, "reaction_stat: non-finite series");
  check_weights(weights);

  const std::int64_t nt = z.size();
  std::vector<std::array<double, 4>> rows;
  int excluded = 0;
  for (const Event& ev : events.rows) {
    if (!(ev.onset_s >= 0))
      fail(ErrorKind::Validation, "reaction_stat: negative event onset");
    const auto r = std::int64_t(std::floor(ev.onset_s / tr_s));
    if (r + 4 >= nt) { // four post-onset samples are required
      ++excluded;
      continue;
    }
    rows.push_back({z(r + 1) - z(r), z(r + 2) - z(r), z(r + 3) - z(r), z(r + 4) - z(r)});
  }
  if (rows.empty())
    fail(ErrorKind::Validation,
         "reaction_stat: no event has the full 4-sample lookahead");

  ReactionStat st;
  st.subject_id = std::move(subject_id);
  st.cluster_id = cluster_id;
  st.weights = weights;
  st.lag_deltas.resize(Eigen::Index(rows.size()), 4);
  st.per_event.reserve(rows.size());
  for (std::size_t e = 0; e < rows.size(); ++e) {
    double delta = 0;
    for (int tau = 0; tau < 4; ++tau) {
      st.lag_deltas(Eigen::Index(e), tau) = rows[e][std::size_t(tau)];
      delta += weights[std::size_t(tau)] * rows[e][std::size_t(tau)];
    }
    st.per_event.push_back(delta);
  }
  st.n_events_used = int(rows.size());
  st.n_events_excluded = excluded;
  st.aggregate = mean_of(st.per_event);
  return st;
}

double weighted_aggregate(const ReactionStat& stat,
                          const std::array<double, 4>& weights) {
  check_weights(weights);
  if (stat.lag_deltas.rows() == 0)
    fail(ErrorKind::Validation, "weighted_aggregate: empty reaction");
  const Eigen::RowVector4d colmeans = stat.lag_deltas.colwise().mean();
  double agg = 0;
  for (int tau = 0; tau < 4; ++tau) agg += weights[std::size_t(tau)] * colmeans(tau);
  return agg;
}

RiskRegression fit_risk_regression(std::span<const double> phi,
                                   const Eigen::MatrixXd& x,
                                   bool with_intercept) {
  const auto n = Eigen::Index(phi.size());
  if (x.rows() != n)
    fail(ErrorKind::Validation, "fit_risk_regression: subject count mismatch");
  const Eigen::Index k = x.cols();
  if (k < 1) fail(ErrorKind::Validation, "fit_risk_regression: no regressors");
  if (n < k + (with_intercept ? 1 : 0) + 1)
    fail(ErrorKind::Validation, "fit_risk_regression: too few subjects");

  Eigen::MatrixXd design;
  if (with_intercept) {
    design.resize(n, k + 1);
    design.leftCols(k) = x;
    design.col(k).setOnes();
  } else {
    design = x;
  }
  const OlsFit fit = ols(to_vec(phi), design, with_intercept);

  RiskRegression out;
  out.beta = fit.beta;
  out.se = fit.se;
  out.t = fit.t;
  out.p = fit.p;
  out.r2 = fit.r2;
  out.adj_r2 = fit.adj_r2;
  out.df = fit.df;
  out.with_intercept = with_intercept;
  return out;
}

LooResult loo_predict(std::span<const double> phi,
                      std::span<const std::vector<ReactionStat>> stats,
                      const std::array<double, 4>& weights) {
  const std::size_t n = phi.size();
  if (n < 4) fail(ErrorKind::Validation, "loo_predict: need at least 4 subjects");
  if (stats.size() != n)
    fail(ErrorKind::Validation, "loo_predict: subject count mismatch");
  const std::size_t k = stats[0].size();
  if (k < 1) fail(ErrorKind::Validation, "loo_predict: no regressor clusters");
  for (const auto& s : stats)
    if (s.size() != k)
      fail(ErrorKind::Validation, "loo_predict: ragged cluster counts");
  if (n < k + 2)
    fail(ErrorKind::Validation, "loo_predict: too few subjects for the fold df");

  const Eigen::MatrixXd x = aggregate_matrix(stats, weights, k);
  if (!x.allFinite()) fail(ErrorKind::NonFinite, "loo_predict: non-finite aggregates");

  LooResult out;
  out.points.reserve(n);
  const auto ni = Eigen::Index(n), ki = Eigen::Index(k);
  Eigen::MatrixXd x_fold(ni - 1, ki);
  Eigen::VectorXd y_fold(ni - 1);
  double abs_err = 0;
  for (Eigen::Index i = 0; i < ni; ++i) {
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < ni; ++j) {
      if (j == i) continue;
      x_fold.row(r) = x.row(j);
      y_fold(r) = phi[std::size_t(j)];
      ++r;
    }
    const OlsFit fit = ols(y_fold, x_fold, false);
    const Eigen::VectorXd xi = x.row(i).transpose();
    const double pred = xi.dot(fit.beta);
    const double var_pred = fit.sigma2 * (1.0 + xi.dot(fit.xtx_inv * xi));
    const double margin = t_quantile(0.975, fit.df) * std::sqrt(std::max(var_pred, 0.0));
    LooPoint pt;
    pt.phi_true = phi[std::size_t(i)];
    pt.phi_pred = pred;
    pt.lo = pred - margin;
    pt.hi = pred + margin;
    // a point on the boundary counts as covered; the slack only absorbs
    // floating-point rounding when the interval degenerates to a point
    const double tol = 1e-9 * std::max({1.0, std::abs(pred), std::abs(pt.phi_true)});
    pt.inside = pt.phi_true >= pt.lo - tol && pt.phi_true <= pt.hi + tol;
    abs_err += std::abs(pred - pt.phi_true);
    out.points.push_back(pt);
  }
  out.mae = abs_err / double(n);
  return out;
}

WeightSearch optimize_weights(std::span<const double> phi,
                              std::span<const std::vector<ReactionStat>> stats,
                              std::int64_t iters, std::uint64_t seed) {
  if (iters < 1) fail(ErrorKind::Validation, "optimize_weights: need at least one draw");

  WeightSearch best;
  best.weights = {0.25, 0.25, 0.25, 0.25};
  best.mae = loo_predict(phi, stats, best.weights).mae;
  best.uniform_mae = best.mae;
  best.chosen_iter = 0;

  Rng rng(derive_seed(seed, "decision.weights"));
  for (std::int64_t it = 1; it <= iters; ++it) {
    const std::vector<double> d = rng.dirichlet_flat(4);
    const std::array<double, 4> w{d[0], d[1], d[2], d[3]};
    const double mae = loo_predict(phi, stats, w).mae;
    if (mae < best.mae) {
      best.mae = mae;
      best.weights = w;
      best.chosen_iter = std::uint64_t(it);
    }
  }
  return best;
}

WeightSearch optimize_weights(std::span<const double> phi,
                              std::span<const std::vector<Eigen::VectorXd>> z_series,
                              const EventTable& events, double tr_s,
                              std::int64_t iters, std::uint64_t seed) {
  if (z_series.size() != phi.size())
    fail(ErrorKind::Validation, "optimize_weights: subject count mismatch");
  const std::array<double, 4> uniform{0.25, 0.25, 0.25, 0.25};
  std::vector<std::vector<ReactionStat>> stats;
  stats.reserve(z_series.size());
  for (std::size_t i = 0; i < z_series.size(); ++i) {
    std::vector<ReactionStat> per_subject;
    per_subject.reserve(z_series[i].size());
    for (std::size_t c = 0; c < z_series[i].size(); ++c)
      per_subject.push_back(
          reaction_stat(z_series[i][c], events, tr_s, uniform, {}, int(c)));
    stats.push_back(std::move(per_subject));
  }
  return optimize_weights(phi, stats, iters, seed);
}

} // namespace cead
